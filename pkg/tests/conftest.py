import pytest

from dividend_hjb import ModelParams, solve

NON_CHEAP = dict(a=0.03, b=0.5, theta=0.4, eta=0.8, beta=0.1, p=0.01)
CHEAP = dict(NON_CHEAP, eta=0.4)


@pytest.fixture(scope="session")
def noncheap_params():
    return ModelParams(**NON_CHEAP)


@pytest.fixture(scope="session")
def cheap_params():
    return ModelParams(**CHEAP)


@pytest.fixture(scope="session")
def noncheap_sol(noncheap_params):
    return solve(noncheap_params)


@pytest.fixture(scope="session")
def cheap_sol(cheap_params):
    return solve(cheap_params)


@pytest.fixture(scope="session", params=["non-cheap", "cheap"])
def sol(request, noncheap_sol, cheap_sol):
    return noncheap_sol if request.param == "non-cheap" else cheap_sol
