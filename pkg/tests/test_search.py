import numpy as np
import pytest
from hypothesis import given, strategies as st

from funkspray import catalog as cat
from funkspray.errors import AnsatzDomainError
from funkspray.geometry import flat_spray, geodesic_spray
from funkspray.jets import euler_residual
from funkspray.sampling import draw_samples
from funkspray.search import (
    SEARCH_DOMAIN,
    VALIDATION_STREAM,
    Ansatz,
    SearchConfig,
    levenberg_marquardt,
    objective,
    search_funk,
)

from conftest import SEED, pt

A2 = Ansatz(2)
SMALL = SearchConfig(restarts=3, max_iter=30, samples=40, validation_samples=40)


def test_objective_exact_solution():
    theta = A2.pack([1, 0], np.zeros((2, 2)), [-1, 0])
    p = draw_samples(SEARCH_DOMAIN, 2, 50, SEED)
    value, r = objective(flat_spray(2), theta, p)
    assert value < 1e-28
    assert r[-1] == 0.0


def test_objective_linear_factor():
    theta = A2.pack([1, 0], np.zeros((2, 2)), [0, 0])
    _, r = objective(flat_spray(2), theta, pt([[0, 0]], [[1, 1]]))
    np.testing.assert_allclose(r, [-1, 0, 0], atol=1e-15)


def test_objective_domain_error():
    theta = A2.pack([1, 0], np.zeros((2, 2)), [-2, 0])
    with pytest.raises(AnsatzDomainError):
        A2.check(theta, radius=SEARCH_DOMAIN.size)
    p = pt([[0.5, 0]], [[1, 0]])
    with pytest.raises(AnsatzDomainError):
        objective(flat_spray(2), theta, p)


def test_jacobian_matches_finite_differences():
    S = geodesic_spray(cat.sphere(2))
    p = draw_samples(SEARCH_DOMAIN, 2, 10, SEED)
    theta = np.random.default_rng(0).uniform(-0.3, 0.3, A2.size)
    _, r, J = objective(S, theta, p, jacobian=True)
    fd = np.empty_like(J)
    h = 1e-6
    for k in range(A2.size):
        e = np.zeros(A2.size)
        e[k] = h
        fd[:, k] = (objective(S, theta + e, p)[1] - objective(S, theta - e, p)[1]) / (2 * h)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-7)


@given(theta=st.lists(st.floats(-0.5, 0.5), min_size=8, max_size=8), lam=st.floats(0.3, 3.0))
def test_ansatz_homogeneous(theta, lam):
    theta = np.array(theta)
    theta[6:] *= 0.5  # keep |w| small enough for |x| <= 0.6
    P = A2.field(theta)
    p = draw_samples(SEARCH_DOMAIN, 2, 10, 1)
    assert np.max(np.abs(euler_residual(P, p, 1))) < 1e-12


def test_lm_on_rosenbrock_residuals():
    def fun(t):
        r = np.array([10 * (t[1] - t[0] ** 2), 1 - t[0]])
        J = np.array([[-20 * t[0], 10.0], [-1.0, 0.0]])
        return r, J

    trace = levenberg_marquardt(fun, [-1.2, 1.0])
    np.testing.assert_allclose(trace.theta, [1, 1], atol=1e-8)
    assert trace.status == "gradient"
    assert all(b < a for a, b in zip(trace.history, trace.history[1:]))


def test_lm_rejects_domain_errors():
    calls = []

    def fun(t):
        calls.append(t.copy())
        if t[0] > 0.5:
            raise AnsatzDomainError("out")
        return np.array([t[0] - 2.0]), np.array([[1.0]])

    trace = levenberg_marquardt(fun, [0.0], max_iter=50)
    assert trace.theta[0] <= 0.5
    assert trace.cost <= 4.0


def test_search_deterministic_and_monotone():
    S = geodesic_spray(cat.sphere(2))
    a = search_funk(S, SMALL, 2)
    b = search_funk(S, SMALL, 2)
    assert a.to_dict() == b.to_dict()
    assert a.seed == SMALL.seed
    assert [r["restart"] for r in a.per_restart] == [0, 1, 2]
    assert a.val_rms == min(r["val_rms"] for r in a.per_restart)


def test_validation_disjoint_from_training():
    train = draw_samples(SEARCH_DOMAIN, 2, 200, SEED)
    val = draw_samples(SEARCH_DOMAIN, 2, 200, SEED, VALIDATION_STREAM)
    ta = {tuple(r) for r in np.concatenate([train.x, train.y], 1)}
    va = {tuple(r) for r in np.concatenate([val.x, val.y], 1)}
    assert not ta & va


def test_flat_search_recovers_solution():
    res = search_funk(flat_spray(2), SearchConfig(restarts=2, samples=60, validation_samples=60), 2)
    assert res.val_rms < 1e-8
    assert res.status == "gradient"
    u, V, w = A2.split(res.theta)
    assert u[0] == pytest.approx(1.0, abs=1e-6)


def test_result_serialises():
    res = search_funk(flat_spray(2), SearchConfig(restarts=1, max_iter=5, samples=20, validation_samples=20), 2)
    d = res.to_dict()
    assert set(d) >= {"theta", "train_rms", "val_sup", "val_rms", "restart", "iterations", "seed"}
    assert len(d["theta"]) == A2.size


@pytest.mark.parametrize("spray", ("sphere", "klein"))
def test_lm_history_monotone_on_funk_objective(spray):
    S = geodesic_spray(cat.metric(spray, 2))
    p = draw_samples(SEARCH_DOMAIN, 2, 40, SEED)
    from funkspray.geometry import connection

    N = connection(S, p).N

    def fun(theta):
        A2.check(theta, p.x, SEARCH_DOMAIN.size)
        _, r, J = objective(S, theta, p, N, jacobian=True)
        return r, J

    theta0 = np.random.default_rng(3).uniform(-0.2, 0.2, A2.size)
    trace = levenberg_marquardt(fun, theta0, max_iter=40)
    assert trace.accepted > 0
    assert all(b < a for a, b in zip(trace.history, trace.history[1:]))
