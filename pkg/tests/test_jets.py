import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from funkspray import catalog as cat
from funkspray.errors import DomainError
from funkspray.jets import (
    Jet,
    PhasePoint,
    ScalarField,
    euler_residual,
    fd_oracle,
    jet_eval,
    lift,
    multi_index,
    ncoef,
    partial,
    sqrt,
)

from conftest import METRIC_NAMES, pt, samples_for


def poly(fn, degree=None):
    return ScalarField(fn, degree)


def all_multi_indices(dim, max_total):
    for mi in itertools.product(range(max_total + 1), repeat=dim):
        if 1 <= sum(mi) <= max_total:
            yield mi


# jet_eval / partial examples ---------------------------------------------------------

def test_square_coefficients():
    f = poly(lambda xs, ys: ys[0] ** 2, 2)
    j = jet_eval(f, pt([0, 0], [3, 1]), 2)
    assert j.value == pytest.approx(9.0)
    assert j.coefficient(multi_index(2, "y1", "y1")) == pytest.approx(1.0)
    assert j.derivative(multi_index(2, "y1", "y1")) == pytest.approx(2.0)


def test_euclidean_norm_first_order():
    j = jet_eval(cat.euclidean(2), pt([0, 0], [3, 4]), 1)
    assert j.value == pytest.approx(5.0)
    assert j.derivative(multi_index(2, "y1")) == pytest.approx(0.6)
    assert j.derivative(multi_index(2, "y2")) == pytest.approx(0.8)


def test_funk_ball_partials_match_fd():
    F = cat.funk_ball(2)
    p = pt([0.2, 0.1], [1, 0.5])
    for mi in all_multi_indices(4, 2):
        exact = partial(F, p, mi)
        approx = fd_oracle(F, p, mi)
        assert approx == pytest.approx(exact, rel=1e-6, abs=1e-6), mi


def test_partial_examples():
    f = poly(lambda xs, ys: xs[0] * ys[1])
    assert partial(f, pt([0.3, 0.2], [1, 2]), multi_index(2, "x1", "y2")) == pytest.approx(1.0)
    F2 = cat.euclidean(2) * cat.euclidean(2)
    assert partial(F2, pt([0.1, 0.4], [0.7, -1.2]), multi_index(2, "y1", "y1")) == pytest.approx(2.0)
    S2 = cat.sphere(2) * cat.sphere(2)
    assert partial(S2, pt([0, 0], [0.7, -1.2]), multi_index(2, "y1", "y1")) == pytest.approx(8.0)


def test_fd_oracle_examples():
    f = poly(lambda xs, ys: ys[0] ** 3, 3)
    assert fd_oracle(f, pt([0, 0], [2, 1]), multi_index(2, "y1", "y1")) == pytest.approx(12.0, abs=1e-6)
    S2 = cat.sphere(2) * cat.sphere(2)
    p = pt([0.1, 0], [1, 0])
    mi = multi_index(2, "x1")
    assert fd_oracle(S2, p, mi) == pytest.approx(partial(S2, p, mi), rel=1e-5)
    K = cat.klein(2)
    p = pt([0.3, 0], [1, 1])
    mi = multi_index(2, "y2")
    assert fd_oracle(K, p, mi) == pytest.approx(partial(K, p, mi), rel=1e-5)


def test_fd_oracle_leaving_domain():
    with pytest.raises(DomainError):
        fd_oracle(cat.klein(2), pt([0.99999, 0], [1, 0]), multi_index(2, "x1"), step=1e-2)


def test_partial_order_four():
    # fourth derivatives are needed by the curvature; compare against closed form
    f = poly(lambda xs, ys: xs[0] ** 2 * ys[0] ** 2 * ys[1])
    p = pt([0.5, 0], [2, 3])
    assert partial(f, p, (2, 0, 2, 0)) == pytest.approx(4 * 3.0)
    assert partial(f, p, (1, 0, 2, 1)) == pytest.approx(2 * 0.5 * 2)


# properties -------------------------------------------------------------------------

@pytest.mark.parametrize("name", METRIC_NAMES)
def test_chain_consistency_with_fd(name):
    F = cat.metric(name, 2)
    p = samples_for(name, count=3, seed=7)
    for mi in all_multi_indices(4, 3):
        exact = partial(F, p, mi)
        approx = fd_oracle(F, p, mi)
        scale = np.maximum(1.0, np.abs(exact))
        assert np.all(np.abs(approx - exact) <= 1e-5 * scale), (name, mi)


coord = st.floats(-0.5, 0.5)
fiber = st.floats(0.5, 2.0)


@given(x1=coord, x2=coord, y1=fiber, y2=st.floats(-2.0, 2.0), pair=st.sampled_from(list(itertools.combinations(METRIC_NAMES, 2))))
def test_product_rule(x1, x2, y1, y2, pair):
    f, g = (cat.metric(n, 2) for n in pair)
    p = pt([x1, x2], [y1, y2])
    lhs = jet_eval(f * g, p, 3).coef
    rhs = (jet_eval(f, p, 3) * jet_eval(g, p, 3)).coef
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", METRIC_NAMES + ("theta", "linear-rational"))
def test_euler_homogeneity(name):
    entry = cat.METRICS.get(name) or cat.CANDIDATES[name]
    f = entry.build(2)
    p = samples_for("funk-ball", count=100)
    vals = jet_eval(f, p, 0).value
    res = euler_residual(f, p, f.degree)
    assert np.all(np.abs(res) <= 1e-10 * (1 + np.abs(vals)))


@given(a=st.floats(0.2, 5.0), b=st.floats(-3.0, 3.0), c=st.floats(-3.0, 3.0))
def test_algebra_identities(a, b, c):
    x = Jet.variable(a, 0, 2, 4) + b * Jet.variable(c, 1, 2, 4)
    x = x * x + 1.0
    one = x * x.reciprocal()
    np.testing.assert_allclose(one.coef[0], 1.0)
    np.testing.assert_allclose(one.coef[1:], 0.0, atol=1e-9 * np.max(np.abs(x.coef)) ** 4)
    r = x.sqrt()
    np.testing.assert_allclose((r * r).coef, x.coef, rtol=1e-10, atol=1e-10 * np.max(np.abs(x.coef)))
    np.testing.assert_allclose((x ** -2 * x ** 2).coef[0], 1.0)


def test_jet_layout():
    assert ncoef(4, 0) == 1
    assert ncoef(4, 2) == 15
    j = Jet.variable(2.0, 1, 4, 3)
    assert j.truncate(1).coef.shape[0] == ncoef(4, 1)
    np.testing.assert_allclose(j.deriv(1).value, 1.0)


def test_domain_errors():
    xs, ys = lift(pt([0, 0], [1, 0]), 2)
    with pytest.raises(DomainError):
        (xs[0] * 1.0).reciprocal()
    with pytest.raises(DomainError):
        sqrt(-ys[0])
    with pytest.raises(DomainError):
        jet_eval(cat.klein(2), pt([1.5, 0], [1, 0]), 1)


def test_phase_point_invariants():
    with pytest.raises(DomainError):
        PhasePoint([0, 0], [0, 0])
    with pytest.raises(ValueError):
        PhasePoint([0], [1])
    p = pt([0.1, 0.2], [1, 2])
    with pytest.raises(ValueError):
        p.x[0] = 3.0


def test_integer_powers_only():
    with pytest.raises(TypeError):
        Jet.variable(1.0, 0, 2, 1) ** 0.5
