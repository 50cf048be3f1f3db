import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from seqopt.nlp_core import EvaluationError
from seqopt.trust_region import (
    SmoothFunctionOracle,
    TrustRegionOptions,
    minimize_second_order,
    solve_tr_subproblem,
)


def model(g, H, s):
    return float(g @ s + 0.5 * s @ H @ s)


def test_interior_newton_step():
    s = solve_tr_subproblem(np.array([1.0, 1.0]), np.diag([1.0, 2.0]), 10.0)
    np.testing.assert_allclose(s, [-1.0, -0.5], rtol=1e-15)


def test_boundary_step_matches_secular_root():
    # frozen from a 50-digit bisection on |(H + lam I)^-1 g| = 0.5
    s = solve_tr_subproblem(np.array([1.0, 1.0]), np.diag([1.0, 2.0]), 0.5)
    np.testing.assert_allclose(s, [-0.40760987206315755, -0.2895758833132627], rtol=1e-12)
    assert model(np.array([1.0, 1.0]), np.diag([1.0, 2.0]), s) == pytest.approx(-0.53025865927809208, rel=1e-13)


def test_hard_case():
    # g orthogonal to the negative eigenvector: s = (+-sqrt(3.75), -0.5), model -2.25
    g, H = np.array([0.0, 1.0]), np.diag([-1.0, 1.0])
    s = solve_tr_subproblem(g, H, 2.0)
    assert np.linalg.norm(s) == pytest.approx(2.0, rel=1e-12)
    assert abs(s[0]) == pytest.approx(np.sqrt(3.75), rel=1e-12)
    assert s[1] == pytest.approx(-0.5, rel=1e-12)
    assert model(g, H, s) == pytest.approx(-2.25, rel=1e-12)


def test_zero_gradient_negative_curvature_moves_to_boundary():
    s = solve_tr_subproblem(np.zeros(2), np.diag([-4.0, 1.0]), 0.3)
    np.testing.assert_allclose(np.abs(s), [0.3, 0.0], atol=1e-15)


def test_nonpositive_radius_rejected():
    with pytest.raises(ValueError):
        solve_tr_subproblem(np.ones(2), np.eye(2), 0.0)


# magnitudes below 1e-100 are flushed to zero: subnormal model data is outside
# the solver's working range, tiny-but-normal gradients are not
entries = st.floats(-5, 5).map(lambda v: 0.0 if abs(v) < 1e-100 else v)


@settings(max_examples=150, deadline=None)
@given(
    hnp.arrays(float, (3, 3), elements=entries),
    hnp.arrays(float, 3, elements=entries | st.floats(-1e-90, 1e-90).filter(lambda v: v == 0 or abs(v) > 1e-200)),
    st.floats(1e-3, 10.0),
    st.integers(0, 2**32 - 1),
)
def test_subproblem_is_globally_optimal(B, g, radius, seed):
    H = 0.5 * (B + B.T)
    s = solve_tr_subproblem(g, H, radius)
    assert np.linalg.norm(s) <= radius * (1 + 1e-10)
    best = model(g, H, s)
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((2000, 3))
    D *= (radius * rng.uniform(size=(2000, 1)) ** (1 / 3)) / np.linalg.norm(D, axis=1, keepdims=True)
    D = np.vstack([D, radius * D / np.linalg.norm(D, axis=1, keepdims=True)])
    vals = D @ g + 0.5 * np.einsum("ij,jk,ik->i", D, H, D)
    scale = 1.0 + np.abs(g).sum() * radius + np.abs(H).sum() * radius**2
    assert best <= vals.min() + 1e-9 * scale


def _oracle(f, g, h):
    return SmoothFunctionOracle(f, g, h)


def saddle():
    return _oracle(
        lambda x: (x[0] ** 2 - 1) ** 2 + x[1] ** 2,
        lambda x: np.array([4 * x[0] * (x[0] ** 2 - 1), 2 * x[1]]),
        lambda x: np.diag([12 * x[0] ** 2 - 4, 2.0]),
    )


def test_escapes_saddle_and_values_never_increase():
    res = minimize_second_order(saddle(), np.zeros(2), 1e-10)
    assert res.converged
    assert abs(abs(res.x_final[0]) - 1) <= 1e-8 and abs(res.x_final[1]) <= 1e-8
    assert res.hess_min_eig > 0
    assert all(b <= a for a, b in zip(res.values, res.values[1:]))


def test_rosenbrock():
    ros = _oracle(
        lambda x: 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2,
        lambda x: np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)]),
        lambda x: np.array([[1200 * x[0] ** 2 - 400 * x[1] + 2, -400 * x[0]], [-400 * x[0], 200.0]]),
    )
    res = minimize_second_order(ros, np.array([-1.2, 1.0]), 1e-9)
    assert res.converged
    np.testing.assert_allclose(res.x_final, [1.0, 1.0], atol=1e-8)


def test_unbounded_objective_reports_divergence():
    lin = _oracle(lambda x: -x[0], lambda x: np.array([-1.0]), lambda x: np.zeros((1, 1)))
    res = minimize_second_order(lin, np.zeros(1), 1e-8)
    assert res.status == "diverged"


def test_iteration_limit():
    res = minimize_second_order(saddle(), np.array([3.0, 3.0]), 1e-12, TrustRegionOptions(max_iter=2))
    assert res.status == "iteration_limit" and res.iterations == 2


def test_region_predicate_keeps_iterates_inside():
    lin = _oracle(lambda x: -x[0], lambda x: np.array([-1.0]), lambda x: np.zeros((1, 1)))
    opts = TrustRegionOptions(region=lambda x: abs(x[0]) <= 0.5, max_iter=200)
    res = minimize_second_order(lin, np.zeros(1), 1e-8, opts)
    assert abs(res.x_final[0]) <= 0.5
    assert not res.converged


def test_non_finite_objective_raises():
    # value turns NaN once the iterate crosses zero, gradient keeps pushing left
    bad = _oracle(lambda x: -x[0] if x[0] > -0.5 else float("nan"),
                  lambda x: np.array([1.0]), lambda x: np.zeros((1, 1)))
    with pytest.raises(EvaluationError):
        minimize_second_order(bad, np.array([0.0]), 1e-8)


def test_roundoff_regime_accepts_gradient_reducing_steps():
    # huge constant offset: predicted decreases are far below ulp(|f|)
    off = 1e12
    q = _oracle(lambda x: off + float(x @ x), lambda x: 2 * x, lambda x: 2 * np.eye(2))
    res = minimize_second_order(q, np.array([1e-3, -2e-3]), 1e-12)
    assert res.converged
    assert all(b <= a for a, b in zip(res.values, res.values[1:]))
