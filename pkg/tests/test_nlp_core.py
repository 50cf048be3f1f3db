import numpy as np
import pytest

from seqopt import problemlib
from seqopt.nlp_core import (
    EvaluationError,
    KktTriple,
    NlpProblem,
    active_set,
    check_derivatives,
    feasibility,
    lagrangian_gradient,
    lagrangian_hessian,
)


def _unconstrained(f_value=lambda x: float(x @ x)):
    return NlpProblem("quad", 2, f=f_value, grad_f=lambda x: 2 * x, hess_f=lambda x: 2 * np.eye(2))


def test_empty_constraint_blocks_have_consistent_shapes():
    prob = _unconstrained()
    x = np.array([1.0, 2.0])
    assert prob.h(x).shape == (0,)
    assert prob.jac_h(x).shape == (0, 2)
    assert prob.hess_h(x).shape == (0, 2, 2)
    assert prob.g(x).shape == (0,)
    assert prob.jac_g(x).shape == (0, 2)


def test_non_finite_value_raises_with_context():
    prob = _unconstrained(lambda x: np.nan)
    with pytest.raises(EvaluationError) as info:
        prob.f(np.zeros(2))
    assert info.value.what == "f"


def test_non_finite_gradient_component_is_located():
    prob = NlpProblem("bad", 2, f=lambda x: 0.0, grad_f=lambda x: np.array([0.0, np.inf]),
                      hess_f=lambda x: np.zeros((2, 2)))
    with pytest.raises(EvaluationError) as info:
        prob.grad_f(np.zeros(2))
    assert info.value.index == (1,)


def test_wrong_dimension_is_rejected():
    with pytest.raises(ValueError):
        _unconstrained().f(np.zeros(3))


def test_missing_constraint_callables_rejected():
    with pytest.raises(ValueError):
        NlpProblem("x", 1, f=lambda x: 0.0, grad_f=lambda x: x, hess_f=lambda x: np.eye(1), m=1)


def test_negative_inequality_multiplier_rejected():
    with pytest.raises(ValueError):
        KktTriple(np.zeros(2), np.zeros(0), np.array([-1e-3]))


def test_lagrangian_gradient_vanishes_at_reference_kkt_points():
    for entry in problemlib.entries():
        for t in entry.kkt:
            assert np.linalg.norm(lagrangian_gradient(entry.problem, t)) <= 1e-12


def test_lagrangian_hessian_matches_hand_computation():
    # hyperbola: f = x1 x2, h = |x|^2 - 2, mu = 0.5  ->  [[1, 1], [1, 1]]
    entry = problemlib.get("hyperbola-eq")
    H = lagrangian_hessian(entry.problem, entry.kkt[0])
    np.testing.assert_allclose(H, [[1.0, 1.0], [1.0, 1.0]], atol=1e-15)


def test_active_set_uses_tolerance():
    prob = problemlib.get("example-s3").problem
    x = np.array([1e-3, 0.0])
    assert active_set(prob, x) == [1]
    assert active_set(prob, x, tol_act=1e-2) == [0, 1]


def test_feasibility_measures():
    prob = problemlib.get("eqineq-quad").problem
    fm = feasibility(prob, np.array([1.0, 0.0, 0.0]))
    # h = -2, g = 1
    assert fm.eq_norm == pytest.approx(2.0)
    assert fm.ineq_norm == pytest.approx(1.0)
    assert fm.eq_sq_sum == pytest.approx(4.0)
    assert fm.ineq_viol_sum == pytest.approx(1.0)
    assert not fm.is_zero(1e-6)
    assert feasibility(prob, np.array([2.0, 0.5, 0.5])).is_zero()


def test_check_derivatives_flags_wrong_gradient():
    prob = NlpProblem("wrong", 2, f=lambda x: float(x @ x), grad_f=lambda x: 2.1 * x,
                      hess_f=lambda x: 2 * np.eye(2))
    report = check_derivatives(prob, np.array([1.0, -1.0]))
    # analytic 2.1 vs true 2 at |x_i| = 1, relative to max(1, 2.1)
    assert report.errors["grad f"] == pytest.approx(0.1 / 2.1, rel=1e-6)
    # the Hessian is differenced from the (wrong) gradient: 2 vs 2.1
    assert report.errors["hess f"] == pytest.approx(0.05, rel=1e-6)
    assert report.worst == report.errors["hess f"]


def test_check_derivatives_rejects_bad_step():
    with pytest.raises(ValueError):
        check_derivatives(_unconstrained(), np.zeros(2), fd_step=0.0)
