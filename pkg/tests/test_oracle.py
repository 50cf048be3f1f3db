import numpy as np
import pytest

from seqopt import problemlib
from seqopt.nlp_core import NlpProblem
from seqopt.oracle import (
    OracleConfig,
    UnsupportedScale,
    regularized_grad,
    regularized_hess,
    regularized_value,
    regularized_penalty_sequence,
    solve_global_in_ball,
)


@pytest.mark.parametrize("delta", [0.0, 1 / 3, 0.5, -0.1])
def test_radius_must_lie_below_one_third(delta):
    with pytest.raises(ValueError):
        OracleConfig(x_bar=np.zeros(1), delta=delta).validate(1)


def test_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        OracleConfig(x_bar=np.zeros(2)).validate(1)


def test_rejects_large_problems():
    n = 5
    prob = NlpProblem("big", n, f=lambda x: float(x @ x), grad_f=lambda x: 2 * x, hess_f=lambda x: 2 * np.eye(n))
    with pytest.raises(UnsupportedScale):
        solve_global_in_ball(prob, OracleConfig(x_bar=np.zeros(n)), 10.0)


def test_regularized_derivatives():
    prob = problemlib.get("example-s3").problem
    x_bar = np.array([0.05, -0.02])
    x = np.array([0.2, 0.1])
    rho = 30.0
    fd = np.array([(regularized_value(prob, x_bar, rho, x + 1e-6 * e) - regularized_value(prob, x_bar, rho, x - 1e-6 * e))
                   / 2e-6 for e in np.eye(2)])
    np.testing.assert_allclose(regularized_grad(prob, x_bar, rho, x), fd, rtol=1e-7)
    fdh = np.column_stack([(regularized_grad(prob, x_bar, rho, x + 1e-6 * e) - regularized_grad(prob, x_bar, rho, x - 1e-6 * e))
                           / 2e-6 for e in np.eye(2)])
    np.testing.assert_allclose(regularized_hess(prob, x_bar, rho, x), fdh, rtol=1e-6, atol=1e-8)


def test_sequence_on_mfcq_fail():
    e = problemlib.get("mfcq-fail")
    tr = regularized_penalty_sequence(e.problem, OracleConfig(x_bar=e.x_bar, k_max=5))
    assert tr.status == "converged" and tr.origin == "oracle"
    eps = [r.eps for r in tr.records]
    assert all(b <= a for a, b in zip(eps, eps[1:]))
    for r in tr.records:
        assert r.extras["grad_identity_gap"] <= 1e-10
        assert r.inner_status == "interior" and not r.flags
        assert r.extras["F"] <= r.extras["F_bar"]


def test_parallel_multistart_is_deterministic():
    e = problemlib.get("example-s3")
    serial = solve_global_in_ball(e.problem, OracleConfig(x_bar=e.x_bar, jobs=1), 1e5)
    threaded = solve_global_in_ball(e.problem, OracleConfig(x_bar=e.x_bar, jobs=3), 1e5)
    np.testing.assert_array_equal(serial.x, threaded.x)
    assert serial.value == threaded.value


def test_minimiser_respects_ball():
    e = problemlib.get("example-s3")
    cfg = OracleConfig(x_bar=e.x_bar, delta=0.1)
    sol = solve_global_in_ball(e.problem, cfg, 10.0)
    assert np.linalg.norm(sol.x - e.x_bar) <= 0.1
