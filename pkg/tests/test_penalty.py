import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqopt import problemlib
from seqopt.nlp_core import KktTriple, NlpProblem, lagrangian_gradient
from seqopt.penalty import (
    PenaltyParams,
    PreconditionError,
    phi,
    phi_grad,
    phi_hess,
    recover_multipliers,
    run_basic,
    run_modified,
    stop_test,
)

NAMES = problemlib.list_names()


def _fd_grad(fun, x, h=1e-6):
    return np.array([(fun(x + h * e) - fun(x - h * e)) / (2 * h) for e in np.eye(x.size)])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(NAMES), st.integers(0, 2**32 - 1), st.sampled_from([1.0, 10.0, 100.0]))
def test_penalty_derivatives_match_differences(name, seed, rho):
    prob = problemlib.get(name).problem
    x = np.random.default_rng(seed).uniform(-1.5, 1.5, prob.n)
    g = phi_grad(prob, rho, x)
    np.testing.assert_allclose(g, _fd_grad(lambda z: phi(prob, rho, z), x), rtol=1e-5, atol=1e-5 * (1 + rho))
    H = phi_hess(prob, rho, x)
    fd = np.column_stack([(phi_grad(prob, rho, x + 1e-6 * e) - phi_grad(prob, rho, x - 1e-6 * e)) / 2e-6
                          for e in np.eye(prob.n)])
    np.testing.assert_allclose(H, fd, rtol=1e-5, atol=1e-5 * (1 + rho))


def test_quartic_term_is_zero_on_feasible_side():
    prob = problemlib.get("box-ineq").problem
    x = np.array([0.3, 0.2])
    assert phi(prob, 1e6, x) == prob.f(x)
    assert np.all(phi_hess(prob, 1e6, x) == prob.hess_f(x))


def test_recovered_multipliers_close_the_gradient_identity():
    prob = problemlib.get("eqineq-quad").problem
    x = np.array([1.5, 0.4, 0.9])
    mu, omega = recover_multipliers(prob, 50.0, x)
    # h = -0.2, g = 0.5
    np.testing.assert_allclose(mu, [-10.0])
    np.testing.assert_allclose(omega, [50.0 * 0.125])
    lg = lagrangian_gradient(prob, KktTriple(x, mu, omega))
    np.testing.assert_allclose(lg, phi_grad(prob, 50.0, x), atol=1e-13)


def test_schedules():
    p = PenaltyParams(eps0=1e-2, theta=0.5, rho0=10.0, gamma=10.0, x0=np.zeros(1))
    assert [p.rho(k) for k in range(3)] == [10.0, 100.0, 1000.0]
    assert p.eps(2) == 2.5e-3


@pytest.mark.parametrize("bad", [dict(theta=1.0), dict(gamma=1.0), dict(rho0=0.0), dict(eps0=-1.0),
                                 dict(max_outer=0)])
def test_parameter_validation(bad):
    with pytest.raises(ValueError):
        run_basic(problemlib.get("box-ineq").problem, PenaltyParams(x0=np.ones(2), **bad))


def test_modified_method_requires_feasible_start():
    with pytest.raises(PreconditionError):
        run_modified(problemlib.get("box-ineq").problem, PenaltyParams(x0=np.array([-1.0, 0.0])))


def test_basic_penalty_tracks_closed_form_on_equality_problem():
    e = problemlib.get("eqcon-quad")
    tr = run_basic(e.problem, PenaltyParams(x0=e.x0, eps0=1e-11, max_outer=5))
    for r in tr.records:
        np.testing.assert_allclose(r.x, e.closed_form["penalty_x"](r.rho), rtol=1e-10)
        # mu = rho * h = rho * (2 rho/(1+rho) - 2) = -2 rho/(1+rho)
        assert r.mu[0] == pytest.approx(-2 * r.rho / (1 + r.rho), rel=1e-8)


def test_warm_start_branch_bookkeeping():
    e = problemlib.get("circle-ineq")
    tr = run_modified(e.problem, PenaltyParams(x0=e.x0, max_outer=6))
    f0 = e.problem.f(e.x0)
    assert tr.records[0].branch == "x0"
    for prev, cur in zip(tr.records, tr.records[1:]):
        assert cur.branch == prev.extras["next_branch"]
        expected = "warm" if phi(e.problem, cur.rho, prev.x) <= f0 else "x0"
        assert cur.branch == expected
    for r in tr.records:
        assert r.extras["phi"] <= r.extras["f_x0"] == f0


def test_reset_branch_is_taken_when_warm_start_is_too_expensive():
    # f = -x, g = x <= 0, x0 = 0: phi_rho(x) = -x + rho/4 x^4 for x > 0; the
    # minimiser has phi < 0 = f(x0), but at the next rho the same point costs more
    prob = NlpProblem(
        "ramp", 1, f=lambda x: -x[0], grad_f=lambda x: np.array([-1.0]), hess_f=lambda x: np.zeros((1, 1)),
        m=1, g=lambda x: np.array([x[0]]), jac_g=lambda x: np.array([[1.0]]),
        hess_g=lambda x: np.zeros((1, 1, 1)),
    )
    tr = run_modified(prob, PenaltyParams(x0=np.zeros(1), rho0=1.0, gamma=1e4, max_outer=3, eps0=1e-10))
    # rho0 = 1: x = 1, phi = -3/4; next rho = 1e4: phi = -1 + 2500 > 0 -> reset
    assert tr.records[0].extras["next_branch"] == "x0"
    assert tr.records[1].branch == "x0"


def test_stop_test_uses_second_order_information():
    prob = problemlib.get("saddle-escape").problem
    stop, lam = stop_test(prob, KktTriple(np.zeros(2)), 1e-8)
    assert not stop and lam == pytest.approx(-4.0)
    stop, lam = stop_test(prob, KktTriple(np.array([1.0, 0.0])), 1e-8)
    assert stop and lam == pytest.approx(2.0)


def test_mfcq_fail_converges_to_closed_form():
    e = problemlib.get("mfcq-fail")
    tr = run_basic(e.problem, PenaltyParams(x0=e.x0))
    assert tr.status == "converged"
    r = tr.final
    assert abs(r.x[0] - e.closed_form["penalty_x"](r.rho)[0]) <= 1e-6


def test_unbounded_penalty_fails_cleanly():
    e = problemlib.get("example-s3")
    tr = run_basic(e.problem, PenaltyParams(x0=e.x0))
    assert tr.status == "failed" and "diverged" in tr.message
    assert len(tr.records) == 1


def test_floor_stalls_are_flagged_not_fatal():
    e = problemlib.get("eqcon-quad")
    tr = run_basic(e.problem, PenaltyParams(x0=e.x0, max_outer=14))
    stalled = [r for r in tr.records if "inner-stalled" in r.flags]
    assert stalled and tr.status == "max_outer"
    assert "floating-point floor" in tr.message
