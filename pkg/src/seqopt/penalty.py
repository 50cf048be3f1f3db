"""Quartic penalty function and the basic / warm-start-reset penalty loops.

The penalty is

    phi_rho(x) = f(x) + rho/2 * sum h_j(x)^2 + rho/4 * sum max(0, g_i(x))^4

which is twice continuously differentiable.  Multipliers recovered from an
iterate are ``mu = rho * h(x)`` and ``omega = rho * max(0, g(x))^3``; with these
the penalty gradient coincides with the Lagrangian gradient.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .nlp_core import EvaluationError, KktTriple, NlpProblem, feasibility, lagrangian_hessian
from .optimality import akkt_residuals, build_space, nullspace_basis, second_order_subspace
from .trace import SolverTrace, TraceRecord, feasibility_pair
from .trust_region import SmoothFunctionOracle, TrustRegionOptions, minimize_second_order

__all__ = [
    "PenaltyParams",
    "PreconditionError",
    "phi",
    "phi_grad",
    "phi_hess",
    "recover_multipliers",
    "stop_test",
    "run_basic",
    "run_modified",
]

log = logging.getLogger(__name__)

OVERFLOW_LIMIT = 1e300


class PreconditionError(ValueError):
    pass


@dataclass
class PenaltyParams:
    """Geometric schedules ``eps_k = eps0 * theta**k`` and ``rho_k = rho0 * gamma**k``."""

    eps0: float = 1e-2
    theta: float = 0.5
    rho0: float = 10.0
    gamma: float = 10.0
    max_outer: int = 50
    x0: Optional[np.ndarray] = None
    stop_tol: float = 1e-8
    tol_act: float = 1e-6
    inner: Optional[TrustRegionOptions] = None

    def validate(self, n: int):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.x0 is None or np.asarray(self.x0).shape != (n,):
            raise ValueError(f"x0 must be a point of dimension {n}")

    def eps(self, k: int) -> float:
        return self.eps0 * self.theta**k

    def rho(self, k: int) -> float:
        return self.rho0 * self.gamma**k

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("x0", "inner")}
        d["x0"] = [float(v) for v in np.asarray(self.x0, dtype=float)]
        return d


def phi(problem: NlpProblem, rho: float, x) -> float:
    hx = problem.h(x)
    gp = np.maximum(0.0, problem.g(x))
    return problem.f(x) + 0.5 * rho * float(hx @ hx) + 0.25 * rho * float(np.sum(gp**4))


def phi_grad(problem: NlpProblem, rho: float, x) -> np.ndarray:
    hx = problem.h(x)
    gp = np.maximum(0.0, problem.g(x))
    return (
        problem.grad_f(x)
        + problem.jac_h(x).T @ (rho * hx)
        + problem.jac_g(x).T @ (rho * gp**3)
    )


def phi_hess(problem: NlpProblem, rho: float, x) -> np.ndarray:
    hx = problem.h(x)
    gp = np.maximum(0.0, problem.g(x))
    Jh = problem.jac_h(x)
    Jg = problem.jac_g(x)
    H = problem.hess_f(x).copy()
    if problem.p:
        H += np.einsum("j,jab->ab", rho * hx, problem.hess_h(x))
        H += rho * (Jh.T @ Jh)
    if problem.m:
        H += np.einsum("i,iab->ab", rho * gp**3, problem.hess_g(x))
        H += (Jg.T * (3.0 * rho * gp**2)) @ Jg
    return 0.5 * (H + H.T)


def recover_multipliers(problem: NlpProblem, rho: float, x):
    """``(rho * h(x), rho * max(0, g(x))**3)``."""
    return rho * problem.h(x), rho * np.maximum(0.0, problem.g(x)) ** 3


def penalty_oracle(problem: NlpProblem, rho: float) -> SmoothFunctionOracle:
    return SmoothFunctionOracle(
        value=lambda x: phi(problem, rho, x),
        gradient=lambda x: phi_grad(problem, rho, x),
        hessian=lambda x: phi_hess(problem, rho, x),
    )


def stop_test(problem: NlpProblem, t: KktTriple, stop_tol: float, tol_act: float = 1e-6):
    """Outer stopping rule shared by the penalty and augmented Lagrangian loops.

    All four AKKT residuals at most ``stop_tol`` and the Lagrangian Hessian,
    projected on the perturbed critical subspace taken at the iterate itself,
    has smallest eigenvalue at least ``-stop_tol``.  Returns ``(stop, lambda_min)``.
    """
    res = akkt_residuals(problem, t)
    cspace = build_space(problem, "S_tilde", t.x, t.x, t.omega, tol_act=tol_act)
    cert = second_order_subspace(lagrangian_hessian(problem, t), nullspace_basis(cspace.eq_rows, n=problem.n), stop_tol)
    return res.max() <= stop_tol and cert.passed, cert.lambda_min


def _overflowing(problem, rho, x) -> bool:
    gp = np.maximum(0.0, problem.g(x))
    return bool(problem.m) and float(np.max(rho * gp**3, initial=0.0)) > OVERFLOW_LIMIT


def _run(problem: NlpProblem, params: PenaltyParams, method: str, modified: bool) -> SolverTrace:
    params.validate(problem.n)
    x0 = np.asarray(params.x0, dtype=float).copy()
    trace = SolverTrace(problem=problem.name, method=method, params=params.as_dict())

    f0 = None
    if modified:
        fm = feasibility(problem, x0)
        if not fm.is_zero(1e-10):
            raise PreconditionError(
                f"x0 must be feasible (|h|={fm.eq_norm:.3g}, |max(0,g)|={fm.ineq_norm:.3g})"
            )
        f0 = problem.f(x0)

    x_start = x0
    branch = None
    stalls = 0
    for k in range(params.max_outer):
        eps_k, rho_k = params.eps(k), params.rho(k)
        try:
            tr = minimize_second_order(penalty_oracle(problem, rho_k), x_start, eps_k, params.inner)
        except EvaluationError as exc:
            trace.status, trace.message = "failed", f"outer k={k}: {exc}"
            return trace
        x = tr.x_final
        if _overflowing(problem, rho_k, x):
            trace.status = "failed"
            trace.message = f"outer k={k}: rho*max(0,g)^3 exceeds {OVERFLOW_LIMIT:g}"
            return trace

        mu, omega = recover_multipliers(problem, rho_k, x)
        t = KktTriple(x, mu, omega)
        res = akkt_residuals(problem, t)
        stop, lam = stop_test(problem, t, params.stop_tol, params.tol_act)
        rec = TraceRecord(
            k=k, x=x.copy(), mu=mu, omega=omega, eps=eps_k, rho=rho_k,
            residuals=res.as_tuple(),
            feasibility=feasibility_pair(feasibility(problem, x)),
            inner_iterations=tr.iterations, inner_status=tr.status,
            flags=["inner-stalled"] if tr.status == "stalled" else [],
            extras={
                "phi": phi(problem, rho_k, x),
                "inner_grad_norm": tr.grad_norm,
                "inner_hess_min_eig": tr.hess_min_eig,
                "proj_lambda_min": lam,
            },
        )
        if modified:
            rec.branch = branch or "x0"
            rec.extras["f_x0"] = f0
            # the warm-start test looks ahead to the next penalty parameter
            warm = phi(problem, params.rho(k + 1), x) <= f0
            branch = "warm" if warm else "x0"
            rec.extras["next_branch"] = branch
            x_start = x if warm else x0
        else:
            x_start = x
        trace.records.append(rec)
        log.debug("k=%d rho=%.3g eps=%.3g res=%s", k, rho_k, eps_k, res)

        # the stop test uses the actual residuals, so it is trusted even after an inner stall
        if stop:
            trace.status = "converged"
            return trace
        if tr.status == "stalled":
            # floating-point floor of the subproblem: keep the point and tighten rho
            stalls += 1
            trace.message = f"{stalls} inner solve(s) stopped at the floating-point floor"
        elif not tr.converged:
            trace.status = "failed"
            trace.message = f"outer k={k}: inner solver {tr.status} after {tr.iterations} iterations"
            return trace
    trace.status = "max_outer"
    return trace


def run_basic(problem: NlpProblem, params: PenaltyParams) -> SolverTrace:
    """Basic quartic-penalty loop, warm-started from the previous iterate."""
    return _run(problem, params, "penalty", modified=False)


def run_modified(problem: NlpProblem, params: PenaltyParams) -> SolverTrace:
    """Penalty loop whose inner start is the last iterate only while
    ``phi_{rho_{k+1}}(x^k) <= f(x^0)``, and the feasible ``x^0`` otherwise.

    Each record stores ``branch`` (the start point actually used for that
    inner solve) and ``extras["f_x0"]``, so ``phi_{rho_k}(x^k) <= f(x^0)``
    can be audited from the trace.
    """
    return _run(problem, params, "penalty-warm", modified=True)
