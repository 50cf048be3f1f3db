"""Quartic augmented Lagrangian and the safeguarded outer loop.

    L_rho(x, mu, omega) = f(x) + rho/2 * sum (h_j + mu_j/rho)^2
                                + rho/4 * sum max(0, g_i + omega_i/rho)^4

The trace certifies the internal multipliers ``mu_hat = mu + rho*h`` and
``omega_hat = rho * max(0, g + omega/rho)^3``, for which the gradient of
``L_rho`` equals the Lagrangian gradient.  The safeguarded multipliers used by
the algorithm are kept in ``extras``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .nlp_core import EvaluationError, KktTriple, NlpProblem, feasibility
from .optimality import ContractViolation, akkt_residuals
from .penalty import stop_test
from .trace import SolverTrace, TraceRecord, feasibility_pair
from .trust_region import SmoothFunctionOracle, TrustRegionOptions, minimize_second_order

__all__ = [
    "AugLagParams",
    "auglag_value",
    "auglag_grad",
    "auglag_hess",
    "internal_multipliers",
    "run",
]


@dataclass
class AugLagParams:
    mu_min: float = -1e6
    mu_max: float = 1e6
    omega_max: float = 1e6
    gamma: float = 10.0
    rho1: float = 10.0
    tau: float = 0.5
    eps0: float = 1e-2
    # the inner tolerance must shrink faster than the outer contraction, or
    # warm starts already satisfy it and rho grows for nothing
    theta: float = 0.2
    mu1: Optional[np.ndarray] = None
    omega1: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    max_outer: int = 50
    stop_tol: float = 1e-8
    tol_act: float = 1e-6
    inner: Optional[TrustRegionOptions] = None

    def eps(self, k: int) -> float:
        return self.eps0 * self.theta**k

    def initial_multipliers(self, p: int, m: int):
        mu = np.zeros(p) if self.mu1 is None else np.asarray(self.mu1, dtype=float)
        om = np.zeros(m) if self.omega1 is None else np.asarray(self.omega1, dtype=float)
        return mu, om

    def validate(self, problem: NlpProblem):
        if not self.mu_min < self.mu_max:
            raise ValueError("need mu_min < mu_max")
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.rho1 > 0:
            raise ValueError("rho1 must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not (self.eps0 > 0 and 0 < self.theta < 1):
            raise ValueError("need eps0 > 0 and theta in (0, 1)")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.x0 is None or np.asarray(self.x0).shape != (problem.n,):
            raise ValueError(f"x0 must be a point of dimension {problem.n}")
        mu, om = self.initial_multipliers(problem.p, problem.m)
        if mu.shape != (problem.p,) or np.any(mu < self.mu_min) or np.any(mu > self.mu_max):
            raise ValueError("initial mu must lie in [mu_min, mu_max]^p")
        if om.shape != (problem.m,) or np.any(om < 0) or np.any(om > self.omega_max):
            raise ValueError("initial omega must lie in [0, omega_max]^m")

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("x0", "mu1", "omega1", "inner")}
        for key in ("x0", "mu1", "omega1"):
            v = getattr(self, key)
            d[key] = None if v is None else [float(a) for a in np.asarray(v, dtype=float)]
        return d


def _check(rho, omega):
    if not rho > 0:
        raise ContractViolation("rho must be positive")
    if np.any(np.asarray(omega) < 0):
        raise ContractViolation("omega must be nonnegative")


def auglag_value(problem: NlpProblem, rho, mu, omega, x) -> float:
    _check(rho, omega)
    hs = problem.h(x) + np.asarray(mu, dtype=float) / rho
    gs = np.maximum(0.0, problem.g(x) + np.asarray(omega, dtype=float) / rho)
    return problem.f(x) + 0.5 * rho * float(hs @ hs) + 0.25 * rho * float(np.sum(gs**4))


def auglag_grad(problem: NlpProblem, rho, mu, omega, x) -> np.ndarray:
    mu_hat, omega_hat = internal_multipliers(problem, rho, mu, omega, x)
    return problem.grad_f(x) + problem.jac_h(x).T @ mu_hat + problem.jac_g(x).T @ omega_hat


def auglag_hess(problem: NlpProblem, rho, mu, omega, x) -> np.ndarray:
    _check(rho, omega)
    mu_hat, omega_hat = internal_multipliers(problem, rho, mu, omega, x)
    gs = np.maximum(0.0, problem.g(x) + np.asarray(omega, dtype=float) / rho)
    Jh, Jg = problem.jac_h(x), problem.jac_g(x)
    H = problem.hess_f(x).copy()
    if problem.p:
        H += np.einsum("j,jab->ab", mu_hat, problem.hess_h(x)) + rho * (Jh.T @ Jh)
    if problem.m:
        H += np.einsum("i,iab->ab", omega_hat, problem.hess_g(x))
        H += (Jg.T * (3.0 * rho * gs**2)) @ Jg
    return 0.5 * (H + H.T)


def internal_multipliers(problem: NlpProblem, rho, mu, omega, x):
    """``(mu + rho*h(x), rho * max(0, g(x) + omega/rho)**3)``."""
    _check(rho, omega)
    mu_hat = np.asarray(mu, dtype=float) + rho * problem.h(x)
    omega_hat = rho * np.maximum(0.0, problem.g(x) + np.asarray(omega, dtype=float) / rho) ** 3
    return mu_hat, omega_hat


def _progress(hx, V) -> float:
    return max(float(np.max(np.abs(hx), initial=0.0)), float(np.max(np.abs(V), initial=0.0)))


def run(problem: NlpProblem, params: AugLagParams) -> SolverTrace:
    """Safeguarded augmented Lagrangian loop.

    Records are numbered from 1, matching the initial penalty ``rho1`` and
    multipliers ``(mu1, omega1)``.  The progress reference for the first
    penalty update is ``max(|h(x0)|_inf, |max(0, g(x0))|_inf)``.
    """
    params.validate(problem)
    x = np.asarray(params.x0, dtype=float).copy()
    mu, omega = params.initial_multipliers(problem.p, problem.m)
    mu, omega = mu.copy(), omega.copy()
    rho = params.rho1
    prev_progress = _progress(problem.h(x), np.maximum(0.0, problem.g(x)))
    trace = SolverTrace(problem=problem.name, method="auglag", params=params.as_dict())
    stalls = 0

    for k in range(1, params.max_outer + 1):
        eps_k = params.eps(k - 1)
        oracle = SmoothFunctionOracle(
            value=lambda z, r=rho, a=mu, b=omega: auglag_value(problem, r, a, b, z),
            gradient=lambda z, r=rho, a=mu, b=omega: auglag_grad(problem, r, a, b, z),
            hessian=lambda z, r=rho, a=mu, b=omega: auglag_hess(problem, r, a, b, z),
        )
        try:
            tr = minimize_second_order(oracle, x, eps_k, params.inner)
        except EvaluationError as exc:
            trace.status, trace.message = "failed", f"outer k={k}: {exc}"
            return trace
        x = tr.x_final
        hx, gx = problem.h(x), problem.g(x)
        mu_hat, omega_hat = internal_multipliers(problem, rho, mu, omega, x)
        V = np.maximum(gx, -omega / rho)
        progress = _progress(hx, V)

        t = KktTriple(x, mu_hat, omega_hat)
        res = akkt_residuals(problem, t)
        stop, lam = stop_test(problem, t, params.stop_tol, params.tol_act)
        trace.records.append(TraceRecord(
            k=k, x=x.copy(), mu=mu_hat, omega=omega_hat, eps=eps_k, rho=rho,
            residuals=res.as_tuple(),
            feasibility=feasibility_pair(feasibility(problem, x)),
            inner_iterations=tr.iterations, inner_status=tr.status,
            flags=["inner-stalled"] if tr.status == "stalled" else [],
            extras={
                "progress": progress,
                "V_inf": float(np.max(np.abs(V), initial=0.0)),
                "inner_grad_norm": tr.grad_norm,
                "inner_hess_min_eig": tr.hess_min_eig,
                "proj_lambda_min": lam,
                "mu_safe": [float(v) for v in mu],
                "omega_safe": [float(v) for v in omega],
            },
        ))
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

        rho_next = rho if progress <= params.tau * prev_progress else params.gamma * rho
        mu = np.clip(mu + rho * hx, params.mu_min, params.mu_max)
        omega = np.clip(omega + rho * gx, 0.0, params.omega_max)
        assert np.all((params.mu_min <= mu) & (mu <= params.mu_max))
        assert np.all((0.0 <= omega) & (omega <= params.omega_max))
        rho, prev_progress = rho_next, progress
    trace.status = "max_outer"
    return trace
