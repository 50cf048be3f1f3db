"""Constructive oracle: regularised penalty subproblems over a small ball.

For a candidate local minimiser ``x_bar`` and increasing penalties ``rho_k``,
each step minimises

    F_k(x) = phi_{rho_k}(x) + |x - x_bar|^4 / 4     over  |x - x_bar| <= delta

by grid-seeded multistart, then builds ``mu = rho*h``, ``omega = rho*max(0,g)^3``
and ``eps = max(|x - x_bar|, |h|, |max(0, g)|)``.  At an interior stationary
point ``|grad_x L| = |x - x_bar|^3`` exactly.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nlp_core import EvaluationError, KktTriple, NlpProblem, feasibility, lagrangian_gradient, lagrangian_hessian
from .optimality import akkt_residuals, build_space, nullspace_basis, second_order_subspace
from .penalty import phi, phi_grad, phi_hess, recover_multipliers
from .trace import SolverTrace, TraceRecord, feasibility_pair
from .trust_region import SmoothFunctionOracle, TrustRegionOptions, minimize_second_order

__all__ = [
    "OracleConfig",
    "UnsupportedScale",
    "BallSolution",
    "regularized_value",
    "regularized_grad",
    "regularized_hess",
    "solve_global_in_ball",
    "regularized_penalty_sequence",
]

log = logging.getLogger(__name__)

MAX_DIM = 4
EPS_FLOOR = 1e-16


class UnsupportedScale(ValueError):
    pass


@dataclass
class OracleConfig:
    x_bar: np.ndarray
    delta: float = 0.3
    rho0: float = 1e5
    gamma: float = 10.0
    k_max: int = 8
    grid_points: int = 5
    random_starts: int = 20
    seed: int = 0
    inner_eps: float = 1e-12
    jobs: int = 1

    def validate(self, n: int):
        x_bar = np.asarray(self.x_bar, dtype=float)
        if x_bar.shape != (n,):
            raise ValueError(f"x_bar must have dimension {n}")
        if not 0 < self.delta < 1.0 / 3.0:
            raise ValueError("delta must lie in (0, 1/3)")
        if not (self.rho0 > 0 and self.gamma > 1):
            raise ValueError("need rho0 > 0 and gamma > 1 (strictly increasing penalties)")
        if self.k_max < 1 or self.grid_points < 1 or self.random_starts < 0:
            raise ValueError("k_max and grid_points must be positive")

    def rho(self, k: int) -> float:
        return self.rho0 * self.gamma**k

    def as_dict(self) -> dict:
        return {
            "x_bar": [float(v) for v in np.asarray(self.x_bar, dtype=float)],
            "delta": self.delta, "rho0": self.rho0, "gamma": self.gamma,
            "k_max": self.k_max, "grid_points": self.grid_points,
            "random_starts": self.random_starts, "seed": self.seed,
            "inner_eps": self.inner_eps,
        }


def regularized_value(problem: NlpProblem, x_bar, rho, x) -> float:
    r = np.asarray(x, dtype=float) - x_bar
    rr = float(r @ r)
    return phi(problem, rho, x) + 0.25 * rr * rr


def regularized_grad(problem: NlpProblem, x_bar, rho, x) -> np.ndarray:
    r = np.asarray(x, dtype=float) - x_bar
    return phi_grad(problem, rho, x) + float(r @ r) * r


def regularized_hess(problem: NlpProblem, x_bar, rho, x) -> np.ndarray:
    r = np.asarray(x, dtype=float) - x_bar
    return phi_hess(problem, rho, x) + 2.0 * np.outer(r, r) + float(r @ r) * np.eye(r.size)


@dataclass
class BallSolution:
    x: np.ndarray
    value: float
    boundary: bool
    n_starts: int
    n_converged: int


def _starts(x_bar, delta, grid_points, random_starts, seed):
    n = x_bar.size
    axis = np.linspace(-delta, delta, grid_points) if grid_points > 1 else np.zeros(1)
    pts = []
    for offs in itertools.product(axis, repeat=n):
        d = np.array(offs)
        nd = np.linalg.norm(d)
        if nd > delta:
            d *= delta / nd
        pts.append(x_bar + d)
    rng = np.random.default_rng(seed)
    for _ in range(random_starts):
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        pts.append(x_bar + delta * rng.uniform() ** (1.0 / n) * u)
    return pts


def solve_global_in_ball(problem: NlpProblem, cfg: OracleConfig, rho: float) -> BallSolution:
    """Best local minimiser of ``F`` over the ball found by multistart.

    Steps leaving the ball are rejected inside the trust-region loop.  The
    reduction over starts is by ``F`` value; starts tied within roundoff are
    ranked by convergence, then gradient norm, then lexicographically on x.
    """
    if problem.n > MAX_DIM:
        raise UnsupportedScale(f"oracle supports n <= {MAX_DIM}, problem has n = {problem.n}")
    cfg.validate(problem.n)
    x_bar = np.asarray(cfg.x_bar, dtype=float)
    delta = cfg.delta
    oracle = SmoothFunctionOracle(
        value=lambda x: regularized_value(problem, x_bar, rho, x),
        gradient=lambda x: regularized_grad(problem, x_bar, rho, x),
        hessian=lambda x: regularized_hess(problem, x_bar, rho, x),
    )
    opts = TrustRegionOptions(
        initial_radius=0.25 * delta,
        max_radius=2.0 * delta,
        region=lambda x: np.linalg.norm(x - x_bar) <= delta,
        max_iter=2000,
    )

    def one(x0):
        try:
            return minimize_second_order(oracle, x0, cfg.inner_eps, opts)
        except EvaluationError as exc:
            log.debug("start %s failed: %s", x0, exc)
            return None

    starts = _starts(x_bar, delta, cfg.grid_points, cfg.random_starts, cfg.seed)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(one, starts))
    else:
        results = [one(x0) for x0 in starts]

    done = [r for r in results if r is not None]
    if not done:
        raise EvaluationError("oracle multistart", None, x_bar)
    values = [oracle.value(r.x_final) for r in done]
    f_min = min(values)
    # F is flat to the last few ulps near a minimiser, so among starts tied
    # within roundoff prefer converged runs with the smallest gradient
    tie = 64 * np.finfo(float).eps * max(1.0, abs(f_min))
    tied = [r for r, v in zip(done, values) if v <= f_min + tie]
    best = min(tied, key=lambda r: (not r.converged, r.grad_norm, tuple(r.x_final)))
    x = best.x_final
    boundary = (not best.converged) or np.linalg.norm(x - x_bar) >= delta * (1 - 1e-6)
    return BallSolution(
        x=x, value=float(oracle.value(x)), boundary=bool(boundary),
        n_starts=len(starts), n_converged=sum(r.converged for r in done),
    )


def regularized_penalty_sequence(problem: NlpProblem, cfg: OracleConfig) -> SolverTrace:
    """Materialise the regularised-penalty sequence ``(x^k, mu^k, omega^k, eps_k)``.

    Each record's ``extras`` holds the distance to ``x_bar``, the gap
    ``| |grad_x L| - |x - x_bar|^3 |``, the projected Hessian eigenvalue over the
    perturbed critical subspace at ``x_bar`` and the values ``F_k(x^k)``,
    ``F_k(x_bar)``.  Flags mark boundary solutions and a violated cubic distance bound.
    """
    cfg.validate(problem.n)
    x_bar = np.asarray(cfg.x_bar, dtype=float)
    trace = SolverTrace(problem=problem.name, method="oracle", origin="oracle", params=cfg.as_dict())
    for k in range(cfg.k_max):
        rho = cfg.rho(k)
        try:
            sol = solve_global_in_ball(problem, cfg, rho)
        except EvaluationError as exc:
            trace.status, trace.message = "failed", f"k={k}: {exc}"
            return trace
        x = sol.x
        mu, omega = recover_multipliers(problem, rho, x)
        t = KktTriple(x, mu, omega)
        fm = feasibility(problem, x)
        dist = float(np.linalg.norm(x - x_bar))
        eps = max(dist, fm.eq_norm, fm.ineq_norm, EPS_FLOOR)
        grad_l = float(np.linalg.norm(lagrangian_gradient(problem, t)))

        cspace = build_space(problem, "S_tilde", x, x_bar, omega)
        cert = second_order_subspace(
            lagrangian_hessian(problem, t), nullspace_basis(cspace.eq_rows, n=problem.n), eps
        )
        flags = []
        if sol.boundary:
            flags.append("boundary")
        if dist <= cfg.delta and dist**3 > eps:
            flags.append("cubic-bound-violated")
        F_bar = regularized_value(problem, x_bar, rho, x_bar)
        trace.records.append(TraceRecord(
            k=k, x=x.copy(), mu=mu, omega=omega, eps=eps, rho=rho,
            residuals=akkt_residuals(problem, t).as_tuple(),
            feasibility=feasibility_pair(fm),
            inner_iterations=sol.n_converged,
            inner_status="boundary" if sol.boundary else "interior",
            extras={
                "dist": dist,
                "grad_identity_gap": abs(grad_l - dist**3),
                "proj_lambda_min": cert.lambda_min,
                "F": sol.value,
                "F_bar": F_bar,
            },
            flags=flags,
        ))
    trace.status = "converged"
    return trace
