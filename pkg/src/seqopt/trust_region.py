"""Trust-region Newton method with exact (eigendecomposition) subproblem solves.

Terminates at points with ``|grad| <= eps`` and ``lambda_min(hess) >= -eps``,
which is the inner-solve contract of the penalty and augmented Lagrangian
outer loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .nlp_core import EvaluationError

__all__ = [
    "SmoothFunctionOracle",
    "TrustRegionOptions",
    "TrustRegionResult",
    "solve_tr_subproblem",
    "minimize_second_order",
]


_ROUNDOFF_FRACTIONS = (1.0, 0.5, 0.75, 0.25, 0.875, 0.625, 0.375, 0.125)


@dataclass
class SmoothFunctionOracle:
    value: Callable
    gradient: Callable
    hessian: Callable


@dataclass
class TrustRegionOptions:
    max_iter: int = 10_000
    initial_radius: float = 1.0
    max_radius: float = 1e10
    accept_ratio: float = 0.1
    shrink_below: float = 0.25
    shrink_factor: float = 0.25
    grow_above: float = 0.75
    grow_factor: float = 2.0
    # Steps whose trial point fails this predicate are rejected (radius shrinks).
    region: Optional[Callable] = None
    # Predicted decreases below this fraction of max(1, |f|) are roundoff-level;
    # such steps are judged by gradient reduction (f must still not increase).
    noise_level: float = 1e-14
    # Iterates farther than this from the origin count as divergence.
    divergence_norm: float = 1e12


@dataclass
class TrustRegionResult:
    x_final: np.ndarray
    grad_norm: float
    hess_min_eig: float
    iterations: int
    values: list = field(default_factory=list)
    status: str = "converged"

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _hard_case_direction(q, g):
    # orient so the step does not increase the linear term, then canonical sign
    gq = float(g @ q)
    if gq > 0:
        return -q
    if gq == 0.0:
        nz = np.flatnonzero(np.abs(q) > 1e-14)
        if nz.size and q[nz[0]] < 0:
            return -q
    return q


def _subproblem_eig(g, w, Q, radius):
    """Global minimiser of ``g.s + s.H.s/2`` over ``|s| <= radius`` with ``H = Q diag(w) Q.T``."""
    gt = Q.T @ g
    gmax = float(np.max(np.abs(g), initial=0.0))
    # scaled so that tiny gradients do not underflow to a zero norm
    gnorm = gmax * float(np.linalg.norm(g / gmax)) if gmax > 0 else 0.0
    lam1 = float(w[0])
    scale = max(1.0, float(np.max(np.abs(w))))

    if lam1 > 0:
        s = -Q @ (gt / w)
        if np.linalg.norm(s) <= radius:
            return s

    lo = max(0.0, -lam1)

    def snorm(lam):
        # lo + t can round back to lo when |lo| >> t, leaving zero denominators
        d = w + lam
        if np.any((d <= 0) & (gt != 0)):
            return np.inf
        return float(np.linalg.norm(np.divide(gt, d, out=np.zeros_like(gt), where=d > 0)))

    bottom = np.abs(w - lam1) <= 1e-12 * scale
    if lam1 <= 0 and np.all(np.abs(gt[bottom]) <= 1e-14 * max(gnorm, 1e-300)):
        # Possible hard case: g (numerically) orthogonal to the bottom eigenspace.
        rest = ~bottom
        s = -Q[:, rest] @ (gt[rest] / (w[rest] + lo)) if rest.any() else np.zeros_like(g)
        sn = float(np.linalg.norm(s))
        if sn <= radius:
            tau = np.sqrt(max(radius * radius - sn * sn, 0.0))
            return s + tau * _hard_case_direction(Q[:, 0], g)

    if gnorm == 0.0:
        if lam1 < 0:
            return radius * _hard_case_direction(Q[:, 0], g)
        return np.zeros_like(g)

    # secular equation |s(lo + t)| = radius, monotone decreasing in t
    t_hi = gnorm / radius
    while snorm(lo + t_hi) > radius:
        t_hi *= 2.0
    t_lo = t_hi
    while snorm(lo + t_lo) <= radius and t_lo > 1e-300:
        t_lo *= 0.5
    if snorm(lo + t_lo) <= radius:
        t = t_lo
    else:
        t = brentq(lambda t: snorm(lo + t) - radius, t_lo, t_hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    d = w + lo + t
    s = -Q @ np.divide(gt, d, out=np.zeros_like(gt), where=d > 0)
    n = float(np.linalg.norm(s))
    if n > radius:
        return s * (radius / n)
    if lam1 < 0 and n < radius * (1 - 1e-10):
        # nearly hard case: the multiplier is within roundoff of -lam1, so
        # rebuild the step off the bottom eigenspace and fill the remaining
        # length along the bottom eigenvector
        rest = ~bottom
        s = -Q[:, rest] @ (gt[rest] / (w[rest] + lo)) if rest.any() else np.zeros_like(g)
        n = float(np.linalg.norm(s))
        if n > radius:
            return s * (radius / n)
        tau = np.sqrt(radius * radius - n * n)
        return s + tau * _hard_case_direction(Q[:, 0], g)
    return s


def solve_tr_subproblem(grad, H, radius: float) -> np.ndarray:
    """Trust-region step for the model ``grad.s + s.H.s/2`` with ``|s| <= radius``.

    With negative curvature and zero gradient the step lies on the boundary
    along an eigenvector of the most negative eigenvalue.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    H = np.asarray(H, dtype=float)
    w, Q = np.linalg.eigh(0.5 * (H + H.T))
    return _subproblem_eig(np.asarray(grad, dtype=float), w, Q, radius)


def minimize_second_order(
    oracle: SmoothFunctionOracle,
    x0,
    eps: float,
    opts: Optional[TrustRegionOptions] = None,
) -> TrustRegionResult:
    """Minimise a smooth function to an ``eps``-approximate second-order point.

    Raises :class:`EvaluationError` if the function, gradient or Hessian is
    non-finite at an evaluated point.  Besides ``converged`` the status can be
    ``iteration_limit`` (``max_iter`` trial steps exhausted), ``stalled`` (trial
    steps no longer change x in floating point) or ``diverged``.  Accepted
    objective values never increase.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    opts = opts or TrustRegionOptions()

    def evaluate(x):
        f = float(oracle.value(x))
        g = np.asarray(oracle.gradient(x), dtype=float)
        H = np.asarray(oracle.hessian(x), dtype=float)
        if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
            raise EvaluationError("trust-region objective", None, x)
        w, Q = np.linalg.eigh(0.5 * (H + H.T))
        return f, g, H, w, Q

    x = np.array(x0, dtype=float)
    f, g, H, w, Q = evaluate(x)
    values = [f]
    radius = opts.initial_radius
    status = "iteration_limit"
    it = 0
    while True:
        if np.linalg.norm(g) <= eps and w[0] >= -eps:
            status = "converged"
            break
        if it >= opts.max_iter:
            break
        if np.linalg.norm(x) > opts.divergence_norm:
            status = "diverged"
            break
        if radius < np.finfo(float).tiny:
            status = "stalled"
            break
        it += 1

        s = _subproblem_eig(g, w, Q, radius)
        x_new = x + s
        if np.array_equal(x_new, x):
            status = "stalled"
            break
        pred = -(g @ s + 0.5 * s @ H @ s)
        snorm = float(np.linalg.norm(s))
        if not pred > 0:
            radius = opts.shrink_factor * min(radius, snorm)
            continue
        if opts.region is not None and not opts.region(x_new):
            radius = opts.shrink_factor * min(radius, snorm)
            continue

        if pred < opts.noise_level * max(1.0, abs(f)):
            # model decrease is below roundoff in f: judge by gradient reduction,
            # trying shortened copies of the step since each rounds differently
            gnorm = np.linalg.norm(g)
            for frac in _ROUNDOFF_FRACTIONS:
                xc = x + frac * s
                if opts.region is not None and not opts.region(xc):
                    continue
                fc, gc, Hc, wc, Qc = evaluate(xc)
                if fc <= f and np.linalg.norm(gc) < gnorm:
                    x, f, g, H, w, Q = xc, fc, gc, Hc, wc, Qc
                    values.append(f)
                    break
            else:
                radius = opts.shrink_factor * min(radius, snorm)
            continue

        f_new = float(oracle.value(x_new))
        if not np.isfinite(f_new):
            raise EvaluationError("trust-region objective", None, x_new)
        ratio = (f - f_new) / pred

        if ratio < opts.shrink_below:
            radius = opts.shrink_factor * min(radius, snorm)
        elif ratio > opts.grow_above and snorm >= 0.99 * radius:
            radius = min(opts.grow_factor * radius, opts.max_radius)

        if ratio >= opts.accept_ratio and f_new < f:
            x = x_new
            f, g, H, w, Q = evaluate(x)
            values.append(f)

    return TrustRegionResult(
        x_final=x,
        grad_norm=float(np.linalg.norm(g)),
        hess_min_eig=float(w[0]),
        iterations=it,
        values=values,
        status=status,
    )
