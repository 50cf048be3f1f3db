"""Problem representation and Lagrangian assembly.

A problem has the form::

    minimize f(x)  subject to  h(x) = 0,  g(x) <= 0

with ``h: R^n -> R^p`` and ``g: R^n -> R^m``.  Evaluators are supplied in
vectorised form: ``h`` returns a ``(p,)`` array, its Jacobian a ``(p, n)``
array and its Hessians a ``(p, n, n)`` stack (likewise for ``g``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "EvaluationError",
    "NlpProblem",
    "KktTriple",
    "FeasibilityMeasure",
    "DerivativeReport",
    "lagrangian_gradient",
    "lagrangian_hessian",
    "active_set",
    "feasibility",
    "check_derivatives",
]


class EvaluationError(ArithmeticError):
    """An evaluator returned a non-finite value."""

    def __init__(self, what: str, index=None, x=None):
        self.what = what
        self.index = index
        self.x = None if x is None else np.array(x, dtype=float)
        loc = "" if index is None else f" at index {index}"
        super().__init__(f"non-finite value from {what}{loc}")


def _first_bad(a):
    bad = np.argwhere(~np.isfinite(a))
    return tuple(int(i) for i in bad[0]) if bad.size else None


def _checked(what, value, shape, x):
    a = np.asarray(value, dtype=float)
    if a.shape != shape:
        a = a.reshape(shape)
    if not np.all(np.isfinite(a)):
        raise EvaluationError(what, _first_bad(a), x)
    return a


def _empty_vec(x):
    return np.zeros(0)


class NlpProblem:
    """Smooth nonlinear program with analytic first and second derivatives.

    Missing constraint evaluators are allowed when the corresponding count
    (``p`` or ``m``) is zero.  All public evaluation methods validate shapes
    and raise :class:`EvaluationError` on NaN or infinity.
    """

    def __init__(
        self,
        name: str,
        n: int,
        f: Callable,
        grad_f: Callable,
        hess_f: Callable,
        p: int = 0,
        h: Optional[Callable] = None,
        jac_h: Optional[Callable] = None,
        hess_h: Optional[Callable] = None,
        m: int = 0,
        g: Optional[Callable] = None,
        jac_g: Optional[Callable] = None,
        hess_g: Optional[Callable] = None,
    ):
        if p and (h is None or jac_h is None or hess_h is None):
            raise ValueError("equality constraints need h, jac_h and hess_h")
        if m and (g is None or jac_g is None or hess_g is None):
            raise ValueError("inequality constraints need g, jac_g and hess_g")
        self.name = name
        self.n, self.p, self.m = int(n), int(p), int(m)
        self._f, self._grad_f, self._hess_f = f, grad_f, hess_f
        self._h, self._jac_h, self._hess_h = h, jac_h, hess_h
        self._g, self._jac_g, self._hess_g = g, jac_g, hess_g

    def __repr__(self):
        return f"NlpProblem({self.name!r}, n={self.n}, p={self.p}, m={self.m})"

    def _x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected x of shape ({self.n},), got {x.shape}")
        return x

    def f(self, x) -> float:
        x = self._x(x)
        v = float(self._f(x))
        if not np.isfinite(v):
            raise EvaluationError("f", None, x)
        return v

    def grad_f(self, x):
        x = self._x(x)
        return _checked("grad f", self._grad_f(x), (self.n,), x)

    def hess_f(self, x):
        x = self._x(x)
        return _checked("hess f", self._hess_f(x), (self.n, self.n), x)

    def h(self, x):
        x = self._x(x)
        if not self.p:
            return np.zeros(0)
        return _checked("h", self._h(x), (self.p,), x)

    def jac_h(self, x):
        x = self._x(x)
        if not self.p:
            return np.zeros((0, self.n))
        return _checked("jac h", self._jac_h(x), (self.p, self.n), x)

    def hess_h(self, x):
        x = self._x(x)
        if not self.p:
            return np.zeros((0, self.n, self.n))
        return _checked("hess h", self._hess_h(x), (self.p, self.n, self.n), x)

    def g(self, x):
        x = self._x(x)
        if not self.m:
            return np.zeros(0)
        return _checked("g", self._g(x), (self.m,), x)

    def jac_g(self, x):
        x = self._x(x)
        if not self.m:
            return np.zeros((0, self.n))
        return _checked("jac g", self._jac_g(x), (self.m, self.n), x)

    def hess_g(self, x):
        x = self._x(x)
        if not self.m:
            return np.zeros((0, self.n, self.n))
        return _checked("hess g", self._hess_g(x), (self.m, self.n, self.n), x)


@dataclass
class KktTriple:
    """A point together with equality and inequality multipliers."""

    x: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
        if np.any(self.omega < 0):
            raise ValueError("inequality multipliers must be nonnegative")


@dataclass(frozen=True)
class FeasibilityMeasure:
    eq_norm: float
    ineq_norm: float
    eq_sq_sum: float
    ineq_viol_sum: float

    def is_zero(self, tol: float = 0.0) -> bool:
        return self.eq_norm <= tol and self.ineq_norm <= tol


def _check_dims(problem: NlpProblem, t: KktTriple):
    if t.x.shape != (problem.n,) or t.mu.shape != (problem.p,) or t.omega.shape != (problem.m,):
        raise ValueError(
            f"triple dimensions (x={t.x.size}, mu={t.mu.size}, omega={t.omega.size}) "
            f"do not match problem (n={problem.n}, p={problem.p}, m={problem.m})"
        )


def lagrangian_gradient(problem: NlpProblem, t: KktTriple) -> np.ndarray:
    """Gradient in x of ``f + mu.h + omega.g``."""
    _check_dims(problem, t)
    x = t.x
    return problem.grad_f(x) + problem.jac_h(x).T @ t.mu + problem.jac_g(x).T @ t.omega


def lagrangian_hessian(problem: NlpProblem, t: KktTriple) -> np.ndarray:
    _check_dims(problem, t)
    x = t.x
    H = problem.hess_f(x).copy()
    if problem.p:
        H += np.einsum("j,jab->ab", t.mu, problem.hess_h(x))
    if problem.m:
        H += np.einsum("i,iab->ab", t.omega, problem.hess_g(x))
    return 0.5 * (H + H.T)


def active_set(problem: NlpProblem, x, tol_act: float = 0.0) -> list[int]:
    """Indices ``i`` (0-based) with ``g_i(x) >= -tol_act``."""
    if tol_act < 0:
        raise ValueError("tol_act must be nonnegative")
    gx = problem.g(x)
    return [int(i) for i in np.flatnonzero(gx >= -tol_act)]


def feasibility(problem: NlpProblem, x) -> FeasibilityMeasure:
    hx = problem.h(x)
    viol = np.maximum(0.0, problem.g(x))
    return FeasibilityMeasure(
        eq_norm=float(np.linalg.norm(hx)),
        ineq_norm=float(np.linalg.norm(viol)),
        eq_sq_sum=float(np.sum(hx * hx)),
        ineq_viol_sum=float(np.sum(viol)),
    )


@dataclass
class DerivativeReport:
    """Worst relative error of each analytic derivative against central differences.

    Keys look like ``"grad f"``, ``"hess g[1]"``.
    """

    errors: dict

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)


def _rel_err(analytic, approx):
    analytic = np.asarray(analytic, dtype=float)
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    return float(np.max(np.abs(analytic - approx), initial=0.0)) / scale


def _fd_gradient(fun, x, step):
    n = x.size
    out = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        out[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return out


def _fd_jacobian(fun, x, step):
    cols = []
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = step
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * step))
    return np.stack(cols, axis=-1)


def check_derivatives(problem: NlpProblem, x, fd_step: float = 1e-5) -> DerivativeReport:
    """Compare analytic gradients and Hessians with central finite differences.

    Gradients are differenced from function values, Hessians from the analytic
    gradients.  Errors are measured in max norm relative to ``max(1, |analytic|)``.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    x = np.asarray(x, dtype=float)
    err = {
        "grad f": _rel_err(problem.grad_f(x), _fd_gradient(problem.f, x, fd_step)),
        "hess f": _rel_err(problem.hess_f(x), _fd_jacobian(problem.grad_f, x, fd_step)),
    }
    for label, p, val, jac, hess in (
        ("h", problem.p, problem.h, problem.jac_h, problem.hess_h),
        ("g", problem.m, problem.g, problem.jac_g, problem.hess_g),
    ):
        if not p:
            continue
        J = jac(x)
        Hs = hess(x)
        for j in range(p):
            comp = lambda z, j=j: val(z)[j]
            dcomp = lambda z, j=j: jac(z)[j]
            err[f"grad {label}[{j}]"] = _rel_err(J[j], _fd_gradient(comp, x, fd_step))
            err[f"hess {label}[{j}]"] = _rel_err(Hs[j], _fd_jacobian(dcomp, x, fd_step))
    return DerivativeReport(err)
