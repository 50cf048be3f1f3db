"""Approximate-KKT residuals and second-order sequential certificates.

Three direction sets are supported, all built at an iterate ``y`` with
activity taken at a reference point ``x`` and multiplier signs from ``omega``:

``S``        all active inequality gradients enter with equality.
``S_tilde``  only active inequalities with positive multiplier enter, with equality.
``C_tilde``  as ``S_tilde`` plus ``grad g_i(y).d <= 0`` for active zero-multiplier rows.

Subspace checks are exact (eigenvalues of the projected Hessian).  The cone
check is a falsifier: it searches random in-cone directions plus eigenvectors
of every face-projected Hessian and reports the smallest Rayleigh quotient it
saw.  A "pass" from it means no violation was found.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .nlp_core import KktTriple, NlpProblem, active_set, lagrangian_gradient, lagrangian_hessian
from .trace import SolverTrace

__all__ = [
    "ContractViolation",
    "Condition",
    "AkktResiduals",
    "CriticalSpace",
    "SecondOrderCertificate",
    "IterationCheck",
    "CertifyOptions",
    "ConditionReport",
    "akkt_residuals",
    "build_space",
    "nullspace_basis",
    "second_order_subspace",
    "second_order_cone_sampled",
    "certify_trace",
    "in_space",
]

MEMBERSHIP_TOL = 1e-12


class ContractViolation(ValueError):
    pass


class Condition(str, Enum):
    AKKT = "AKKT"
    AKKT2 = "AKKT2"
    C_SAKKT2 = "C_SAKKT2"
    S_SAKKT2 = "S_SAKKT2"

    @classmethod
    def parse(cls, name) -> "Condition":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "_")
        aliases = {"CSAKKT2": "C_SAKKT2", "SSAKKT2": "S_SAKKT2"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class AkktResiduals:
    r_grad: float
    r_eq: float
    r_ineq: float
    r_comp: float

    def as_tuple(self) -> tuple:
        return (self.r_grad, self.r_eq, self.r_ineq, self.r_comp)

    def max(self) -> float:
        return max(self.as_tuple())


def akkt_residuals(problem: NlpProblem, t: KktTriple) -> AkktResiduals:
    """The four Euclidean norms bounded by ``eps_k`` in the AKKT definition."""
    if np.any(t.omega < 0):
        raise ContractViolation("omega must be componentwise nonnegative")
    gx = problem.g(t.x)
    return AkktResiduals(
        r_grad=float(np.linalg.norm(lagrangian_gradient(problem, t))),
        r_eq=float(np.linalg.norm(problem.h(t.x))),
        r_ineq=float(np.linalg.norm(np.maximum(0.0, gx))),
        r_comp=float(np.linalg.norm(np.minimum(t.omega, -gx))),
    )


# -- direction sets ---------------------------------------------------------

SPACE_KINDS = ("S", "S_tilde", "C_tilde")


@dataclass
class CriticalSpace:
    """Row description of a perturbed critical space or cone.

    ``eq_rows @ d == 0`` and ``ineq_le_rows @ d <= 0``; the source lists name
    the constraint behind each row (``"h0"``, ``"g1"``, ...).
    """

    kind: str
    eq_rows: np.ndarray
    ineq_le_rows: np.ndarray
    eq_sources: list = field(default_factory=list)
    ineq_sources: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.eq_rows.shape[1]

    def describe(self) -> str:
        eq = ",".join(self.eq_sources) or "-"
        le = ",".join(self.ineq_sources) or "-"
        return f"{self.kind} eq=[{eq}] le=[{le}]"


def build_space(
    problem: NlpProblem,
    kind: str,
    y,
    x_ref,
    omega,
    tol_act: float = 1e-6,
    tol_mult: float = 0.0,
) -> CriticalSpace:
    if kind not in SPACE_KINDS:
        raise ValueError(f"unknown space kind {kind!r}; expected one of {SPACE_KINDS}")
    if tol_act < 0 or tol_mult < 0:
        raise ValueError("tolerances must be nonnegative")
    omega = np.asarray(omega, dtype=float)
    Jh = problem.jac_h(y)
    Jg = problem.jac_g(y)
    active = active_set(problem, x_ref, tol_act)
    positive = [i for i in active if omega[i] > tol_mult]
    zero = [i for i in active if omega[i] <= tol_mult]

    eq_idx = active if kind == "S" else positive
    le_idx = zero if kind == "C_tilde" else []
    eq_rows = np.vstack([Jh, Jg[eq_idx]]) if eq_idx else Jh.copy()
    return CriticalSpace(
        kind=kind,
        eq_rows=eq_rows.reshape(-1, problem.n),
        ineq_le_rows=Jg[le_idx].reshape(-1, problem.n),
        eq_sources=[f"h{j}" for j in range(problem.p)] + [f"g{i}" for i in eq_idx],
        ineq_sources=[f"g{i}" for i in le_idx],
    )


def in_space(cspace: CriticalSpace, d, tol: float = MEMBERSHIP_TOL) -> bool:
    d = np.asarray(d, dtype=float)
    scale = max(1.0, float(np.linalg.norm(d)))
    eq_ok = np.all(np.abs(cspace.eq_rows @ d) <= tol * scale)
    le_ok = np.all(cspace.ineq_le_rows @ d <= tol * scale)
    return bool(eq_ok and le_ok)


def nullspace_basis(rows, tol_rank: float = 1e-10, n: Optional[int] = None) -> np.ndarray:
    """Orthonormal basis (as columns) of ``{d : rows @ d = 0}``.

    Singular values at or below ``tol_rank * sigma_max`` count as zero.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1) if rows.size else rows.reshape(0, n or 0)
    n = rows.shape[1] if n is None else n
    if rows.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > tol_rank * smax)) if smax > 0 else 0
    return vt[rank:].T.copy()


# -- second-order certificates ----------------------------------------------


@dataclass
class SecondOrderCertificate:
    lambda_min: float
    basis_dim: int
    passed: bool
    witness: Optional[np.ndarray]
    method: str
    eps: float
    n_samples: int = 0
    n_in_cone: int = 0
    n_face_candidates: int = 0
    seed: Optional[int] = None
    # smallest quotient over the random in-cone samples alone (faces excluded)
    sample_min: float = math.inf


def _check_symmetric(H):
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractViolation(f"Hessian must be square, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.T), initial=0.0) > 1e-12 * scale:
        raise ContractViolation("Hessian is not symmetric")
    return 0.5 * (H + H.T)


def _canonical_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def second_order_subspace(H, Z, eps: float) -> SecondOrderCertificate:
    """Smallest eigenvalue of ``Z.T H Z`` compared with ``-eps``."""
    H = _check_symmetric(H)
    Z = np.asarray(Z, dtype=float).reshape(H.shape[0], -1)
    r = Z.shape[1]
    if r == 0:
        return SecondOrderCertificate(math.inf, 0, True, None, "exact-subspace", eps)
    M = Z.T @ H @ Z
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    lam = float(w[0])
    passed = lam >= -eps
    witness = None if passed else _canonical_sign(Z @ V[:, 0])
    return SecondOrderCertificate(lam, r, passed, witness, "exact-subspace", eps)


def _face_candidates(M, A, face_limit):
    """Eigenvectors of M restricted to each face ``{v : A_J v = 0}``.

    The minimiser of the Rayleigh quotient over a polyhedral cone is an
    eigenvector of some face-projected matrix, so for generic data this set
    contains it.
    """
    q, r = A.shape
    if q > face_limit:
        return np.zeros((0, r))
    out = []
    for size in range(q + 1):
        for J in itertools.combinations(range(q), size):
            W = nullspace_basis(A[list(J)], n=r) if J else np.eye(r)
            if W.shape[1] == 0:
                continue
            Mw = W.T @ M @ W
            _, U = np.linalg.eigh(0.5 * (Mw + Mw.T))
            V = W @ U
            out.append(V.T)
            out.append(-V.T)
    return np.vstack(out) if out else np.zeros((0, r))


def second_order_cone_sampled(
    H,
    cspace: CriticalSpace,
    eps: float,
    n_samples: int = 10_000,
    rng_seed: int = 0,
    face_limit: int = 12,
) -> SecondOrderCertificate:
    """Search the cone for ``d`` with ``d.H.d < -eps |d|^2``.

    Falls back to :func:`second_order_subspace` when the cone has no
    inequality rows or the equality rows leave only ``{0}``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    H = _check_symmetric(H)
    Z = nullspace_basis(cspace.eq_rows, n=H.shape[0])
    r = Z.shape[1]
    if cspace.ineq_le_rows.shape[0] == 0 or r == 0:
        return second_order_subspace(H, Z, eps)

    M = Z.T @ H @ Z
    M = 0.5 * (M + M.T)
    A = cspace.ineq_le_rows @ Z

    rng = np.random.default_rng(rng_seed)
    V = rng.standard_normal((n_samples, r))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    in_cone = np.all(V @ A.T <= MEMBERSHIP_TOL, axis=1)
    sampled = V[in_cone]

    faces = _face_candidates(M, A, face_limit)
    faces = faces[np.all(faces @ A.T <= MEMBERSHIP_TOL, axis=1)] if faces.size else faces

    cand = np.vstack([sampled, faces]) if faces.size else sampled
    if cand.shape[0] == 0:
        return SecondOrderCertificate(
            math.inf, r, True, None, "sampled-cone", eps, n_samples, 0, 0, rng_seed
        )
    quot = np.einsum("ij,jk,ik->i", cand, M, cand)
    best = int(np.argmin(quot))
    lam = float(quot[best])
    passed = lam >= -eps
    witness = None if passed else Z @ cand[best]
    n_in = int(in_cone.sum())
    return SecondOrderCertificate(
        lam, r, passed, witness, "sampled-cone", eps,
        n_samples, n_in, int(faces.shape[0]), rng_seed,
        sample_min=float(quot[:n_in].min()) if n_in else math.inf,
    )


# -- trace certification ----------------------------------------------------

_SPACE_FOR = {
    Condition.AKKT2: "S",
    Condition.C_SAKKT2: "C_tilde",
    Condition.S_SAKKT2: "S_tilde",
}


@dataclass
class CertifyOptions:
    """Finite-trace surrogate for the asymptotic definitions.

    ``eps_rule="envelope"`` certifies with ``max(eps_k, residuals)``, the
    smallest tolerance sequence the AKKT inequalities admit; ``"recorded"``
    uses the trace's ``eps_k`` verbatim.
    """

    window: int = 5
    radius_factor: float = 10.0
    tol_act: float = 1e-6
    tol_mult: float = 0.0
    eps_slack: float = 1.05
    n_samples: int = 10_000
    seed: int = 0
    eps_rule: str = "envelope"
    tol_rank: float = 1e-10


@dataclass
class IterationCheck:
    k: int
    eps_recorded: float
    eps: float
    residuals: AkktResiduals
    certificate: Optional[SecondOrderCertificate]
    space: str
    passed: bool
    reason: str = ""


@dataclass
class ConditionReport:
    condition: Condition
    problem: str
    x_star: np.ndarray
    verdict: str
    checks: list
    options: CertifyOptions
    window_radius: float
    eps_monotone: bool
    failing_k: Optional[int] = None
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def witness(self) -> Optional[np.ndarray]:
        for c in self.checks:
            if c.certificate is not None and c.certificate.witness is not None:
                return c.certificate.witness
        return None


def _select_window(trace: SolverTrace, x_star, opts: CertifyOptions):
    dists = [float(np.linalg.norm(r.x - x_star)) for r in trace.records]
    radius = opts.radius_factor * dists[-1]
    if radius == 0.0:
        # x_star is the final iterate: accept the whole tail
        radius = max(dists[-opts.window:])
    chosen = [r for r, d in zip(trace.records, dists) if d <= radius]
    return chosen[-opts.window:], radius


def certify_trace(
    problem: NlpProblem,
    trace: SolverTrace,
    x_star,
    condition,
    options: Optional[CertifyOptions] = None,
) -> ConditionReport:
    """Check a tail window of ``trace`` against one sequential condition."""
    opts = options or CertifyOptions()
    condition = Condition.parse(condition)
    if opts.eps_rule not in ("envelope", "recorded"):
        raise ValueError(f"unknown eps_rule {opts.eps_rule!r}")
    if not trace.records:
        raise ValueError("trace is empty")
    x_star = np.asarray(x_star, dtype=float)

    window, radius = _select_window(trace, x_star, opts)
    report = ConditionReport(condition, trace.problem, x_star, "inconclusive", [], opts, radius, True)
    if not window:
        report.reason = "no records within the window radius"
        return report

    for rec in window:
        if not rec.eps > 0:
            raise ValueError(f"record k={rec.k} has non-positive eps")
        t = rec.triple()
        res = akkt_residuals(problem, t)
        eps = rec.eps if opts.eps_rule == "recorded" else max(rec.eps, res.max())
        reason = ""
        bad = [name for name, v in zip(("r_grad", "r_eq", "r_ineq", "r_comp"), res.as_tuple()) if v > eps]
        if bad:
            reason = f"AKKT residual(s) {', '.join(bad)} exceed eps={eps:.6g}"

        cert = None
        space = "-"
        kind = _SPACE_FOR.get(condition)
        if kind is not None:
            cspace = build_space(problem, kind, rec.x, x_star, rec.omega, opts.tol_act, opts.tol_mult)
            space = cspace.describe()
            H = lagrangian_hessian(problem, t)
            if kind == "C_tilde":
                cert = second_order_cone_sampled(H, cspace, eps, opts.n_samples, opts.seed)
            else:
                Z = nullspace_basis(cspace.eq_rows, opts.tol_rank, n=problem.n)
                cert = second_order_subspace(H, Z, eps)
            if not cert.passed and not reason:
                reason = (
                    f"second-order test over {kind} fails: "
                    f"lambda_min={cert.lambda_min:.6g} < -eps={-eps:.6g}"
                )
        report.checks.append(IterationCheck(rec.k, rec.eps, eps, res, cert, space, not reason, reason))

    for prev, cur in zip(report.checks, report.checks[1:]):
        if cur.eps > opts.eps_slack * prev.eps:
            report.eps_monotone = False
            break

    failed = [c for c in report.checks if not c.passed]
    if failed:
        report.verdict = "fail"
        report.failing_k = failed[0].k
        report.reason = failed[0].reason
    elif not report.eps_monotone:
        report.verdict = "fail"
        report.reason = f"eps increases by more than a factor {opts.eps_slack} inside the window"
    else:
        report.verdict = "pass"
    return report
