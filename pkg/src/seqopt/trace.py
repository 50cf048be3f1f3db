"""Iterate traces produced by the solvers and the oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nlp_core import FeasibilityMeasure, KktTriple

__all__ = ["TraceRecord", "SolverTrace"]


@dataclass
class TraceRecord:
    """One outer iteration.

    ``residuals`` holds ``(r_grad, r_eq, r_ineq, r_comp)`` and ``feasibility``
    holds ``(eq_norm, ineq_norm)``.  ``extras`` carries method-specific scalars
    (penalty value, progress measure, distance to the reference point, ...),
    ``flags`` carries short string markers such as the warm-start branch.
    """

    k: int
    x: np.ndarray
    mu: np.ndarray
    omega: np.ndarray
    eps: float
    rho: float
    residuals: tuple
    feasibility: tuple
    inner_iterations: int = 0
    inner_status: str = ""
    branch: Optional[str] = None
    extras: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def triple(self) -> KktTriple:
        return KktTriple(self.x, self.mu, self.omega)


@dataclass
class SolverTrace:
    """Ordered records plus provenance.

    ``status`` is one of ``converged`` (outer stopping test met), ``max_outer``
    (iteration cap reached), ``failed`` (inner solver or evaluation failure,
    the trace is partial) or ``reference`` (materialised from a formula).
    """

    problem: str
    method: str
    origin: str = "solver"
    params: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    status: str = "max_outer"
    message: str = ""

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def final(self) -> TraceRecord:
        return self.records[-1]

    @property
    def failed(self) -> bool:
        return self.status == "failed"


def feasibility_pair(fm: FeasibilityMeasure) -> tuple:
    return (fm.eq_norm, fm.ineq_norm)
