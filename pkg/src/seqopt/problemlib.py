"""Built-in analytic test problems with reference data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .nlp_core import KktTriple, NlpProblem, feasibility
from .optimality import akkt_residuals
from .trace import SolverTrace, TraceRecord, feasibility_pair

__all__ = ["ProblemEntry", "ProblemNotFound", "get", "list_names", "entries"]


class ProblemNotFound(KeyError):
    def __init__(self, name, available):
        self.name = name
        self.available = list(available)
        super().__init__(f"unknown problem {name!r}; available: {', '.join(self.available)}")

    def __str__(self):
        return self.args[0]


@dataclass
class ProblemEntry:
    """A registered problem.

    ``x0`` is the default solver start (feasible where ``x0_feasible``).
    ``penalty_bounded`` is False when the penalty subproblems are unbounded
    below, in which case solver runs are expected to fail.  ``closed_form``
    maps a label to a callable giving exact iterates for a parameter value.
    """

    name: str
    description: str
    problem: NlpProblem
    x0: np.ndarray
    minimizers: list = field(default_factory=list)
    kkt: list = field(default_factory=list)
    cq_notes: str = ""
    x_bar: Optional[np.ndarray] = None
    penalty_bounded: bool = True
    closed_form: dict = field(default_factory=dict)
    reference_trace: Optional[Callable] = None

    @property
    def x0_feasible(self) -> bool:
        return feasibility(self.problem, self.x0).is_zero(1e-10)


def _a(*v):
    return np.array(v, dtype=float)


def _zeros_hess(n, count):
    return lambda x: np.zeros((count, n, n))


# -- problem separating the cone and subspace conditions ---------------------

def _example_s3() -> ProblemEntry:
    prob = NlpProblem(
        "example-s3", 2,
        f=lambda x: x[0] ** 2 - x[1] ** 2,
        grad_f=lambda x: _a(2 * x[0], -2 * x[1]),
        hess_f=lambda x: np.diag([2.0, -2.0]),
        m=2,
        g=lambda x: _a(-x[0] + x[1], -x[1]),
        jac_g=lambda x: _a([-1.0, 1.0], [0.0, -1.0]),
        hess_g=_zeros_hess(2, 2),
    )

    def reference(k_first: int = 3, k_last: int = 50) -> SolverTrace:
        trace = SolverTrace(
            problem="example-s3", method="reference", origin="reference",
            params={"k_first": k_first, "k_last": k_last, "x_bar": [0.0, 0.0]},
            status="reference",
        )
        for k in range(k_first, k_last + 1):
            x = _a(1.0 / k, 1.0 / k)
            t = KktTriple(x, np.zeros(0), np.zeros(2))
            trace.records.append(TraceRecord(
                k=k, x=x, mu=t.mu, omega=t.omega, eps=4.0 / k, rho=0.0,
                residuals=akkt_residuals(prob, t).as_tuple(),
                feasibility=feasibility_pair(feasibility(prob, x)),
            ))
        return trace

    return ProblemEntry(
        name="example-s3",
        description="x1^2 - x2^2 s.t. x2 <= x1, x2 >= 0; separates the cone and subspace conditions",
        problem=prob,
        x0=_a(1.0, 0.5),
        minimizers=[_a(0.0, 0.0)],
        kkt=[KktTriple(_a(0.0, 0.0), np.zeros(0), _a(0.0, 0.0))],
        cq_notes="LICQ holds at the origin. Penalty subproblems are unbounded below "
                 "along x1 = x2 - s, x1 -> +inf, so solver runs diverge.",
        x_bar=_a(0.0, 0.0),
        penalty_bounded=False,
        reference_trace=reference,
    )


def _mfcq_fail() -> ProblemEntry:
    prob = NlpProblem(
        "mfcq-fail", 1,
        f=lambda x: x[0],
        grad_f=lambda x: _a(1.0),
        hess_f=lambda x: np.zeros((1, 1)),
        m=1,
        g=lambda x: _a(x[0] ** 2),
        jac_g=lambda x: _a([2 * x[0]]),
        hess_g=lambda x: np.full((1, 1, 1), 2.0),
    )
    return ProblemEntry(
        name="mfcq-fail",
        description="x s.t. x^2 <= 0; feasible set {0}, minimiser without multipliers",
        problem=prob,
        x0=_a(0.0),
        minimizers=[_a(0.0)],
        cq_notes="grad g(0) = 0 so every CQ fails; no KKT point exists.",
        x_bar=_a(0.0),
        closed_form={
            # stationary point of x + rho/4 x^8:  1 + 2 rho x^7 = 0
            "penalty_x": lambda rho: _a(-(2.0 * rho) ** (-1.0 / 7.0)),
        },
    )


def _eqcon_quad() -> ProblemEntry:
    prob = NlpProblem(
        "eqcon-quad", 2,
        f=lambda x: x[0] ** 2 + x[1] ** 2,
        grad_f=lambda x: 2.0 * x,
        hess_f=lambda x: 2.0 * np.eye(2),
        p=1,
        h=lambda x: _a(x[0] + x[1] - 2.0),
        jac_h=lambda x: _a([1.0, 1.0]),
        hess_h=_zeros_hess(2, 1),
    )

    def penalty_x(rho):
        # 2t + rho(2t - 2) = 0
        return np.full(2, rho / (1.0 + rho))

    def auglag_x(rho, mu):
        # 2t + rho(2t - 2 + mu/rho) = 0
        return np.full(2, (2.0 * rho - mu) / (2.0 + 2.0 * rho))

    return ProblemEntry(
        name="eqcon-quad",
        description="x1^2 + x2^2 s.t. x1 + x2 = 2",
        problem=prob,
        x0=_a(2.0, 0.0),
        minimizers=[_a(1.0, 1.0)],
        kkt=[KktTriple(_a(1.0, 1.0), _a(-2.0), np.zeros(0))],
        cq_notes="LICQ holds everywhere.",
        x_bar=_a(1.0, 1.0),
        closed_form={"penalty_x": penalty_x, "auglag_x": auglag_x},
    )


def _saddle_escape() -> ProblemEntry:
    prob = NlpProblem(
        "saddle-escape", 2,
        f=lambda x: (x[0] ** 2 - 1.0) ** 2 + x[1] ** 2,
        grad_f=lambda x: _a(4.0 * x[0] * (x[0] ** 2 - 1.0), 2.0 * x[1]),
        hess_f=lambda x: np.diag([12.0 * x[0] ** 2 - 4.0, 2.0]),
    )
    return ProblemEntry(
        name="saddle-escape",
        description="(x1^2 - 1)^2 + x2^2, unconstrained; the origin is a saddle",
        problem=prob,
        x0=_a(0.0, 0.0),
        minimizers=[_a(1.0, 0.0), _a(-1.0, 0.0)],
        kkt=[KktTriple(_a(1.0, 0.0)), KktTriple(_a(-1.0, 0.0))],
        cq_notes="no constraints.",
        x_bar=_a(1.0, 0.0),
    )


def _box_ineq() -> ProblemEntry:
    prob = NlpProblem(
        "box-ineq", 2,
        f=lambda x: x[0] ** 2 + x[1] ** 2,
        grad_f=lambda x: 2.0 * x,
        hess_f=lambda x: 2.0 * np.eye(2),
        m=1,
        g=lambda x: _a(-x[0]),
        jac_g=lambda x: _a([-1.0, 0.0]),
        hess_g=_zeros_hess(2, 1),
    )
    return ProblemEntry(
        name="box-ineq",
        description="x1^2 + x2^2 s.t. x1 >= 0; weakly active bound at the solution",
        problem=prob,
        x0=_a(1.0, 1.0),
        minimizers=[_a(0.0, 0.0)],
        kkt=[KktTriple(_a(0.0, 0.0), np.zeros(0), _a(0.0))],
        cq_notes="LICQ holds; the active constraint has a zero multiplier.",
        x_bar=_a(0.0, 0.0),
    )


def _eqineq_quad() -> ProblemEntry:
    prob = NlpProblem(
        "eqineq-quad", 3,
        f=lambda x: float(x @ x),
        grad_f=lambda x: 2.0 * x,
        hess_f=lambda x: 2.0 * np.eye(3),
        p=1,
        h=lambda x: _a(x[0] + x[1] + x[2] - 3.0),
        jac_h=lambda x: _a([1.0, 1.0, 1.0]),
        hess_h=_zeros_hess(3, 1),
        m=1,
        g=lambda x: _a(2.0 - x[0]),
        jac_g=lambda x: _a([-1.0, 0.0, 0.0]),
        hess_g=_zeros_hess(3, 1),
    )
    return ProblemEntry(
        name="eqineq-quad",
        description="|x|^2 s.t. x1 + x2 + x3 = 3, x1 >= 2; both constraints active",
        problem=prob,
        x0=_a(3.0, 0.0, 0.0),
        minimizers=[_a(2.0, 0.5, 0.5)],
        kkt=[KktTriple(_a(2.0, 0.5, 0.5), _a(-1.0), _a(3.0))],
        cq_notes="LICQ holds; strict complementarity at the solution.",
        x_bar=_a(2.0, 0.5, 0.5),
    )


def _circle_ineq() -> ProblemEntry:
    prob = NlpProblem(
        "circle-ineq", 2,
        f=lambda x: x[0] + x[1],
        grad_f=lambda x: _a(1.0, 1.0),
        hess_f=lambda x: np.zeros((2, 2)),
        m=1,
        g=lambda x: _a(x[0] ** 2 + x[1] ** 2 - 2.0),
        jac_g=lambda x: _a([2.0 * x[0], 2.0 * x[1]]),
        hess_g=lambda x: 2.0 * np.eye(2)[None],
    )
    return ProblemEntry(
        name="circle-ineq",
        description="x1 + x2 s.t. x1^2 + x2^2 <= 2",
        problem=prob,
        x0=_a(0.0, 0.0),
        minimizers=[_a(-1.0, -1.0)],
        kkt=[KktTriple(_a(-1.0, -1.0), np.zeros(0), _a(0.5))],
        cq_notes="LICQ holds at the solution.",
        x_bar=_a(-1.0, -1.0),
    )


def _hyperbola_eq() -> ProblemEntry:
    prob = NlpProblem(
        "hyperbola-eq", 2,
        f=lambda x: x[0] * x[1],
        grad_f=lambda x: _a(x[1], x[0]),
        hess_f=lambda x: _a([0.0, 1.0], [1.0, 0.0]),
        p=1,
        h=lambda x: _a(x[0] ** 2 + x[1] ** 2 - 2.0),
        jac_h=lambda x: _a([2.0 * x[0], 2.0 * x[1]]),
        hess_h=lambda x: 2.0 * np.eye(2)[None],
    )
    return ProblemEntry(
        name="hyperbola-eq",
        description="x1 * x2 s.t. x1^2 + x2^2 = 2; indefinite objective on a circle",
        problem=prob,
        x0=_a(np.sqrt(2.0), 0.0),
        minimizers=[_a(1.0, -1.0), _a(-1.0, 1.0)],
        kkt=[KktTriple(_a(1.0, -1.0), _a(0.5)), KktTriple(_a(-1.0, 1.0), _a(0.5))],
        cq_notes="LICQ holds on the circle.",
        x_bar=_a(1.0, -1.0),
    )


_REGISTRY = {
    e.name: e
    for e in (
        _example_s3(), _mfcq_fail(), _eqcon_quad(), _saddle_escape(),
        _box_ineq(), _eqineq_quad(), _circle_ineq(), _hyperbola_eq(),
    )
}


def list_names() -> list:
    return sorted(_REGISTRY)


def get(name: str) -> ProblemEntry:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ProblemNotFound(name, list_names()) from None


def entries() -> list:
    return [_REGISTRY[n] for n in list_names()]
