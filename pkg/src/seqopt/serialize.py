"""Trace files and condition reports.

Trace file: one JSON object per line.  The first line is a header::

    {"schema": "seqopt-trace/1", "problem": ..., "method": ..., "origin": ...,
     "status": ..., "message": ..., "n": .., "p": .., "m": .., "params": {...}}

and every following line is one record with keys ``k, x, mu, omega, eps, rho,
residuals, feasibility, inner_iterations, inner_status, branch, extras,
flags``.  Floats are written with ``repr`` (shortest round-trip form), so a
parsed trace is bit-identical to the one written.
"""

from __future__ import annotations

import json
import math
from typing import Optional

import numpy as np

from .optimality import ConditionReport
from .trace import SolverTrace, TraceRecord

__all__ = ["SCHEMA", "TraceFormatError", "dump_trace", "load_trace", "write_trace", "read_trace", "format_report"]

SCHEMA = "seqopt-trace/1"


class TraceFormatError(ValueError):
    pass


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def _record_dict(r: TraceRecord) -> dict:
    return {
        "k": int(r.k),
        "x": _floats(r.x),
        "mu": _floats(r.mu),
        "omega": _floats(r.omega),
        "eps": float(r.eps),
        "rho": float(r.rho),
        "residuals": [float(v) for v in r.residuals],
        "feasibility": [float(v) for v in r.feasibility],
        "inner_iterations": int(r.inner_iterations),
        "inner_status": r.inner_status,
        "branch": r.branch,
        "extras": r.extras,
        "flags": list(r.flags),
    }


def dump_trace(trace: SolverTrace, n: int, p: int, m: int) -> str:
    header = {
        "schema": SCHEMA,
        "problem": trace.problem,
        "method": trace.method,
        "origin": trace.origin,
        "status": trace.status,
        "message": trace.message,
        "n": n, "p": p, "m": m,
        "params": trace.params,
    }
    lines = [json.dumps(header)]
    lines += [json.dumps(_record_dict(r)) for r in trace.records]
    return "\n".join(lines) + "\n"


def load_trace(text: str, dims: Optional[tuple] = None) -> tuple:
    """Parse a trace file; returns ``(trace, (n, p, m))``.

    ``dims`` (if given) must match the header dimensions.
    """
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"bad header: {exc}") from None
    if header.get("schema") != SCHEMA:
        raise TraceFormatError(f"unsupported schema {header.get('schema')!r}, expected {SCHEMA!r}")
    n, p, m = int(header["n"]), int(header["p"]), int(header["m"])
    if dims is not None and tuple(dims) != (n, p, m):
        raise TraceFormatError(f"trace dimensions {(n, p, m)} do not match problem {tuple(dims)}")

    trace = SolverTrace(
        problem=header["problem"], method=header["method"], origin=header.get("origin", "solver"),
        params=header.get("params", {}), status=header.get("status", ""), message=header.get("message", ""),
    )
    last_k = None
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            d = json.loads(line)
            rec = TraceRecord(
                k=int(d["k"]),
                x=np.array(d["x"], dtype=float),
                mu=np.array(d["mu"], dtype=float),
                omega=np.array(d["omega"], dtype=float),
                eps=float(d["eps"]),
                rho=float(d["rho"]),
                residuals=tuple(float(v) for v in d["residuals"]),
                feasibility=tuple(float(v) for v in d["feasibility"]),
                inner_iterations=int(d.get("inner_iterations", 0)),
                inner_status=d.get("inner_status", ""),
                branch=d.get("branch"),
                extras=d.get("extras", {}),
                flags=list(d.get("flags", [])),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from None
        if rec.x.shape != (n,) or rec.mu.shape != (p,) or rec.omega.shape != (m,):
            raise TraceFormatError(f"line {lineno}: array dimensions do not match header")
        if len(rec.residuals) != 4 or len(rec.feasibility) != 2:
            raise TraceFormatError(f"line {lineno}: expected 4 residuals and 2 feasibility values")
        if last_k is not None and rec.k <= last_k:
            raise TraceFormatError(f"line {lineno}: k must be strictly increasing")
        last_k = rec.k
        trace.records.append(rec)
    return trace, (n, p, m)


def write_trace(path, trace: SolverTrace, n: int, p: int, m: int):
    with open(path, "w") as fh:
        fh.write(dump_trace(trace, n, p, m))


def read_trace(path, dims: Optional[tuple] = None) -> tuple:
    with open(path) as fh:
        return load_trace(fh.read(), dims)


def _num(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _vec(a) -> str:
    if a is None:
        return "-"
    return "[" + ", ".join(repr(float(v)) for v in np.asarray(a).reshape(-1)) + "]"


def format_report(report: ConditionReport) -> str:
    """Structured text with a fixed field order: a header block, then one
    block per certified iteration."""
    o = report.options
    out = [
        "report: seqopt-condition/1",
        f"condition: {report.condition.value}",
        f"problem: {report.problem}",
        f"verdict: {report.verdict}",
        f"failing_k: {'-' if report.failing_k is None else report.failing_k}",
        f"reason: {report.reason or '-'}",
        f"x_star: {_vec(report.x_star)}",
        f"eps_rule: {o.eps_rule}",
        f"window: {o.window}",
        f"window_radius: {_num(report.window_radius)}",
        f"tol_act: {_num(o.tol_act)}",
        f"tol_mult: {_num(o.tol_mult)}",
        f"eps_slack: {_num(o.eps_slack)}",
        f"eps_monotone: {'yes' if report.eps_monotone else 'no'}",
        f"seed: {o.seed}",
        f"samples: {o.n_samples}",
        "note: finite-trace surrogate (tail window) of an asymptotic condition",
        f"witness: {_vec(report.witness)}",
    ]
    for c in report.checks:
        cert = c.certificate
        out += [
            "",
            f"[k={c.k}]",
            f"eps_recorded: {_num(c.eps_recorded)}",
            f"eps: {_num(c.eps)}",
            f"r_grad: {_num(c.residuals.r_grad)}",
            f"r_eq: {_num(c.residuals.r_eq)}",
            f"r_ineq: {_num(c.residuals.r_ineq)}",
            f"r_comp: {_num(c.residuals.r_comp)}",
            f"space: {c.space}",
            f"method: {cert.method if cert else '-'}",
            f"lambda_min: {_num(cert.lambda_min) if cert else '-'}",
            f"basis_dim: {cert.basis_dim if cert else '-'}",
        ]
        if cert is not None and cert.method == "sampled-cone":
            out += [
                f"in_cone_samples: {cert.n_in_cone}",
                f"sample_min: {_num(cert.sample_min)}",
                f"face_candidates: {cert.n_face_candidates}",
            ]
        out += [
            f"witness: {_vec(cert.witness) if cert else '-'}",
            f"passed: {'yes' if c.passed else 'no'}",
        ]
    return "\n".join(out) + "\n"
