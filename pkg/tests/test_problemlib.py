import numpy as np
import pytest

from seqopt import problemlib
from seqopt.nlp_core import feasibility
from seqopt.optimality import akkt_residuals
from seqopt.penalty import phi_grad

MANDATORY = {"example-s3", "mfcq-fail", "eqcon-quad", "saddle-escape", "box-ineq"}


def test_mandatory_entries_registered():
    assert MANDATORY <= set(problemlib.list_names())


def test_list_is_sorted_and_stable():
    names = problemlib.list_names()
    assert names == sorted(names)
    assert names == problemlib.list_names()
    assert [e.name for e in problemlib.entries()] == names


def test_unknown_name_lists_available_entries():
    with pytest.raises(problemlib.ProblemNotFound) as info:
        problemlib.get("no-such-problem")
    for name in MANDATORY:
        assert name in str(info.value)


def test_example_s3_shape():
    e = problemlib.get("example-s3")
    prob = e.problem
    assert (prob.n, prob.p, prob.m) == (2, 0, 2)
    x = np.array([0.3, 0.7])
    assert prob.f(x) == pytest.approx(0.09 - 0.49)
    np.testing.assert_allclose(prob.g(x), [-0.3 + 0.7, -0.7])
    np.testing.assert_array_equal(e.x_bar, [0.0, 0.0])


def test_reference_trace_generator_any_range():
    e = problemlib.get("example-s3")
    tr = e.reference_trace(7, 9)
    assert [r.k for r in tr.records] == [7, 8, 9]
    np.testing.assert_array_equal(tr.records[0].x, [1 / 7, 1 / 7])
    assert tr.records[1].eps == 0.5
    np.testing.assert_array_equal(tr.records[2].omega, [0.0, 0.0])


@pytest.mark.parametrize("entry", problemlib.entries(), ids=lambda e: e.name)
def test_reference_minimizers_feasible(entry):
    for x in entry.minimizers:
        fm = feasibility(entry.problem, x)
        assert fm.eq_norm <= 1e-12 and fm.ineq_norm <= 1e-12


@pytest.mark.parametrize("entry", problemlib.entries(), ids=lambda e: e.name)
def test_reference_kkt_residuals_small(entry):
    for t in entry.kkt:
        assert akkt_residuals(entry.problem, t).max() <= 1e-10


def test_mixed_problem_has_both_constraint_types_active():
    mixed = []
    for e in problemlib.entries():
        prob = e.problem
        for x in e.minimizers:
            if prob.p and prob.m and np.any(np.abs(prob.g(x)) <= 1e-12):
                mixed.append(e.name)
    assert mixed


def test_mfcq_fail_has_no_kkt_point():
    e = problemlib.get("mfcq-fail")
    assert e.kkt == []
    # grad f = 1 while grad g(0) = 0: no multiplier closes the gap
    assert e.problem.jac_g(np.zeros(1))[0, 0] == 0.0


@pytest.mark.parametrize("rho", [10.0, 1e4, 1e8])
def test_closed_form_penalty_iterates_are_stationary(rho):
    for name in ("mfcq-fail", "eqcon-quad"):
        e = problemlib.get(name)
        x = e.closed_form["penalty_x"](rho)
        assert np.linalg.norm(phi_grad(e.problem, rho, x)) <= 1e-9 * max(1.0, rho * 1e-6)


def test_unbounded_entry_is_marked():
    assert not problemlib.get("example-s3").penalty_bounded
    assert problemlib.get("eqcon-quad").penalty_bounded
