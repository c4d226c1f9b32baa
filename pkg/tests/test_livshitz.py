import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toralfold.dynamics import PerturbedEndo, TrigTerm, example_map
from toralfold.errors import InvalidInputError
from toralfold.livshitz import cohomology_verdict, periodic_average_spread
from toralfold.potentials import Coboundary, LogAbsDet, TrigPoly

SPREAD_005 = math.log((2 + 0.2 * math.pi) / (2 - 0.2 * math.pi))


def test_period_one_values(perturbed):
    rep = periodic_average_spread(perturbed, n_max=1)
    assert sorted(rep.averages[1]) == pytest.approx(sorted([math.log(2 - 0.2 * math.pi), math.log(2 + 0.2 * math.pi)]), abs=1e-14)
    assert abs(rep.spread - SPREAD_005) < 1e-12
    assert rep.verdict == "non-constant"
    (n_lo, p_lo, _), (n_hi, p_hi, _) = rep.witnesses
    assert tuple(np.round(p_hi, 12)) == (0.0, 0.0) and tuple(np.round(p_lo, 12)) == (0.0, 0.5)


def test_abs_form(perturbed):
    rep = periodic_average_spread(perturbed, n_max=1, form="abs")
    assert rep.spread == pytest.approx(0.4 * math.pi, abs=1e-12)
    with pytest.raises(InvalidInputError):
        periodic_average_spread(perturbed, form="cube")


def test_spread_grows_with_period(perturbed):
    rep = periodic_average_spread(perturbed, n_max=3)
    assert rep.spread >= SPREAD_005 - 1e-12
    assert set(rep.averages) == {1, 2, 3}


@pytest.mark.parametrize("matrix", [[[2, 2], [2, 3]], [[2, 1], [1, 1]], [[3, 1], [1, 1]], [[1, 1], [1, 2]], [[4, 1], [1, 2]]])
def test_linear_verdict_constant(matrix):
    v = cohomology_verdict(PerturbedEndo(matrix), n_max=3)
    assert v.constant and v.spread == 0.0
    assert v.predicted["e_inverse_srb"] == "= 0"


def test_perturbed_verdict(perturbed):
    v = cohomology_verdict(perturbed, n_max=2)
    assert not v.constant
    assert v.predicted == {"e_inverse_srb": "< 0", "e_srb": "> 0", "absolutely_continuous": False}


@settings(max_examples=10, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(-2, 2), st.floats(0, 6.0))
def test_coboundary_spread_invariance(a, b, k, phase):
    g = example_map(0.03)
    u = TrigPoly(((a, (1, k), phase, "cos"), (b, (0, 1), 0.0, "sin")))
    base = periodic_average_spread(g, LogAbsDet(), n_max=3)
    shifted = periodic_average_spread(g, LogAbsDet() + Coboundary(u), n_max=3)
    assert abs(base.spread - shifted.spread) < 1e-10
    for n in base.averages:
        assert np.max(np.abs(base.averages[n] - shifted.averages[n])) < 1e-10


def test_non_coboundary_changes_spread(perturbed):
    bump = TrigPoly(((0.3, (0, 1), 0.0, "cos"),))
    base = periodic_average_spread(perturbed, LogAbsDet(), n_max=1)
    moved = periodic_average_spread(perturbed, LogAbsDet() + bump, n_max=1)
    assert abs(base.spread - moved.spread) > 0.1


def test_determinant_preserving_perturbation():
    """A term on ``y`` with frequency ``(1, 1)`` keeps ``det Dg = 2`` since ``(1, 1) . A^{-1} e_2 = 0``."""
    g = PerturbedEndo([[2, 2], [2, 3]], [TrigTerm(1, 0.03, (1, 1))])
    x = np.random.default_rng(0).random((50, 2))
    assert np.max(np.abs(g.log_abs_det(x) - math.log(2))) < 1e-14
    v = cohomology_verdict(g, n_max=2)
    assert v.constant and v.spread < 1e-12
