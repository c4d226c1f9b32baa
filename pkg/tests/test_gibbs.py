import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from toralfold.dynamics import example_map
from toralfold.errors import InvalidInputError
from toralfold.gibbs import (
    birkhoff_sum,
    forward_srb,
    gibbs_ball_diagnostic,
    gibbs_ball_profile,
    inverse_srb,
    max_period_within_budget,
    periodic_gibbs_approximant,
    pressure_estimate,
)
from toralfold.measures import AtomicMeasure, GridHistogram, integrate
from toralfold.potentials import (
    Constant,
    LogAbsDet,
    StableLogDet,
    TrigPoly,
    UnstableNegLogDet,
    Zero,
    cos_x,
    parse_potential,
    potential_from_dict,
)

LOG_LU = math.log((5 + math.sqrt(17)) / 2)
LOG_LS = math.log((5 - math.sqrt(17)) / 2)

points = arrays(np.float64, 2, elements=st.floats(0, 1, exclude_max=True))


@settings(max_examples=30, deadline=None)
@given(points, st.integers(1, 15), st.integers(1, 15), st.sampled_from([0.0, 0.05]))
def test_birkhoff_additivity(x, n, k, eps):
    g = example_map(eps)
    phi = TrigPoly(((0.7, (1, 0), 0.0, "cos"), (0.3, (1, 2), 0.4, "sin")))
    whole = birkhoff_sum(g, phi, x, n + k)
    split = birkhoff_sum(g, phi, x, n) + birkhoff_sum(g, phi, g.iterate(x, n), k)
    assert abs(whole - split) < 1e-10


def test_stable_potential_linear_closed_form(linear):
    assert StableLogDet().evaluate(linear, np.array([0.2, 0.3])) == pytest.approx(LOG_LS, abs=1e-14)


def test_unstable_potential_linear_closed_form(linear):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = UnstableNegLogDet().orbit_sums(linear, np.array([[0.2, 0.3]]), 3, np.random.default_rng(0))
    assert v[0] == pytest.approx(-3 * LOG_LU, abs=1e-12)


def test_split_potentials_add_to_log_det(perturbed):
    """``Phi^s - Phi^u`` sums to ``log|det Dg|`` along periodic orbits."""
    mu = periodic_gibbs_approximant(perturbed, Zero(), 4)
    s = StableLogDet().periodic_sums(perturbed, mu.points, 4)
    u = UnstableNegLogDet().periodic_sums(perturbed, mu.points, 4)
    det = LogAbsDet().orbit_sums(perturbed, mu.points, 4)
    assert np.max(np.abs(s - u - det)) < 1e-9


def test_stable_potential_periodic_vs_orbit(perturbed):
    """Cycle eigenvalues and the pulled-back frame agree on the stable sum."""
    pts = periodic_gibbs_approximant(perturbed, Zero(), 3).points[:20]
    a = StableLogDet().periodic_sums(perturbed, pts, 3)
    b = StableLogDet(depth=40).orbit_sums(perturbed, pts, 3)
    assert np.max(np.abs(a - b)) < 1e-6


@pytest.mark.parametrize(
    "text, kind",
    [("zero", "zero"), ("logdet", "log_abs_det"), ("stable", "stable_log_det"), ("unstable", "unstable_neg_log_det"), ("cos:0.5", "trig"), ("const:1.5", "constant")],
)
def test_parse_potential_round_trip(text, kind):
    phi = parse_potential(text)
    assert phi.to_dict()["kind"] == kind
    assert potential_from_dict(phi.to_dict()).to_dict() == phi.to_dict()


def test_parse_potential_rejects():
    with pytest.raises(InvalidInputError):
        parse_potential("nope")
    with pytest.raises(InvalidInputError):
        TrigPoly(((1.0, (0.5, 0), 0.0, "cos"),))


@pytest.mark.parametrize("eps", [0.0, 0.05])
@pytest.mark.parametrize("phi", [Zero(), cos_x(0.5), LogAbsDet()], ids=["zero", "cos", "logdet"])
def test_approximant_normalised(eps, phi):
    g = example_map(eps)
    mu = periodic_gibbs_approximant(g, phi, 5)
    assert abs(math.fsum(mu.weights) - 1.0) < 1e-12
    assert len(mu) == abs(g.linear.power_minus_identity(5).det)


@settings(max_examples=15, deadline=None)
@given(st.floats(-20, 20, allow_nan=False))
def test_constant_shift_invariance(c):
    g = example_map(0.0)
    base = cos_x(0.5)
    mu0 = periodic_gibbs_approximant(g, base, 6)
    mu1 = periodic_gibbs_approximant(g, base + Constant(c), 6)
    np.testing.assert_allclose(mu1.weights, mu0.weights, rtol=1e-12, atol=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        r0 = gibbs_ball_profile(mu0, g, base, [0.1, 0.2], 0, 0.25)
        r1 = gibbs_ball_profile(mu1, g, base + Constant(c), [0.1, 0.2], 0, 0.25)
    np.testing.assert_allclose(r1, r0, rtol=1e-10)


def test_atomic_measure_validation():
    with pytest.raises(InvalidInputError):
        AtomicMeasure(np.zeros((2, 2)), np.array([0.5, 0.6]))
    with pytest.raises(InvalidInputError):
        AtomicMeasure(np.zeros((2, 2)), np.array([1.5, -0.5]))


def test_haar_approximant_integrals(linear):
    """Zero potential on the linear map: equidistributed periodic points."""
    mu = periodic_gibbs_approximant(linear, Zero(), 10)
    assert abs(integrate(mu, lambda p: np.cos(2 * np.pi * p[..., 0]))) < 1e-12
    assert integrate(mu, LogAbsDet(), linear) == pytest.approx(math.log(2), abs=1e-15)


def test_max_period(linear, perturbed):
    assert max_period_within_budget(perturbed, 12) == 9
    assert max_period_within_budget(linear, 12) == 10


def test_pressure_values(linear, perturbed):
    assert pressure_estimate(linear, Zero(), 10) == pytest.approx(LOG_LU, abs=1e-3)
    # constant potential shortcut
    assert pressure_estimate(linear, Constant(0.25), 10) == pytest.approx(pressure_estimate(linear, Zero(), 10) + 0.25, abs=1e-15)
    # the stable potential has pressure log 2 on the linear map (lambda_u * lambda_s = det = 2)
    assert pressure_estimate(linear, StableLogDet(), 10) == pytest.approx(math.log(2), abs=1e-3)
    assert abs(pressure_estimate(perturbed, UnstableNegLogDet(), 8)) < 0.01


def test_pressure_streaming_matches_direct(linear):
    phi = cos_x(0.5)
    mu = periodic_gibbs_approximant(linear, phi, 7)
    assert pressure_estimate(linear, phi, 7) == pytest.approx(mu.log_partition / 7, abs=1e-12)


def test_gibbs_ball_ratios_bounded(linear):
    phi = cos_x(0.5)
    mu = periodic_gibbs_approximant(linear, phi, 10)
    rng = np.random.default_rng(5)
    for x in rng.random((5, 2)):
        r = gibbs_ball_profile(mu, linear, phi, x, 4)
        assert np.all((r[1:] > 0.1) & (r[1:] < 10))


def test_gibbs_ball_gap_warns(linear):
    mu = periodic_gibbs_approximant(linear, Zero(), 6)
    with pytest.warns(RuntimeWarning):
        gibbs_ball_diagnostic(mu, linear, Zero(), [0.1, 0.1], 3)


def test_srb_parameter_floors(linear):
    with pytest.raises(InvalidInputError):
        forward_srb(linear, n_transient=10)
    with pytest.raises(InvalidInputError):
        inverse_srb(linear, n_walk=50)


def test_histogram_normalised_and_round_trip(linear):
    h = inverse_srb(linear, 100, 300, 16, seed=3)
    assert h.total == 300 * 100
    assert abs(math.fsum(h.masses.ravel()) - 1.0) < 1e-9
    back = GridHistogram.from_text(h.to_text(), h.total)
    assert np.array_equal(back.counts, h.counts)
    rows = h.to_text().strip().splitlines()
    assert len(rows) == 16 and all(len(r.split(" ")) == 16 for r in rows)


@pytest.mark.parametrize("builder", ["forward", "inverse"])
def test_srb_determinism_across_workers(perturbed, builder):
    if builder == "forward":
        run = lambda w: forward_srb(perturbed, 100, 1000, 2100, 32, 7, w)
    else:
        run = lambda w: inverse_srb(perturbed, 100, 2100, 32, 7, w)
    a, b = run(1), run(3)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(run(1).counts, a.counts)


def test_pushforward_defect_decreases(perturbed):
    """``g_* mu`` and ``mu`` approach each other as the sample grows."""
    defects = []
    for n in (200, 3000):
        h = forward_srb(perturbed, 100, 1000, n, 64, seed=0)
        defects.append(float(np.sum(np.abs(h.pushforward(perturbed) - h.masses))))
    assert defects[1] < defects[0]


def test_linear_srb_near_uniform(linear):
    h = forward_srb(linear, 100, 1000, 1000, 32, seed=1)
    assert h.l1_to_uniform() < 0.05


def test_perturbed_measures_differ(perturbed):
    """The perturbed map's two SRB measures are not Lebesgue: both tilt along y."""
    f = forward_srb(perturbed, 100, 1000, 2000, 32, seed=0)
    b = inverse_srb(perturbed, 200, 10000, 32, seed=0)
    fy = f.masses.sum(axis=0)
    by = b.masses.sum(axis=0)
    assert f.l1_to_uniform() > 0.05 and b.l1_to_uniform() > 0.05
    assert float(np.sum(np.abs(fy - by))) > 0.05
