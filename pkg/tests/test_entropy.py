import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from toralfold.dynamics import example_map
from toralfold.entropy import (
    default_mean_phi,
    entropy_production,
    folding_entropy,
    folding_entropy_constant_degree,
    good_degree,
    jacobian_ratio,
    pesin_consistency,
)
from toralfold.errors import InvalidInputError, TreeBudgetError
from toralfold.gibbs import periodic_gibbs_approximant
from toralfold.potentials import Constant, TrigPoly, UnstableNegLogDet, Zero, cos_x
from toralfold.samplers import AtomSampler, BackwardWalkSampler, ForwardOrbitSampler, HaarSampler

LOG2 = math.log(2.0)
points = arrays(np.float64, 2, elements=st.floats(0, 1, exclude_max=True))
trig_potentials = st.builds(
    lambda a, b, k: TrigPoly(((a, (1, 0), 0.0, "cos"), (b, (k, 1), 0.3, "sin"))),
    st.floats(-1, 1),
    st.floats(-1, 1),
    st.integers(-2, 2),
)


@settings(max_examples=25, deadline=None)
@given(points, trig_potentials, st.integers(1, 4), st.sampled_from([0.0, 0.05]))
def test_jacobian_ratio_at_least_one(x, phi, m, eps):
    g = example_map(eps)
    assert jacobian_ratio(g, phi, x, m) >= 1.0


@pytest.mark.parametrize("m", [1, 2, 3, 5])
@pytest.mark.parametrize("phi", [Zero(), Constant(-2.5)], ids=["zero", "const"])
def test_jacobian_ratio_constant_is_d_to_m(perturbed, phi, m):
    assert jacobian_ratio(perturbed, phi, [0.31, 0.77], m) == 2.0**m


def test_jacobian_ratio_linear_closed_form(linear):
    """On the linear map the preimages of ``A x`` are ``x`` and ``x + A^{-1} k``."""
    phi = cos_x(0.5)
    x = np.array([0.13, 0.42])
    other = (x + np.linalg.solve(np.array([[2.0, 2.0], [2.0, 3.0]]), [1.0, 0.0])) % 1.0
    expected = 1.0 + math.exp(0.5 * math.cos(2 * math.pi * other[0]) - 0.5 * math.cos(2 * math.pi * x[0]))
    assert jacobian_ratio(linear, phi, x, 1) == pytest.approx(expected, rel=1e-13)


@settings(max_examples=25, deadline=None)
@given(points, trig_potentials, st.integers(1, 8))
def test_good_degree_monotone_and_bounded(x, phi, n):
    g = example_map(0.05)
    rng = np.random.default_rng(0)
    taus = [0.01, 0.05, 0.2, 1.0, 5.0]
    ds = [good_degree(g, phi, 0.0, x, n, t, rng) for t in taus]
    assert all(0 <= d <= 2**n for d in ds)
    assert ds == sorted(ds)
    assert good_degree(g, phi, 0.0, x, n, math.inf) == 2**n


def test_good_degree_rejects():
    g = example_map(0.0)
    with pytest.raises(InvalidInputError):
        good_degree(g, Zero(), 0.0, [0.1, 0.1], 3, 0.0)
    with pytest.raises(TreeBudgetError):
        good_degree(g, Zero(), 0.0, [0.1, 0.1], 30, 0.1)


@pytest.mark.parametrize("phi", [Zero(), Constant(3.0)], ids=["zero", "const"])
def test_constant_phi_folding_is_log_d(perturbed, phi):
    table = folding_entropy(perturbed, phi, HaarSampler(), (2, 5), (0.01, 0.5), 40)
    assert np.all(table.values == LOG2)
    assert np.all(table.excluded_rate == 0.0)


def test_haar_production_exactly_zero(linear):
    rep = entropy_production(folding_entropy_constant_degree(linear), linear, HaarSampler(), 3000)
    assert rep.entropy_production == 0.0
    assert rep.mean_log_det == LOG2


def test_report_identity_bit_exact(perturbed):
    rep = entropy_production((0.7, 0.01), perturbed, BackwardWalkSampler(100), 50)
    assert rep.entropy_production == rep.folding_entropy - rep.mean_log_det
    assert rep.stderr == math.hypot(0.01, rep.mean_log_det_stderr)


def test_report_grid_identity(linear):
    phi = cos_x(0.5)
    mu = periodic_gibbs_approximant(linear, phi, 6)
    table = folding_entropy(linear, phi, AtomSampler(mu), (4,), (0.1, 0.3), 60)
    rep = entropy_production(table, linear, AtomSampler(mu), 60)
    for row in rep.grid:
        assert row["production"] == row["folding"] - rep.mean_log_det
    assert rep.folding_entropy == table.entry(4, 0.3)[0]
    lines = rep.to_csv().strip().splitlines()
    assert lines[0] == "n,tau,value,stderr,excluded_rate" and len(lines) == 3


@settings(max_examples=8, deadline=None)
@given(trig_potentials, st.integers(0, 2**32))
def test_linear_folding_never_exceeds_log_d(phi, seed):
    """Hard bound ``d_n <= d^n``: folding values never exceed ``log d`` on a linear map."""
    g = example_map(0.0)
    table = folding_entropy(g, phi, HaarSampler(), (3, 6), (0.05, 0.5), 30, seed, mean_phi=0.0)
    vals = table.values[~np.isnan(table.values)]
    assert np.all(vals <= LOG2)
    rep = entropy_production(table, g, HaarSampler(), 30, seed)
    assert rep.mean_log_det == LOG2
    assert all(r["production"] <= 0.0 for r in rep.grid if not math.isnan(r["production"]))


def test_folding_decreases_in_tau(linear):
    phi = cos_x(0.5)
    mu = periodic_gibbs_approximant(linear, phi, 8)
    taus = (0.4, 0.2, 0.1, 0.05)
    table = folding_entropy(linear, phi, AtomSampler(mu), (8,), taus, 200)
    vals = table.values[0]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_excluded_samples_reported(linear):
    table = folding_entropy(linear, cos_x(0.5), HaarSampler(), (4,), (1e-6,), 50, mean_phi=10.0)
    assert table.excluded_rate[0, 0] == 1.0
    assert math.isnan(table.values[0, 0])


def test_default_mean_phi(linear):
    mean, period = default_mean_phi(linear, cos_x(0.5))
    assert period == 10
    assert 0.0 < mean < 0.5
    assert default_mean_phi(linear, Constant(1.25)) == (1.25, 0)


def test_folding_workers_identical(perturbed):
    phi = UnstableNegLogDet()
    kw = dict(n_list=(4,), tau_list=(0.1,), n_samples=2100, seed=3, mean_phi=-1.5)
    a = folding_entropy(perturbed, phi, ForwardOrbitSampler(100, 1), workers=1, **kw)
    b = folding_entropy(perturbed, phi, ForwardOrbitSampler(100, 1), workers=3, **kw)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.stderr, b.stderr)


@pytest.mark.parametrize("which", ["forward", "inverse"])
def test_pesin_linear(linear, which):
    rep = pesin_consistency(linear, which, 1000, 2)
    lu, ls = math.log((5 + 17**0.5) / 2), math.log((5 - 17**0.5) / 2)
    assert np.max(np.abs(rep.mean_exponents - [lu, ls])) < 1e-10
    assert np.max(rep.defects) < 1e-10
    # both routes give the topological entropy log lambda_u on the linear map
    assert rep.entropy == pytest.approx(lu, abs=1e-10)


def test_pesin_perturbed_defect(perturbed):
    rep = pesin_consistency(perturbed, "forward", 1000, 2)
    assert np.max(rep.defects) < 1e-10
