"""Birkhoff sums, periodic-orbit equilibrium approximants, pressure and SRB estimators."""

from __future__ import annotations

import math
import warnings
from typing import Iterator

import numpy as np

from .dynamics import PerturbedEndo, periodic_budget, periodic_points
from .errors import InvalidInputError, TreeBudgetError
from .measures import AtomicMeasure, GridHistogram, fsum_array
from .potentials import Potential, Zero
from .samplers import BackwardWalkSampler, ForwardOrbitSampler, sample_histogram
from .torus import iter_periodic_lattice_points, torus_distance

DEFAULT_GRID = 512
BALL_RADIUS = 0.25
BALL_GAP = 6


def birkhoff_sum(g: PerturbedEndo, phi: Potential, x, n: int, rng: np.random.Generator | None = None):
    """``S_n phi(x) = phi(x) + phi(g x) + ... + phi(g^{n-1} x)`` by forward iteration."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    out = phi.orbit_sums(g, x, n, rng)
    return float(out) if np.ndim(out) == 0 else out


def max_period_within_budget(g: PerturbedEndo, n_max: int = 12, budget: int | None = None) -> int:
    """Largest ``n <= n_max`` with ``|det(A^n - I)| <= budget``."""
    budget = periodic_budget(g, budget)
    best = 0
    for n in range(1, n_max + 1):
        if g.linear.power_minus_identity(n).degree <= budget:
            best = n
    if best == 0:
        raise TreeBudgetError("no period fits the budget", g.linear.power_minus_identity(1).degree, budget)
    return best


def periodic_gibbs_approximant(g: PerturbedEndo, phi: Potential, n: int, budget: int | None = None) -> AtomicMeasure:
    """Atoms on ``Fix(g^n)`` with weights proportional to ``exp(S_n phi)``."""
    pts = periodic_points(g, n, budget)
    sums = phi.periodic_sums(g, pts, n)
    return AtomicMeasure.from_log_weights(pts, sums, period=n, birkhoff=sums)


def iter_periodic_log_weights(
    g: PerturbedEndo, phi: Potential, n: int, chunk: int = 1 << 20, budget: int | None = None
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Stream ``(points, S_n phi)`` over ``Fix(g^n)`` without normalising.

    Linear maps are enumerated exactly in chunks, so ``|Fix|`` may far
    exceed ``budget``; perturbed maps need every orbit at once and respect it.
    """
    if g.is_linear:
        B = g.linear.power_minus_identity(n)
        for pts in iter_periodic_lattice_points(B, chunk):
            yield pts, phi.periodic_sums(g, pts, n)
    else:
        pts = periodic_points(g, n, budget)
        yield pts, phi.periodic_sums(g, pts, n)


def pressure_estimate(g: PerturbedEndo, phi: Potential, n: int, budget: int | None = None) -> float:
    """``(1/n) log sum_{x in Fix(g^n)} exp(S_n phi(x))``.

    For constant ``phi = c`` the sum is ``|det(A^n - I)| e^{nc}`` (the number
    of periodic points is a conjugacy invariant), so no orbit is computed.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    c = phi.constant
    if c is not None:
        count = g.linear.power_minus_identity(n).degree
        base = math.log(count) / n
        return base if isinstance(phi, Zero) else base + c
    top = -math.inf
    scaled = 0.0
    for _, sums in iter_periodic_log_weights(g, phi, n, budget=budget):
        m = float(np.max(sums))
        if m > top:
            scaled *= math.exp(top - m) if top > -math.inf else 0.0
            top = m
        scaled += fsum_array(np.exp(sums - top))
    return (top + math.log(scaled)) / n


def forward_srb(
    g: PerturbedEndo,
    n_transient: int = 100,
    n_average: int = 1000,
    n_samples: int = 10_000,
    grid: int = DEFAULT_GRID,
    seed: int = 0,
    workers: int = 1,
) -> GridHistogram:
    """Histogram of ``g^k(x_0)`` over the averaging window, for Lebesgue-uniform ``x_0``."""
    if n_transient < 100 or n_average < 1000:
        raise InvalidInputError("need n_transient >= 100 and n_average >= 1000")
    sampler = ForwardOrbitSampler(n_transient, n_average)
    return sample_histogram(g, sampler, n_samples, grid, seed, workers)


def inverse_srb(
    g: PerturbedEndo,
    n_walk: int = 200,
    n_samples: int = 10_000,
    grid: int = DEFAULT_GRID,
    seed: int = 0,
    workers: int = 1,
    burn_in: int = 0,
) -> GridHistogram:
    """Histogram of every point of uniformly-branching backward walks from Lebesgue-uniform roots.

    With constant degree the uniform branch choice gives each depth-``n``
    preimage the weight ``1/d^n``.  All ``n_walk`` points ``f^i y``,
    ``i = 1..n_walk``, are deposited unless ``burn_in`` is set.
    """
    if n_walk < 100:
        raise InvalidInputError("need n_walk >= 100")
    sampler = BackwardWalkSampler(n_walk, burn_in)
    return sample_histogram(g, sampler, n_samples, grid, seed, workers)


def bowen_ball_masses(mu: AtomicMeasure, g: PerturbedEndo, x, n_max: int, eps: float) -> np.ndarray:
    """``mu(B_n(x, eps))`` for ``n = 0..n_max``; ``n = 0`` is the metric ball.

    ``B_n(x, eps)`` is the set of ``y`` with ``d(g^i y, g^i x) < eps`` for
    ``0 <= i < n``.
    """
    x = np.asarray(x, dtype=float)
    idx = np.flatnonzero(torus_distance(mu.points, x) < eps)
    y = mu.points[idx]
    xi = x
    masses = [fsum_array(mu.weights[idx])]
    for n in range(1, n_max + 1):
        if n > 1:
            y = g.apply(y)
            xi = g.apply(xi)
            keep = torus_distance(y, xi) < eps
            idx, y = idx[keep], y[keep]
        masses.append(fsum_array(mu.weights[idx]))
    return np.array(masses)


def gibbs_ball_diagnostic(
    mu: AtomicMeasure,
    g: PerturbedEndo,
    phi: Potential,
    x,
    n: int,
    eps_ball: float = BALL_RADIUS,
    pressure: float | None = None,
) -> float:
    """``mu(B_n(x, eps)) / exp(S_n phi(x) - n P)``, a diagnostic of the Gibbs property.

    ``P`` defaults to the approximant's own ``(1/N) log`` partition sum.
    Warns when ``N < n + 6`` or the Bowen ball holds no atom.
    """
    return float(gibbs_ball_profile(mu, g, phi, x, n, eps_ball, pressure)[n])


def gibbs_ball_profile(mu, g, phi, x, n_max, eps_ball=BALL_RADIUS, pressure=None) -> np.ndarray:
    """:func:`gibbs_ball_diagnostic` for every ``n = 0..n_max`` in one pass."""
    if n_max < 0:
        raise InvalidInputError("n must be >= 0")
    if pressure is None:
        if mu.period is None or mu.log_partition is None:
            raise InvalidInputError("pressure is required for measures that are not periodic approximants")
        pressure = mu.log_partition / mu.period
    if mu.period is not None and mu.period < n_max + BALL_GAP:
        warnings.warn(
            f"approximant period {mu.period} is below n + {BALL_GAP} = {n_max + BALL_GAP}",
            RuntimeWarning,
            stacklevel=2,
        )
    x = np.asarray(x, dtype=float)
    masses = bowen_ball_masses(mu, g, x, n_max, eps_ball)
    if masses[-1] == 0.0:
        warnings.warn("empty Bowen ball: no atom within eps of the orbit", RuntimeWarning, stacklevel=2)
    sums = np.array([0.0] + [float(phi.orbit_sums(g, x, k)) for k in range(1, n_max + 1)])
    return masses / np.exp(sums - np.arange(n_max + 1) * pressure)
