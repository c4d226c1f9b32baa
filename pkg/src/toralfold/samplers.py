"""Point samplers for the measures the estimators need.

A sampler produces ``units`` independent trajectories (a single point, a
forward orbit segment, a backward walk).  Work is split into fixed blocks
of :data:`~toralfold.streams.BLOCK` units, and every block draws only from
its own streams, so any grouping of blocks over workers gives the same
numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .dynamics import PerturbedEndo, preimage_branch
from .errors import InvalidInputError
from .measures import AtomicMeasure, GridHistogram, fsum_array
from .potentials import Potential
from .streams import (
    ATOM_DRAWS,
    BACKWARD_BRANCHES,
    BACKWARD_ROOTS,
    BLOCK,
    FORWARD_STARTS,
    HAAR_DRAWS,
    blocks,
    iter_blocks,
    run_blocks,
    stream,
)

# bins are accumulated over this many steps before one bincount call
_FLUSH = 64


class Sampler:
    """Base class; subclasses implement :meth:`steps`."""

    name = "sampler"

    def steps(self, g: PerturbedEndo, seed: int, block: int, count: int) -> Iterator[np.ndarray]:
        """Yield the trajectory points, one ``(count, m)`` array per time step."""
        raise NotImplementedError

    def representatives(self, g: PerturbedEndo, seed: int, block: int, count: int) -> np.ndarray:
        """One point per unit, distributed (approximately) as the target measure."""
        last = None
        for last in self.steps(g, seed, block, count):
            pass
        return last

    @property
    def length(self) -> int:
        return 1

    def describe(self) -> dict:
        return {"sampler": self.name, "length": self.length}


@dataclass
class HaarSampler(Sampler):
    """Independent Lebesgue-uniform points."""

    name = "haar"

    def steps(self, g, seed, block, count):
        yield stream(seed, HAAR_DRAWS, block).random((count, g.m))


@dataclass
class AtomSampler(Sampler):
    """Draws from an :class:`AtomicMeasure` by weight."""

    measure: AtomicMeasure
    name = "atoms"

    def steps(self, g, seed, block, count):
        yield self.measure.sample(stream(seed, ATOM_DRAWS, block), count)

    def describe(self):
        return {"sampler": self.name, "atoms": len(self.measure), "period": self.measure.period}


@dataclass
class HistogramSampler(Sampler):
    """Uniform points inside bins chosen by bin mass."""

    histogram: GridHistogram
    name = "histogram"

    def steps(self, g, seed, block, count):
        rng = stream(seed, ATOM_DRAWS, block)
        h = self.histogram
        cdf = np.cumsum(h.counts.ravel())
        flat = np.searchsorted(cdf, rng.integers(0, cdf[-1], size=count), side="right")
        cells = np.stack(np.unravel_index(flat, h.counts.shape), axis=-1)
        yield (cells + rng.random((count, g.m))) / h.resolution

    def describe(self):
        return {"sampler": self.name, "resolution": self.histogram.resolution}


@dataclass
class ForwardOrbitSampler(Sampler):
    """Lebesgue-uniform starts iterated ``transient`` steps, then ``length`` recorded steps."""

    transient: int = 100
    n_average: int = 1000
    name = "forward"

    def __post_init__(self):
        if self.transient < 0 or self.n_average < 1:
            raise InvalidInputError("transient must be >= 0 and length >= 1")

    @property
    def length(self) -> int:
        return self.n_average

    def steps(self, g, seed, block, count):
        x = stream(seed, FORWARD_STARTS, block).random((count, g.m))
        x = g.iterate(x, self.transient)
        for k in range(self.n_average):
            yield x
            if k + 1 < self.n_average:
                x = g.apply(x)

    def representatives(self, g, seed, block, count):
        return next(iter(self.steps(g, seed, block, count)))

    def describe(self):
        return {"sampler": self.name, "transient": self.transient, "length": self.n_average}


@dataclass
class BackwardWalkSampler(Sampler):
    """Backward walks with uniformly random branches from Lebesgue-uniform roots.

    A walk ``z = x_0, x_{-1}, ..., x_{-n}`` contributes ``x_0, ..., x_{-(n-1)}``,
    i.e. ``f^i y`` for ``i = 1..n`` with ``y = x_{-n}``.  ``burn_in`` drops
    that many points nearest the root (default none).
    """

    n_walk: int = 200
    burn_in: int = 0
    name = "backward"

    def __post_init__(self):
        if self.n_walk < 1 or not 0 <= self.burn_in < self.n_walk:
            raise InvalidInputError("need length >= 1 and 0 <= burn_in < length")

    @property
    def length(self) -> int:
        return self.n_walk - self.burn_in

    def steps(self, g, seed, block, count):
        x = stream(seed, BACKWARD_ROOTS, block).random((count, g.m))
        branch_rng = stream(seed, BACKWARD_BRANCHES, block)
        for i in range(self.n_walk):
            if i >= self.burn_in:
                yield x
            x = preimage_branch(g, x, branch_rng.integers(0, g.degree, size=count))

    def describe(self):
        return {"sampler": self.name, "length": self.n_walk, "burn_in": self.burn_in}


# -- block tasks ---------------------------------------------------------------------------


def _histogram_task(g, sampler, seed, block, count, resolution):
    h = GridHistogram.empty(resolution, g.m)
    pending = []
    for pts in sampler.steps(g, seed, block, count):
        pending.append(h.bin_index(pts))
        if len(pending) == _FLUSH:
            h.counts += np.bincount(np.concatenate(pending), minlength=h.counts.size).reshape(h.counts.shape)
            pending = []
    if pending:
        h.counts += np.bincount(np.concatenate(pending), minlength=h.counts.size).reshape(h.counts.shape)
    return h.counts


def sample_histogram(g, sampler: Sampler, units: int, resolution: int, seed: int, workers: int = 1) -> GridHistogram:
    """Deposit every trajectory point of ``units`` units into a grid histogram."""
    if units < 1:
        raise InvalidInputError("need at least one sample")
    tasks = [(g, sampler, seed, b, stop - start, resolution) for b, start, stop in blocks(units, BLOCK)]
    h = GridHistogram.empty(resolution, g.m)
    for counts in iter_blocks(_histogram_task, tasks, workers):
        h.counts += counts
    return h


def _unit_sums_task(g, sampler, seed, block, count, fn, shift):
    total = np.zeros(count)
    comp = np.zeros(count)
    for pts in sampler.steps(g, seed, block, count):
        values = fn.evaluate(g, pts) if isinstance(fn, Potential) else fn(pts)
        y = (values - shift) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


@dataclass
class MeanEstimate:
    """Mean of an observable over all sampled points with a between-unit standard error."""

    mean: float
    stderr: float
    units: int
    points: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "units": self.units, "points": self.points}


def sample_mean(g, sampler: Sampler, units: int, fn, seed: int, workers: int = 1, shift: float = 0.0) -> MeanEstimate:
    """Average ``fn`` over every trajectory point.

    Values are accumulated relative to ``shift`` (compensated along each
    trajectory, correctly rounded across trajectories), which makes the
    result exact whenever ``fn`` is the constant ``shift``.
    """
    if units < 1:
        raise InvalidInputError("need at least one sample")
    tasks = [(g, sampler, seed, b, stop - start, fn, shift) for b, start, stop in blocks(units, BLOCK)]
    sums = np.concatenate(run_blocks(_unit_sums_task, tasks, workers))
    L = sampler.length
    unit_means = sums / L
    centre = fsum_array(unit_means) / units
    if units > 1:
        var = fsum_array((unit_means - centre) ** 2) / (units - 1)
        se = math.sqrt(var / units)
    else:
        se = float("nan")
    return MeanEstimate(shift + centre, se, units, units * L)


def draw_points(g, sampler: Sampler, n: int, seed: int) -> list[tuple[int, np.ndarray]]:
    """Representatives grouped by block: ``[(block, points), ...]``."""
    return [(b, sampler.representatives(g, seed, b, stop - start)) for b, start, stop in blocks(n, BLOCK)]
