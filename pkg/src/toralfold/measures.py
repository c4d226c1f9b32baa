"""Weighted-atom and binned representations of measures on the torus."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import PerturbedEndo
from .errors import InvalidInputError
from .potentials import Potential
from .torus import reduce_mod1

ATOM_NORM_TOL = 1e-12
HIST_NORM_TOL = 1e-9


def fsum_array(values) -> float:
    """Correctly rounded sum; independent of the order of ``values``."""
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


@dataclass(eq=False)
class AtomicMeasure:
    """Finitely many atoms with positive weights summing to 1.

    ``period`` and ``birkhoff`` are set for periodic-orbit approximants:
    every atom lies in ``Fix(g^period)`` and ``birkhoff[i]`` is the
    ``S_period phi`` that produced its weight.
    """

    points: np.ndarray
    weights: np.ndarray
    period: int | None = None
    birkhoff: np.ndarray | None = None
    log_partition: float | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != self.points.shape[:1]:
            raise InvalidInputError("one weight per atom required")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("weights must be finite and non-negative")
        total = fsum_array(self.weights)
        if abs(total - 1.0) > ATOM_NORM_TOL:
            raise InvalidInputError(f"weights sum to {total!r}, not 1")

    @classmethod
    def from_log_weights(cls, points, log_w, **kw) -> "AtomicMeasure":
        """Normalise ``exp(log_w)`` with the maximum factored out."""
        log_w = np.asarray(log_w, dtype=float)
        top = float(np.max(log_w))
        w = np.exp(log_w - top)
        z = fsum_array(w)
        return cls(points, w / z, log_partition=top + math.log(z), **kw)

    @property
    def m(self) -> int:
        return self.points.shape[-1]

    def __len__(self) -> int:
        return len(self.weights)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Atoms drawn with replacement according to the weights."""
        cdf = np.cumsum(self.weights)
        idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
        return self.points[np.minimum(idx, len(cdf) - 1)]


@dataclass(eq=False)
class GridHistogram:
    """Counts of deposits in a regular grid of ``resolution^m`` bins.

    Integer counts make merging exact and independent of order.
    """

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.dtype.kind not in "iu":
            raise InvalidInputError("histogram counts must be integers")
        if len(set(self.counts.shape)) != 1:
            raise InvalidInputError("histogram must have the same resolution on every axis")
        if self.total == 0:
            raise InvalidInputError("histogram is empty")

    @classmethod
    def empty(cls, resolution: int, m: int = 2) -> "GridHistogram":
        h = cls.__new__(cls)
        h.counts = np.zeros((resolution,) * m, dtype=np.int64)
        return h

    @property
    def resolution(self) -> int:
        return self.counts.shape[0]

    @property
    def m(self) -> int:
        return self.counts.ndim

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def masses(self) -> np.ndarray:
        return self.counts / self.total

    def bin_index(self, points) -> np.ndarray:
        """Flat bin indices of points in ``[0,1)^m``."""
        r = self.resolution
        cells = np.minimum((np.asarray(points) * r).astype(np.int64), r - 1)
        return np.ravel_multi_index(np.moveaxis(cells.reshape(-1, self.m), -1, 0), self.counts.shape)

    def deposit(self, points) -> None:
        idx = self.bin_index(points)
        self.counts += np.bincount(idx, minlength=self.counts.size).reshape(self.counts.shape)

    def merge(self, other: "GridHistogram") -> "GridHistogram":
        if other.counts.shape != self.counts.shape:
            raise InvalidInputError("cannot merge histograms of different shapes")
        return GridHistogram(self.counts + other.counts)

    def centers(self) -> np.ndarray:
        r = self.resolution
        axes = [(np.arange(r) + 0.5) / r] * self.m
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def l1_to_uniform(self) -> float:
        return fsum_array(np.abs(self.masses - 1.0 / self.counts.size))

    def l1_distance(self, other: "GridHistogram") -> float:
        return fsum_array(np.abs(self.masses - other.masses))

    def pushforward(self, g: PerturbedEndo, subdivisions: int = 8) -> np.ndarray:
        """Bin masses of ``g_* mu``, spreading each bin over ``subdivisions^m`` interior points."""
        r = self.resolution
        offs = (np.arange(subdivisions) + 0.5) / (subdivisions * r)
        sub = np.stack(np.meshgrid(*[offs] * self.m, indexing="ij"), axis=-1).reshape(-1, self.m)
        corners = self.centers().reshape(-1, self.m) - 0.5 / r
        mass = self.masses.ravel()
        out = np.zeros(self.counts.size)
        keep = np.flatnonzero(mass)
        for s in sub:
            pts = g.apply(reduce_mod1(corners[keep] + s))
            out += np.bincount(self.bin_index(pts), weights=mass[keep], minlength=out.size)
        return (out / len(sub)).reshape(self.counts.shape)

    def to_text(self) -> str:
        """Masses as plain text: row-major, space separated, one row per line."""
        rows = self.masses.reshape(self.resolution, -1)
        buf = io.StringIO()
        np.savetxt(buf, rows, fmt="%.17g", delimiter=" ")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, total: int) -> "GridHistogram":
        """Rebuild counts from masses written by :meth:`to_text` and the deposit total."""
        rows = np.loadtxt(io.StringIO(text), ndmin=2)
        r = rows.shape[0]
        m = round(math.log(rows.size) / math.log(r))
        counts = np.rint(rows.reshape((r,) * m) * total).astype(np.int64)
        return cls(counts)


def integrate(mu, psi, g: PerturbedEndo | None = None) -> float:
    """``int psi d mu`` for an :class:`AtomicMeasure` or :class:`GridHistogram`.

    ``psi`` is a :class:`~toralfold.potentials.Potential` (which needs ``g``)
    or a plain callable on ``(..., m)`` arrays.  Histograms use bin centres.
    Prehistory-dependent potentials can only be integrated against periodic
    approximants, where ``int psi = sum_x w_x S_n psi(x) / n`` by invariance.
    """
    if isinstance(psi, Potential):
        if g is None:
            raise InvalidInputError("integrating a potential needs the map")
        if psi.constant is not None:
            return float(psi.constant)
        if psi.needs_history:
            if not isinstance(mu, AtomicMeasure) or mu.period is None:
                raise InvalidInputError(f"{psi.name} can only be integrated against a periodic approximant")
            values = psi.periodic_sums(g, mu.points, mu.period) / mu.period
        else:
            pts = mu.points if isinstance(mu, AtomicMeasure) else mu.centers()
            values = psi.evaluate(g, pts)
    elif callable(psi):
        pts = mu.points if isinstance(mu, AtomicMeasure) else mu.centers()
        values = np.asarray(psi(pts), dtype=float)
    else:
        value = float(psi)
        return value
    w = mu.weights if isinstance(mu, AtomicMeasure) else mu.masses
    return fsum_array(np.broadcast_to(values, w.shape) * w)
