"""Jacobian ratio, good-degree counts, folding entropy, entropy production, Pesin checks."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    TREE_BUDGET,
    PerturbedEndo,
    backward_walks,
    forward_orbit,
    lyapunov_exponents,
)
from .errors import InvalidInputError, TreeBudgetError
from .gibbs import max_period_within_budget, periodic_gibbs_approximant
from .measures import fsum_array, integrate
from .potentials import LogAbsDet, Potential
from .samplers import MeanEstimate, Sampler, sample_mean
from .streams import (
    BACKWARD_BRANCHES,
    BACKWARD_ROOTS,
    BLOCK,
    FORWARD_STARTS,
    PREHISTORY_BRANCHES,
    blocks,
    run_blocks,
    stream,
)
from .torus import torus_distance

DEFAULT_N_LIST = (6, 8, 10, 12)
DEFAULT_TAU_LIST = (0.2, 0.1, 0.05, 0.02)
MEAN_PHI_MAX_PERIOD = 12
# leaves expanded at once when a block is split into sub-batches
_LEAF_BATCH = 1 << 17
_SELF_MATCH = 1e-8


def _check_budget(g: PerturbedEndo, n: int, budget: int = TREE_BUDGET) -> None:
    size = g.degree**n
    if size > budget:
        raise TreeBudgetError(f"preimage tree has d^n = {size} leaves (budget {budget})", size, budget)


def jacobian_ratio(g: PerturbedEndo, phi: Potential, x, m: int, rng: np.random.Generator | None = None) -> float:
    """``sum over zeta in g^{-m}(g^m x) of exp(S_m phi(zeta)) / exp(S_m phi(x))``.

    The leaf of the preimage tree that coincides with ``x`` contributes
    exactly 1, so the ratio is never below 1 and equals ``d^m`` for
    constant ``phi``.
    """
    if m < 1:
        raise InvalidInputError("m must be >= 1")
    _check_budget(g, m)
    x = np.asarray(x, dtype=float)
    z = g.iterate(x, m)
    leaves, sums = phi.tree_sums(g, z[None], m, rng)
    leaves, sums = leaves[0], sums[0]
    dist = torus_distance(leaves, x)
    self_leaf = int(np.argmin(dist))
    if dist[self_leaf] > _SELF_MATCH:
        raise InvalidInputError("x was not recovered among the preimages of g^m(x)")
    own = float(phi.orbit_sums(g, x, m, rng))
    others = np.delete(sums, self_leaf)
    return 1.0 + fsum_array(np.exp(others - own))


def _leaf_averages(g, phi, x, n, rng):
    """Birkhoff averages ``S_n phi(y) / n`` over the leaves ``y`` of ``g^{-n}(g^n x)``, shape ``(N, d^n)``."""
    z = g.iterate(x, n)
    per = g.degree**n
    step = max(1, _LEAF_BATCH // per)
    out = np.empty((len(x), per))
    for s in range(0, len(x), step):
        _, sums = phi.tree_sums(g, z[s : s + step], n, rng)
        out[s : s + step] = sums / n
    return out


def good_degree(
    g: PerturbedEndo,
    phi: Potential,
    mean_phi: float,
    x,
    n: int,
    tau: float,
    rng: np.random.Generator | None = None,
) -> int:
    """``d_n(x)``: leaves ``y`` of ``g^{-n}(g^n x)`` with ``|S_n phi(y)/n - mean_phi| < tau``."""
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    _check_budget(g, n)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    avg = _leaf_averages(g, phi, x, n, rng)
    return int(np.sum(np.abs(avg[0] - mean_phi) < tau))


def default_mean_phi(g: PerturbedEndo, phi: Potential, n: int | None = None) -> tuple[float, int]:
    """``int phi`` against the periodic approximant of the largest period within budget (at most 12)."""
    if phi.constant is not None:
        return float(phi.constant), 0
    if n is None:
        n = max_period_within_budget(g, MEAN_PHI_MAX_PERIOD)
    mu = periodic_gibbs_approximant(g, phi, n)
    return integrate(mu, phi, g), n


@dataclass
class FoldingTable:
    """``(1/n) E[log d_n]`` over an ``n x tau`` grid, with standard errors and exclusion rates."""

    n_list: tuple
    tau_list: tuple
    values: np.ndarray
    stderr: np.ndarray
    excluded_rate: np.ndarray
    samples: int
    mean_phi: float
    parameters: dict = field(default_factory=dict)

    def entry(self, n: int, tau: float) -> tuple[float, float, float]:
        i = self.n_list.index(n)
        j = self.tau_list.index(tau)
        return float(self.values[i, j]), float(self.stderr[i, j]), float(self.excluded_rate[i, j])

    def rows(self):
        for i, n in enumerate(self.n_list):
            for j, tau in enumerate(self.tau_list):
                yield n, tau, float(self.values[i, j]), float(self.stderr[i, j]), float(self.excluded_rate[i, j])

    def to_dict(self) -> dict:
        return {
            "mean_phi": self.mean_phi,
            "samples": self.samples,
            "parameters": self.parameters,
            "grid": [
                {"n": n, "tau": t, "value": v, "stderr": s, "excluded_rate": e} for n, t, v, s, e in self.rows()
            ],
        }


def _folding_task(g, phi, sampler, seed, block, count, n_list, tau_list, mean_phi):
    x = sampler.representatives(g, seed, block, count)
    counts = np.empty((count, len(n_list), len(tau_list)), dtype=np.int64)
    for i, n in enumerate(n_list):
        rng = stream(seed, PREHISTORY_BRANCHES, block, n)
        dev = np.abs(_leaf_averages(g, phi, x, n, rng) - mean_phi)
        for j, tau in enumerate(tau_list):
            counts[:, i, j] = np.sum(dev < tau, axis=1)
    return counts


def folding_entropy(
    g: PerturbedEndo,
    phi: Potential,
    sampler: Sampler,
    n_list=DEFAULT_N_LIST,
    tau_list=DEFAULT_TAU_LIST,
    n_samples: int = 2000,
    seed: int = 0,
    mean_phi: float | None = None,
    workers: int = 1,
) -> FoldingTable:
    """Monte-Carlo ``(1/n) E[log d_n(x, tau)]`` for every ``(n, tau)`` on the grid.

    ``x`` is drawn from ``sampler``.  Each sample contributes
    ``log d + log(d_n / d^n) / n``, which is exactly ``log d`` when every
    leaf is good.  Samples with ``d_n = 0`` are left out of that grid cell
    and counted in ``excluded_rate``.  No limit in ``n`` or ``tau`` is taken.
    """
    n_list = tuple(int(n) for n in n_list)
    tau_list = tuple(float(t) for t in tau_list)
    if not n_list or not tau_list:
        raise InvalidInputError("n_list and tau_list must be non-empty")
    if any(n < 1 for n in n_list) or any(t <= 0 for t in tau_list):
        raise InvalidInputError("need n >= 1 and tau > 0")
    for n in n_list:
        _check_budget(g, n)
    mean_n = None
    if mean_phi is None:
        mean_phi, mean_n = default_mean_phi(g, phi)
    tasks = [
        (g, phi, sampler, seed, b, stop - start, n_list, tau_list, mean_phi)
        for b, start, stop in blocks(n_samples, BLOCK)
    ]
    counts = np.concatenate(run_blocks(_folding_task, tasks, workers))
    d = g.degree
    log_d = math.log(d)
    values = np.empty((len(n_list), len(tau_list)))
    stderr = np.empty_like(values)
    excluded = np.empty_like(values)
    for i, n in enumerate(n_list):
        full = d**n
        for j in range(len(tau_list)):
            c = counts[:, i, j]
            good = c[c > 0]
            excluded[i, j] = 1.0 - len(good) / len(c)
            if len(good) == 0:
                values[i, j] = stderr[i, j] = math.nan
                continue
            rel = np.array([math.log(k / full) / n for k in good.tolist()])
            centre = fsum_array(rel) / len(rel)
            values[i, j] = log_d + centre
            if len(rel) > 1:
                stderr[i, j] = math.sqrt(fsum_array((rel - centre) ** 2) / (len(rel) - 1) / len(rel))
            else:
                stderr[i, j] = math.nan
    params = {"seed": seed, "potential": phi.to_dict(), **sampler.describe()}
    if mean_n is not None:
        params["mean_phi_period"] = mean_n
    return FoldingTable(n_list, tau_list, values, stderr, excluded, n_samples, float(mean_phi), params)


def folding_entropy_constant_degree(g: PerturbedEndo) -> float:
    """``log d``, the folding entropy of the inverse SRB measure and of the maximal-entropy measure.

    The map is first checked to be ``d``-to-1 on random points.
    """
    g.check_degree()
    return math.log(g.degree)


@dataclass
class EntropyReport:
    """``e = F - int log|det Dg| dmu`` with standard errors.

    When ``F`` comes from a folding grid, ``grid`` holds one row per
    ``(n, tau)`` and the headline values are those of ``headline``.
    """

    folding_entropy: float
    folding_stderr: float
    mean_log_det: float
    mean_log_det_stderr: float
    entropy_production: float
    stderr: float
    parameters: dict = field(default_factory=dict)
    grid: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "folding_entropy": self.folding_entropy,
            "folding_stderr": self.folding_stderr,
            "mean_log_det": self.mean_log_det,
            "mean_log_det_stderr": self.mean_log_det_stderr,
            "entropy_production": self.entropy_production,
            "stderr": self.stderr,
            "parameters": self.parameters,
            "grid": self.grid,
        }

    def to_csv(self) -> str:
        """Columns ``n, tau, value, stderr, excluded_rate`` with ``value`` the entropy production."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "tau", "value", "stderr", "excluded_rate"])
        if self.grid:
            for row in self.grid:
                w.writerow([row["n"], row["tau"], repr(row["production"]), repr(row["production_stderr"]), repr(row["excluded_rate"])])
        else:
            w.writerow(["", "", repr(self.entropy_production), repr(self.stderr), repr(0.0)])
        return buf.getvalue()


def _hypot(a: float, b: float) -> float:
    a = 0.0 if math.isnan(a) else a
    b = 0.0 if math.isnan(b) else b
    return math.hypot(a, b)


def entropy_production(
    F,
    g: PerturbedEndo,
    sampler: Sampler,
    n_samples: int,
    seed: int = 0,
    workers: int = 1,
    headline: tuple | None = None,
) -> EntropyReport:
    """Entropy production from a folding entropy and sampled ``log|det Dg|``.

    ``F`` is a float (e.g. :func:`folding_entropy_constant_degree`), a
    ``(value, stderr)`` pair, or a :class:`FoldingTable`.
    """
    est: MeanEstimate = sample_mean(g, sampler, n_samples, LogAbsDet(), seed, workers, shift=math.log(g.degree))
    params = {"seed": seed, "units": n_samples, "log_det_points": est.points, **sampler.describe()}
    grid = []
    if isinstance(F, FoldingTable):
        for n, tau, v, s, ex in F.rows():
            grid.append(
                {
                    "n": n,
                    "tau": tau,
                    "folding": v,
                    "folding_stderr": s,
                    "production": v - est.mean,
                    "production_stderr": _hypot(s, est.stderr),
                    "excluded_rate": ex,
                }
            )
        n, tau = headline if headline is not None else (F.n_list[-1], F.tau_list[-1])
        f_val, f_se, _ = F.entry(n, tau)
        params.update({"n": n, "tau": tau, "mean_phi": F.mean_phi, "folding_samples": F.samples})
    elif isinstance(F, tuple):
        f_val, f_se = float(F[0]), float(F[1])
    else:
        f_val, f_se = float(F), 0.0
    e = f_val - est.mean
    return EntropyReport(f_val, f_se, est.mean, est.stderr, e, _hypot(f_se, est.stderr), params, grid)


@dataclass
class PesinReport:
    """Lyapunov exponents on sampled orbits and the entropy they predict."""

    which: str
    exponents: np.ndarray  # (units, m)
    mean_log_det: np.ndarray  # (units,)
    steps: int
    log_d: float

    @property
    def mean_exponents(self) -> np.ndarray:
        return np.array([fsum_array(col) / len(col) for col in self.exponents.T])

    @property
    def exponent_stderr(self) -> np.ndarray:
        k = len(self.exponents)
        if k < 2:
            return np.full(self.exponents.shape[1], math.nan)
        return np.std(self.exponents, axis=0, ddof=1) / math.sqrt(k)

    @property
    def defects(self) -> np.ndarray:
        return np.abs(np.sum(self.exponents, axis=1) - self.mean_log_det)

    @property
    def entropy(self) -> float:
        lam = self.mean_exponents
        if self.which == "forward":
            return fsum_array(lam[lam > 0])
        return self.log_d - fsum_array(lam[lam < 0])

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "exponents": self.mean_exponents.tolist(),
            "exponent_stderr": self.exponent_stderr.tolist(),
            "entropy": self.entropy,
            "max_defect": float(np.max(self.defects)),
            "steps": self.steps,
            "units": len(self.exponents),
        }


def pesin_consistency(
    g: PerturbedEndo,
    which: str = "forward",
    n: int = 10_000,
    units: int = 16,
    seed: int = 0,
    n_align: int = 64,
    transient: int = 100,
) -> PesinReport:
    """Sum of positive exponents for the SRB measure (``which='forward'``), or
    ``log d`` minus the sum of negative exponents for the inverse SRB measure
    (``which='inverse'``, exponents along uniformly random prehistories).
    """
    if which not in ("forward", "inverse"):
        raise InvalidInputError("which must be 'forward' or 'inverse'")
    if which == "forward":
        x0 = stream(seed, FORWARD_STARTS, 0).random((units, g.m))
        orbit = forward_orbit(g, x0, n + n_align, transient)
    else:
        roots = stream(seed, BACKWARD_ROOTS, 0).random((units, g.m))
        branches = stream(seed, BACKWARD_BRANCHES, 0).integers(0, g.degree, size=(n + n_align - 1, units))
        orbit = backward_walks(g, roots, branches)
    res = lyapunov_exponents(g, orbit, n_align)
    return PesinReport(which, res.exponents, res.mean_log_det, res.steps, math.log(g.degree))
