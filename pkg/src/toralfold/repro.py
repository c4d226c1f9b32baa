"""Reproduction pipeline: each claim is a function returning a :class:`ClaimResult`.

Targets are closed forms (eigenvalues of ``A``, the determinant at the two
fixed points) or sign conditions with standard errors.  Runtimes are part
of each check.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import PerturbedEndo, example_map, tree_leaves
from .entropy import (
    DEFAULT_N_LIST,
    DEFAULT_TAU_LIST,
    default_mean_phi,
    entropy_production,
    folding_entropy,
    folding_entropy_constant_degree,
    jacobian_ratio,
    pesin_consistency,
)
from .gibbs import forward_srb, inverse_srb, iter_periodic_log_weights, periodic_gibbs_approximant, pressure_estimate
from .livshitz import periodic_average_spread
from .measures import fsum_array
from .potentials import Potential, UnstableNegLogDet, Zero, cos_x
from .samplers import AtomSampler, BackwardWalkSampler, ForwardOrbitSampler, HaarSampler
from .streams import BOXES, stream
from .torus import periodic_lattice_points


@dataclass
class ClaimResult:
    name: str
    passed: bool
    values: dict
    runtime: float
    budget: float
    note: str = ""

    @property
    def within_budget(self) -> bool:
        return self.runtime < self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.values.items() if not isinstance(v, (list, dict)))
        return f"{status} {self.name} [{self.runtime:.2f}s / {self.budget:g}s] {shown}"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.ok,
            "numeric_pass": self.passed,
            "runtime_s": self.runtime,
            "budget_s": self.budget,
            "values": self.values,
            "note": self.note,
        }


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def linear_map() -> PerturbedEndo:
    return example_map(0.0)


def linear_log_moduli() -> tuple[float, float]:
    """``(log lambda_u, log lambda_s)`` for ``[[2,2],[2,3]]``, eigenvalues ``(5 +- sqrt 17)/2``."""
    r = math.sqrt(17.0)
    return math.log((5.0 + r) / 2.0), math.log((5.0 - r) / 2.0)


# -- claims ---------------------------------------------------------------------------------


def claim_counting(n_max: int = 8) -> ClaimResult:
    g = linear_map()

    def run():
        counts, dets = [], []
        for n in range(1, n_max + 1):
            B = g.linear.power_minus_identity(n)
            counts.append(len(periodic_lattice_points(B)))
            dets.append(abs(B.det))
        return counts, dets

    (counts, dets), dt = _timed(run)
    return ClaimResult("counting", counts == dets, {"counts": counts, "n_max": n_max}, dt, 1.0)


def claim_pressure(n: int = 10) -> ClaimResult:
    g = linear_map()
    value, dt = _timed(lambda: pressure_estimate(g, Zero(), n))
    target = linear_log_moduli()[0]
    return ClaimResult("pressure", abs(value - target) < 0.01, {"n": n, "value": value, "target": target}, dt, 5.0)


def claim_haar_zero(seed: int = 0, samples: int = 10_000) -> ClaimResult:
    g = linear_map()

    def run():
        F = folding_entropy_constant_degree(g)
        return entropy_production(F, g, HaarSampler(), samples, seed)

    rep, dt = _timed(run)
    e = rep.entropy_production
    return ClaimResult(
        "haar_zero_production", abs(e) <= 1e-12, {"F": rep.folding_entropy, "mean_log_det": rep.mean_log_det, "e": e}, dt, 1.0
    )


def claim_nonpositivity(seed: int = 0, samples: int = 2000, n_list=DEFAULT_N_LIST, workers: int = 1) -> ClaimResult:
    g = linear_map()
    phi = cos_x(0.5)

    def run():
        mean_phi, period = default_mean_phi(g, phi)
        mu = periodic_gibbs_approximant(g, phi, period)
        table = folding_entropy(g, phi, AtomSampler(mu), n_list, DEFAULT_TAU_LIST, samples, seed, mean_phi, workers)
        return entropy_production(table, g, AtomSampler(mu), samples, seed, workers)

    rep, dt = _timed(run)
    folding = [r["folding"] for r in rep.grid if not math.isnan(r["folding"])]
    prods = [r["production"] for r in rep.grid if not math.isnan(r["production"])]
    passed = all(v <= math.log(2.0) for v in folding) and all(e <= 1e-12 for e in prods)
    return ClaimResult(
        "nonpositivity",
        passed,
        {"max_folding": max(folding), "max_production": max(prods), "grid": rep.grid, "samples": samples},
        dt,
        120.0,
    )


def _box_masses(g, phi, n_atoms: int, centres: np.ndarray, half: float, chunk: int = 1 << 20) -> np.ndarray:
    """Unnormalised ``mu_n``-masses of the axis-parallel boxes ``|x - c|_inf < half`` (mod 1)."""
    ncell = int(math.floor(1.0 / (2.0 * half)))
    lo = np.floor((centres - half) * ncell).astype(np.int64) % ncell
    hi = np.floor((centres + half) * ncell).astype(np.int64) % ncell
    table: dict[int, list[int]] = {}
    for b in range(len(centres)):
        for cx in {lo[b, 0], hi[b, 0]}:
            for cy in {lo[b, 1], hi[b, 1]}:
                table.setdefault(int(cx) * ncell + int(cy), []).append(b)
    width = max(len(v) for v in table.values())
    lookup = np.full((ncell * ncell, width), -1, dtype=np.int64)
    for cell, bs in table.items():
        lookup[cell, : len(bs)] = bs
    masses = np.zeros(len(centres))
    top = -math.inf
    for pts, sums in iter_periodic_log_weights(g, phi, n_atoms, chunk):
        m = float(np.max(sums))
        if m > top:
            masses *= math.exp(top - m) if top > -math.inf else 0.0
            top = m
        w = np.exp(sums - top)
        cells = np.minimum((pts * ncell).astype(np.int64), ncell - 1)
        cand = lookup[cells[:, 0] * ncell + cells[:, 1]]
        for k in range(width):
            b = cand[:, k]
            hit = b >= 0
            if not np.any(hit):
                continue
            idx = np.flatnonzero(hit)
            delta = np.abs(pts[idx] - centres[b[idx]])
            delta = np.minimum(delta, 1.0 - delta)
            inside = np.all(delta < half, axis=-1)
            masses += np.bincount(b[idx[inside]], weights=w[idx[inside]], minlength=len(centres))
    return masses


def jacobian_oracle(
    g: PerturbedEndo,
    phi: Potential,
    m_list=(1, 2, 3),
    boxes: int = 100,
    n_atoms: int = 12,
    half: float = 0.0015,
    seed: int = 0,
) -> dict:
    """Ratio formula versus ``mu_n(g^m B) / mu_n(B)`` on small boxes ``B``.

    By invariance of the approximant, ``mu(g^m B)`` is the total mass of
    ``g^{-m}(g^m B)``, which for a linear map is the union of the translates
    of ``B`` centred at the preimages of ``g^m(centre)``.
    """
    centres = stream(seed, BOXES, 0).random((boxes, g.m))
    families = {m: tree_leaves(g, g.iterate(centres, m), m) for m in m_list}
    all_centres = np.concatenate([centres] + [families[m].reshape(-1, g.m) for m in m_list])
    masses = _box_masses(g, phi, n_atoms, all_centres, half)
    own = masses[:boxes]
    out = {}
    offset = boxes
    for m in m_list:
        k = g.degree**m
        fam = masses[offset : offset + boxes * k].reshape(boxes, k)
        offset += boxes * k
        oracle = np.array([fsum_array(row) for row in fam]) / own
        formula = np.array([jacobian_ratio(g, phi, c, m) for c in centres])
        out[m] = {"oracle": oracle, "formula": formula}
    return out


def claim_jacobian_oracle(seed: int = 0, boxes: int = 100, n_atoms: int = 12) -> ClaimResult:
    g = linear_map()
    phi = cos_x(0.5)
    res, dt = _timed(lambda: jacobian_oracle(g, phi, boxes=boxes, n_atoms=n_atoms, seed=seed))
    factors = {}
    for m, r in res.items():
        q = r["oracle"] / r["formula"]
        factors[f"max_factor_m{m}"] = float(np.max(np.maximum(q, 1.0 / q)))
    worst = max(factors.values())
    return ClaimResult("jacobian_oracle", worst <= 10.0, {"worst_factor": worst, **factors, "boxes": boxes}, dt, 180.0)


def perturbed_signs(
    eps: float = 0.05,
    seed: int = 0,
    walks: int = 10_000,
    walk_length: int = 200,
    orbits: int = 10_000,
    orbit_length: int = 1000,
    folding_samples: int = 512,
    n: int = 10,
    tau: float = 0.05,
    workers: int = 1,
):
    """Entropy production of the inverse SRB and SRB measures of the perturbed map."""
    g = example_map(eps)
    minus = entropy_production(folding_entropy_constant_degree(g), g, BackwardWalkSampler(walk_length), walks, seed, workers)
    phi = UnstableNegLogDet()
    mean_phi, _ = default_mean_phi(g, phi)
    table = folding_entropy(g, phi, ForwardOrbitSampler(100, 1), [n], DEFAULT_TAU_LIST, folding_samples, seed, mean_phi, workers)
    plus = entropy_production(table, g, ForwardOrbitSampler(100, orbit_length), orbits, seed, workers, headline=(n, tau))
    return minus, plus


def claim_perturbed_signs(seed: int = 0, workers: int = 1, **kw) -> ClaimResult:
    (minus, plus), dt = _timed(lambda: perturbed_signs(seed=seed, workers=workers, **kw))
    e_m, s_m = minus.entropy_production, minus.stderr
    e_p, s_p = plus.entropy_production, plus.stderr
    passed = e_m < 0 and abs(e_m) > 3 * s_m and e_p >= -3 * s_p and e_p > 0
    return ClaimResult(
        "perturbed_signs",
        passed,
        {
            "e_minus": e_m,
            "e_minus_se": s_m,
            "e_plus": e_p,
            "e_plus_se": s_p,
            "F_plus": plus.folding_entropy,
            "mean_log_det_plus": plus.mean_log_det,
            "mean_log_det_minus": minus.mean_log_det,
        },
        dt,
        600.0,
    )


def livshitz_target(eps: float = 0.05) -> float:
    c = 4.0 * math.pi * eps
    return math.log((2.0 + c) / (2.0 - c))


def claim_livshitz(eps: float = 0.05) -> ClaimResult:
    g = example_map(eps)
    rep, dt = _timed(lambda: periodic_average_spread(g, n_max=1))
    target = livshitz_target(eps)
    avgs = sorted(float(a) for a in rep.averages[1])
    return ClaimResult(
        "livshitz_spread",
        abs(rep.spread - target) <= 1e-6 and not rep.constant,
        {"spread": rep.spread, "target": target, "averages": avgs, "verdict": rep.verdict},
        dt,
        1.0,
    )


def claim_degenerate(
    seed: int = 0,
    forward_orbits: int = 800_000,
    walks: int = 4_000_000,
    lyapunov_steps: int = 10_000,
    grid: int = 512,
    workers: int = 1,
) -> ClaimResult:
    g = linear_map()

    def run():
        fwd = forward_srb(g, 100, 1000, forward_orbits, grid, seed, workers)
        inv = inverse_srb(g, 200, walks, grid, seed, workers)
        pf = pesin_consistency(g, "forward", lyapunov_steps, 4, seed)
        pi = pesin_consistency(g, "inverse", lyapunov_steps, 4, seed)
        return fwd, inv, pf, pi

    (fwd, inv, pf, pi), dt = _timed(run)
    lu, ls = linear_log_moduli()
    lyap_err = max(
        float(np.max(np.abs(r.exponents - np.array([lu, ls])))) for r in (pf, pi)
    )
    defect = max(float(np.max(r.defects)) for r in (pf, pi))
    values = {
        "forward_l1": fwd.l1_to_uniform(),
        "forward_deposits": fwd.total,
        "inverse_l1": inv.l1_to_uniform(),
        "inverse_deposits": inv.total,
        "lyapunov_error": lyap_err,
        "oseledets_defect": defect,
        "grid": grid,
    }
    passed = (
        values["forward_l1"] < 0.02
        and values["inverse_l1"] < 0.02
        and fwd.total >= 10**7
        and inv.total >= 10**7
        and lyap_err < 1e-6
        and defect < 1e-10
    )
    return ClaimResult("degenerate_identity", passed, values, dt, 300.0)


CLAIMS = {
    "counting": claim_counting,
    "pressure": claim_pressure,
    "haar_zero_production": claim_haar_zero,
    "nonpositivity": claim_nonpositivity,
    "jacobian_oracle": claim_jacobian_oracle,
    "perturbed_signs": claim_perturbed_signs,
    "livshitz_spread": claim_livshitz,
    "degenerate_identity": claim_degenerate,
}

# smaller sample sizes for smoke runs; sign and exact claims keep their meaning
QUICK = {
    "nonpositivity": {"samples": 200, "n_list": (6, 8)},
    "jacobian_oracle": {"boxes": 20, "n_atoms": 10},
    "perturbed_signs": {"walks": 2000, "orbits": 2000, "folding_samples": 128},
    "degenerate_identity": {"forward_orbits": 20_000, "walks": 100_000, "lyapunov_steps": 2000, "grid": 64},
}


@dataclass
class ReproReport:
    seed: int
    claims: list = field(default_factory=list)
    quick: bool = False

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.claims)

    @property
    def failing(self) -> list[str]:
        return [c.name for c in self.claims if not c.ok]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "quick": self.quick,
            "passed": self.passed,
            "failing": self.failing,
            "claims": [c.to_dict() for c in self.claims],
        }


def paper_repro(seed: int = 0, workers: int = 1, quick: bool = False, only=None) -> ReproReport:
    """Run every claim (or those named in ``only``) and collect the results.

    In quick mode the statistical claims run at reduced sample sizes and the
    degenerate histograms use a 64 x 64 grid.
    """
    report = ReproReport(seed, quick=quick)
    for name, fn in CLAIMS.items():
        if only and name not in only:
            continue
        kw = dict(QUICK.get(name, {})) if quick else {}
        if "seed" in fn.__code__.co_varnames:
            kw["seed"] = seed
        if "workers" in fn.__code__.co_varnames:
            kw["workers"] = workers
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            report.claims.append(fn(**kw))
    return report
