"""Periodic-orbit test for ``|det Dg|`` being cohomologous to a constant.

If an observable is cohomologous to a constant, all its periodic-orbit
averages coincide.  A positive spread between them is a certificate of the
opposite.  The observable defaults to ``log|det Dg|`` (the additive form);
``form="abs"`` uses ``|det Dg|`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import PerturbedEndo, periodic_points
from .errors import InvalidInputError
from .potentials import AbsDet, LogAbsDet, Potential

DEFAULT_TOL = 1e-6
DEFAULT_N_MAX = 4


@dataclass
class LivshitzReport:
    """Orbit averages ``(1/n) S_n psi`` over ``Fix(g^n)`` for each period ``n``."""

    averages: dict  # n -> array of averages, one per point of Fix(g^n)
    points: dict  # n -> array of the periodic points
    spread: float
    tol: float
    witnesses: tuple = field(default=())  # ((n, point, average) at the min, same at the max)

    @property
    def constant(self) -> bool:
        return not self.spread > self.tol

    @property
    def verdict(self) -> str:
        return "constant" if self.constant else "non-constant"

    def to_dict(self) -> dict:
        return {
            "spread": self.spread,
            "tol": self.tol,
            "verdict": self.verdict,
            "periods": {
                str(n): {
                    "count": int(len(a)),
                    "min": float(np.min(a)),
                    "max": float(np.max(a)),
                    "distinct": sorted({float(v) for v in np.round(a, 12)})[:16],
                }
                for n, a in self.averages.items()
            },
            "witnesses": [
                {"period": n, "point": list(map(float, p)), "average": float(v)} for n, p, v in self.witnesses
            ],
        }


def periodic_average_spread(
    g: PerturbedEndo,
    psi: Potential | None = None,
    n_max: int = DEFAULT_N_MAX,
    tol: float = DEFAULT_TOL,
    form: str = "log",
) -> LivshitzReport:
    """Averages of ``psi`` over every periodic point of period ``n <= n_max`` and their spread.

    ``form`` selects the default observable (``"log"`` for ``log|det Dg|``,
    ``"abs"`` for ``|det Dg|``) when ``psi`` is not given.
    """
    if n_max < 1:
        raise InvalidInputError("n_max must be >= 1")
    if psi is None:
        if form not in ("log", "abs"):
            raise InvalidInputError("form must be 'log' or 'abs'")
        psi = LogAbsDet() if form == "log" else AbsDet()
    averages, points = {}, {}
    lo = hi = None
    for n in range(1, n_max + 1):
        pts = periodic_points(g, n)
        avg = psi.orbit_sums(g, pts, n) / n
        averages[n], points[n] = avg, pts
        i, j = int(np.argmin(avg)), int(np.argmax(avg))
        if lo is None or avg[i] < lo[2]:
            lo = (n, pts[i], float(avg[i]))
        if hi is None or avg[j] > hi[2]:
            hi = (n, pts[j], float(avg[j]))
    spread = max(0.0, hi[2] - lo[2])
    return LivshitzReport(averages, points, spread, tol, (lo, hi))


@dataclass
class CohomologyVerdict:
    constant: bool
    spread: float
    predicted: dict
    report: LivshitzReport

    def to_dict(self) -> dict:
        return {
            "verdict": "constant" if self.constant else "non-constant",
            "spread": self.spread,
            "predicted": self.predicted,
            "livshitz": self.report.to_dict(),
        }


def cohomology_verdict(
    g: PerturbedEndo, tol: float = DEFAULT_TOL, n_max: int = DEFAULT_N_MAX, form: str = "log"
) -> CohomologyVerdict:
    """Decide whether ``|det Dg|`` looks cohomologous to a constant and predict production signs.

    Non-constant: the inverse SRB measure has negative and the SRB measure
    positive entropy production.  Constant: both vanish and both measures
    are absolutely continuous.
    """
    rep = periodic_average_spread(g, None, n_max, tol, form)
    if rep.constant:
        predicted = {"e_inverse_srb": "= 0", "e_srb": "= 0", "absolutely_continuous": True}
    else:
        predicted = {"e_inverse_srb": "< 0", "e_srb": "> 0", "absolutely_continuous": False}
    return CohomologyVerdict(rep.constant, rep.spread, predicted, rep)
