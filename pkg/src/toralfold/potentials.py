"""Observables on the torus and their Birkhoff sums.

Point potentials (constants, trigonometric polynomials, ``log|det Dg|``,
the stable potential) are functions of ``x`` alone.  The unstable potential
depends on a prehistory of ``x`` through the unstable direction; when none
is supplied a random backward walk of the stored depth is drawn.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import (
    DIRECTION_DEPTH,
    PerturbedEndo,
    Prehistory,
    _det,
    _matmul,
    _qr,
    _solve_cols,
    backward_walks,
    forward_orbit,
    generic_frame,
    tree_leaf_sums,
    unstable_frame,
)
from .errors import InvalidInputError
from .streams import PREHISTORY_BRANCHES, stream

TWO_PI = 2.0 * math.pi


class Potential:
    """Base class.  Subclasses override :meth:`evaluate` or :meth:`orbit_sums`."""

    #: value when the potential is constant, else ``None``
    constant: float | None = None
    #: true when the value depends on a prehistory rather than the point
    needs_history: bool = False
    name: str = "potential"

    def evaluate(self, g: PerturbedEndo, x) -> np.ndarray:
        raise NotImplementedError(f"{self.name} is not a point potential")

    def orbit_sums(self, g: PerturbedEndo, x, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """``S_n phi(x) = phi(x) + ... + phi(g^{n-1} x)`` for a batch ``(..., m)``."""
        if n < 0:
            raise InvalidInputError("n must be non-negative")
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for _ in range(n):
            total = total + self.evaluate(g, x)
            x = g.apply(x)
        return total

    def periodic_sums(self, g: PerturbedEndo, x, n: int) -> np.ndarray:
        """``S_n phi`` at points of ``Fix(g^n)``, using the periodic prehistory where relevant."""
        return self.orbit_sums(g, x, n)

    def tree_sums(self, g: PerturbedEndo, roots, n: int, rng: np.random.Generator | None = None):
        """Leaves of the depth-``n`` preimage trees of ``roots`` and their ``S_n phi``.

        Returns ``(leaves, sums)`` of shapes ``(N, d^n, m)`` and ``(N, d^n)``.
        """
        return tree_leaf_sums(g, roots, n, lambda pts, _: (self.evaluate(g, pts), None))

    def to_dict(self) -> dict:
        return {"kind": self.name}

    def __add__(self, other: "Potential") -> "Potential":
        return Sum((self, other))


@dataclass(frozen=True)
class Zero(Potential):
    constant = 0.0
    name = "zero"

    def evaluate(self, g, x):
        return np.zeros(np.shape(x)[:-1])

    def orbit_sums(self, g, x, n, rng=None):
        return np.zeros(np.shape(x)[:-1])

    def tree_sums(self, g, roots, n, rng=None):
        leaves, _ = tree_leaf_sums(g, roots, n)
        return leaves, np.zeros(leaves.shape[:-1])


@dataclass(frozen=True)
class Constant(Potential):
    value: float = 0.0
    name = "constant"

    @property
    def constant(self) -> float:  # type: ignore[override]
        return float(self.value)

    def evaluate(self, g, x):
        return np.full(np.shape(x)[:-1], float(self.value))

    def orbit_sums(self, g, x, n, rng=None):
        return np.full(np.shape(x)[:-1], n * float(self.value))

    def tree_sums(self, g, roots, n, rng=None):
        leaves, _ = tree_leaf_sums(g, roots, n)
        return leaves, np.full(leaves.shape[:-1], n * float(self.value))

    def to_dict(self):
        return {"kind": self.name, "value": float(self.value)}


@dataclass(frozen=True)
class TrigPoly(Potential):
    """``sum_j a_j * f_j(2 pi <k_j, x> + phase_j)`` with ``f_j`` in ``{cos, sin}``.

    ``terms`` holds ``(amplitude, frequency, phase, kind)`` tuples.
    """

    terms: tuple = ()
    name = "trig"

    def __post_init__(self):
        clean = []
        for i, t in enumerate(self.terms):
            amp, freq, phase, kind = t
            if kind not in ("cos", "sin"):
                raise InvalidInputError(f"terms[{i}].kind must be 'cos' or 'sin'")
            for j, f in enumerate(freq):
                if isinstance(f, bool) or not float(f).is_integer():
                    raise InvalidInputError(f"terms[{i}].frequency[{j}] = {f!r} is not an integer")
            clean.append((float(amp), tuple(int(f) for f in freq), float(phase), kind))
        object.__setattr__(self, "terms", tuple(clean))

    @property
    def constant(self) -> float | None:  # type: ignore[override]
        if all(a == 0.0 for a, *_ in self.terms):
            return 0.0
        return None

    def evaluate(self, g, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for amp, freq, phase, kind in self.terms:
            theta = TWO_PI * (x @ np.asarray(freq, dtype=float)) + phase
            out = out + amp * (np.cos(theta) if kind == "cos" else np.sin(theta))
        return out

    def to_dict(self):
        return {
            "kind": self.name,
            "terms": [
                {"amplitude": a, "frequency": list(f), "phase": p, "fn": k} for a, f, p, k in self.terms
            ],
        }


def cos_x(amplitude: float = 0.5) -> TrigPoly:
    """``amplitude * cos(2 pi x_1)``, the test potential used throughout."""
    return TrigPoly(((amplitude, (1, 0), 0.0, "cos"),))


@dataclass(frozen=True)
class LogAbsDet(Potential):
    """``log|det Dg(x)|``; exactly ``log d`` for a linear map."""

    name = "log_abs_det"

    def evaluate(self, g, x):
        return g.log_abs_det(x)


@dataclass(frozen=True)
class AbsDet(Potential):
    """``|det Dg(x)|`` without the logarithm."""

    name = "abs_det"

    def evaluate(self, g, x):
        x = np.asarray(x, dtype=float)
        if g.is_linear:
            return np.full(x.shape[:-1], float(g.degree))
        return np.abs(_det(g.derivative(x)))


@dataclass(frozen=True)
class Coboundary(Potential):
    """``u(g x) - u(x)`` for a point potential ``u``."""

    u: Potential = field(default_factory=Zero)
    name = "coboundary"

    def evaluate(self, g, x):
        x = np.asarray(x, dtype=float)
        return self.u.evaluate(g, g.apply(x)) - self.u.evaluate(g, x)

    def to_dict(self):
        return {"kind": self.name, "u": self.u.to_dict()}


@dataclass(frozen=True)
class Sum(Potential):
    parts: tuple = ()
    name = "sum"

    @property
    def constant(self) -> float | None:  # type: ignore[override]
        values = [p.constant for p in self.parts]
        return None if any(v is None for v in values) else float(sum(values))

    def evaluate(self, g, x):
        return sum(p.evaluate(g, x) for p in self.parts)

    def to_dict(self):
        return {"kind": self.name, "parts": [p.to_dict() for p in self.parts]}


def _cycle_log_moduli(g: PerturbedEndo, x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted log eigenvalue moduli of ``Dg^n`` along the orbit of ``x``, and ``S_n log|det Dg|``."""
    M = np.broadcast_to(np.eye(g.m), x.shape[:-1] + (g.m, g.m)).copy()
    logdet = np.zeros(x.shape[:-1])
    p = x
    for _ in range(n):
        D = g.derivative(p)
        M = _matmul(D, M)
        logdet = logdet + np.log(np.abs(_det(D)))
        p = g.apply(p)
    mods = np.log(np.abs(np.linalg.eigvals(M)))
    return -np.sort(-mods, axis=-1), logdet


@dataclass(frozen=True)
class StableLogDet(Potential):
    """Stable potential ``log|det Dg restricted to E^s_x|``.

    ``E^s`` is found by pulling a generic frame back along ``depth`` further
    forward iterates.
    """

    depth: int = DIRECTION_DEPTH
    name = "stable_log_det"

    def __post_init__(self):
        if self.depth < 20:
            raise InvalidInputError("depth must be at least 20")

    @property
    def constant(self):  # type: ignore[override]
        return None

    def evaluate(self, g, x):
        return self.orbit_sums(g, x, 1)

    def orbit_sums(self, g, x, n, rng=None):
        x = np.asarray(x, dtype=float)
        ks = g.stable_dim
        if ks == 0 or n == 0:
            return np.zeros(x.shape[:-1])
        if g.is_linear:
            return np.full(x.shape[:-1], n * _linear_stable_log(g))
        orbit = forward_orbit(g, x, n + self.depth)
        F = np.broadcast_to(generic_frame(g.m, ks), x.shape[:-1] + (g.m, ks)).copy()
        total = np.zeros(x.shape[:-1])
        for i in range(n + self.depth - 1, -1, -1):
            D = g.derivative(orbit[i])
            F, _ = _qr(_solve_cols(D, F))
            if i < n:
                _, r = _qr(_matmul(D, F))
                total = total + np.sum(np.log(r), axis=-1)
        return total

    def periodic_sums(self, g, x, n):
        x = np.asarray(x, dtype=float)
        if g.is_linear:
            return np.full(x.shape[:-1], n * _linear_stable_log(g))
        mods, logdet = _cycle_log_moduli(g, x, n)
        # the stable moduli are tiny next to the unstable ones; take them from the determinant
        return logdet - np.sum(mods[..., : g.unstable_dim], axis=-1)

    def tree_sums(self, g, roots, n, rng=None):
        leaves, _ = tree_leaf_sums(g, roots, n)
        return leaves, self.orbit_sums(g, leaves, n)

    def to_dict(self):
        return {"kind": self.name, "depth": self.depth}


@dataclass(frozen=True)
class UnstableNegLogDet(Potential):
    """Unstable potential ``-log|det Dg restricted to E^u|`` at a prehistory.

    With a bare point, ``depth`` uniformly random backward steps supply the
    prehistory; points of a periodic orbit use the periodic one.
    """

    depth: int = DIRECTION_DEPTH
    name = "unstable_neg_log_det"
    needs_history = True

    def __post_init__(self):
        if self.depth < 20:
            raise InvalidInputError("depth must be at least 20")

    @property
    def constant(self):  # type: ignore[override]
        return None

    def evaluate(self, g, x, rng=None):
        return self.orbit_sums(g, x, 1, rng)

    def orbit_sums(self, g, x, n, rng=None):
        if isinstance(x, Prehistory):
            history = x
            x = history.present
        else:
            x = np.asarray(x, dtype=float)
            if g.is_linear:
                return np.full(x.shape[:-1], -n * _linear_unstable_log(g))
            if rng is None:
                rng = stream(0, PREHISTORY_BRANCHES, 0)
            flat = x.reshape(-1, g.m)
            branches = rng.integers(0, g.degree, size=(self.depth, len(flat)))
            walk = backward_walks(g, flat, branches)
            history = Prehistory(walk.points.reshape((self.depth + 1,) + x.shape))
        if n == 0:
            return np.zeros(x.shape[:-1])
        F = unstable_frame(g, history)
        total = np.zeros(x.shape[:-1])
        p = x
        for _ in range(n):
            F, r = _qr(_matmul(g.derivative(p), F))
            total = total - np.sum(np.log(r), axis=-1)
            p = g.apply(p)
        return total

    def periodic_sums(self, g, x, n):
        x = np.asarray(x, dtype=float)
        if g.is_linear:
            return np.full(x.shape[:-1], -n * _linear_unstable_log(g))
        mods, _ = _cycle_log_moduli(g, x, n)
        return -np.sum(mods[..., : g.unstable_dim], axis=-1)

    def tree_sums(self, g, roots, n, rng=None):
        leaves, _ = tree_leaf_sums(g, roots, n)
        return leaves, self.orbit_sums(g, leaves, n, rng)

    def to_dict(self):
        return {"kind": self.name, "depth": self.depth}


def _linear_stable_log(g: PerturbedEndo) -> float:
    mods = g.linear.eigenvalue_moduli
    return float(np.sum(np.log(mods[mods < 1.0])))


def _linear_unstable_log(g: PerturbedEndo) -> float:
    mods = g.linear.eigenvalue_moduli
    return float(np.sum(np.log(mods[mods > 1.0])))


def potential_from_dict(data: dict, path: str = "potential") -> Potential:
    """Inverse of :meth:`Potential.to_dict` (used by the CLI)."""
    if not isinstance(data, dict) or "kind" not in data:
        raise InvalidInputError(f"{path}: expected an object with a 'kind' field")
    kind = data["kind"]
    if kind == "zero":
        return Zero()
    if kind == "constant":
        return Constant(float(data.get("value", 0.0)))
    if kind == "trig":
        terms = []
        for i, t in enumerate(data.get("terms", [])):
            try:
                terms.append((float(t["amplitude"]), tuple(t["frequency"]), float(t.get("phase", 0.0)), t.get("fn", "cos")))
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}.terms[{i}]: {exc}") from exc
        return TrigPoly(tuple(terms))
    if kind == "log_abs_det":
        return LogAbsDet()
    if kind == "abs_det":
        return AbsDet()
    if kind == "stable_log_det":
        return StableLogDet(int(data.get("depth", DIRECTION_DEPTH)))
    if kind == "unstable_neg_log_det":
        return UnstableNegLogDet(int(data.get("depth", DIRECTION_DEPTH)))
    raise InvalidInputError(f"{path}.kind: unknown potential {kind!r}")


def parse_potential(text: str) -> Potential:
    """Short names used on the command line: ``zero``, ``logdet``, ``stable``, ``unstable``, ``cos:<amp>``."""
    text = text.strip()
    if text == "zero":
        return Zero()
    if text == "logdet":
        return LogAbsDet()
    if text == "stable":
        return StableLogDet()
    if text == "unstable":
        return UnstableNegLogDet()
    if text.startswith("cos:"):
        return cos_x(float(text[4:]))
    if text.startswith("const:"):
        return Constant(float(text[6:]))
    raise InvalidInputError(f"unknown potential {text!r}")


__all__: Sequence[str] = [
    "Potential",
    "Zero",
    "Constant",
    "TrigPoly",
    "cos_x",
    "LogAbsDet",
    "AbsDet",
    "Coboundary",
    "Sum",
    "StableLogDet",
    "UnstableNegLogDet",
    "potential_from_dict",
    "parse_potential",
]
