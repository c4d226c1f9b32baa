"""Integer-lattice and mod-1 geometry on the m-torus.

Points of the torus are plain ``numpy`` arrays whose last axis has length
``m`` and whose coordinates lie in ``[0, 1)``.  Everything that depends on
lattice structure (preimage branches, fixed points of ``x -> Bx mod 1``) is
computed exactly over the integers; floats appear only in the final
conversion to coordinates.
"""

from __future__ import annotations

import math
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
from sympy import Matrix, ZZ
from sympy.matrices.normalforms import smith_normal_decomp

from .errors import DegeneratePeriodError, InvalidInputError, ValidationError

#: eigenvalues with ``| |lambda| - 1 | <= HYPERBOLIC_MARGIN`` are treated as neutral
HYPERBOLIC_MARGIN = 1e-9

# int64 products must stay below this bound; otherwise fall back to Python ints
_INT64_SAFE = 2**62


def reduce_mod1(v) -> np.ndarray:
    """Reduce coordinates into ``[0, 1)``.

    Works on a single point ``(m,)`` or a batch ``(..., m)``.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("cannot reduce non-finite coordinates mod 1")
    r = v - np.floor(v)
    # tiny negatives round up to exactly 1.0
    r[r >= 1.0] = 0.0
    return r


def torus_distance(p, q) -> np.ndarray | float:
    """Euclidean distance on the torus, minimised over integer translates of ``q``.

    Each coordinate difference is folded by the best offset in ``{-1, 0, 1}``
    (after reduction), which is exact because the squared norm separates
    over coordinates.  Broadcasts over leading axes.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise InvalidInputError(
            f"dimension mismatch: {p.shape[-1]} vs {q.shape[-1]}"
        )
    delta = np.abs(p - q)
    delta = delta - np.floor(delta)
    delta = np.minimum(delta, 1.0 - delta)
    out = np.sqrt(np.sum(delta * delta, axis=-1))
    return float(out) if out.ndim == 0 else out


class IntegerMatrix:
    """Square integer matrix with exact determinant and cached spectral data.

    Parameters
    ----------
    entries : nested sequence of ints
        Row-major ``m x m`` entries.  Non-integer values are rejected.
    require_hyperbolic : bool
        If true, construction fails unless no eigenvalue modulus lies within
        ``HYPERBOLIC_MARGIN`` of 1 and none is zero.
    """

    def __init__(self, entries: Sequence[Sequence[int]], require_hyperbolic: bool = False):
        rows = [list(r) for r in entries]
        m = len(rows)
        if m == 0 or any(len(r) != m for r in rows):
            raise InvalidInputError("matrix must be square and non-empty")
        clean = []
        for i, row in enumerate(rows):
            out = []
            for j, a in enumerate(row):
                if isinstance(a, bool) or not float(a).is_integer():
                    raise InvalidInputError(f"matrix[{i}][{j}] = {a!r} is not an integer")
                out.append(int(a))
            clean.append(tuple(out))
        self.entries: tuple[tuple[int, ...], ...] = tuple(clean)
        self.m = m
        self.det = int(Matrix(self.entries).det())
        if self.det == 0:
            raise InvalidInputError("matrix is singular")
        if require_hyperbolic and not self.is_hyperbolic:
            raise ValidationError(
                f"matrix {self.entries} is not hyperbolic "
                f"(eigenvalue moduli {self.eigenvalue_moduli.tolist()})"
            )

    def __repr__(self) -> str:
        return f"IntegerMatrix({[list(r) for r in self.entries]})"

    def __eq__(self, other) -> bool:
        return isinstance(other, IntegerMatrix) and self.entries == other.entries

    def __hash__(self) -> int:
        return hash(self.entries)

    @cached_property
    def array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)

    @cached_property
    def sympy(self) -> Matrix:
        return Matrix(self.entries)

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.array.astype(float))

    @cached_property
    def eigenvalue_moduli(self) -> np.ndarray:
        return np.sort(np.abs(np.linalg.eigvals(self.array.astype(float))))[::-1]

    @property
    def degree(self) -> int:
        return abs(self.det)

    @property
    def hyperbolicity_margin(self) -> float:
        return float(np.min(np.abs(self.eigenvalue_moduli - 1.0)))

    @property
    def is_hyperbolic(self) -> bool:
        mods = self.eigenvalue_moduli
        return bool(np.all(mods > HYPERBOLIC_MARGIN) and self.hyperbolicity_margin > HYPERBOLIC_MARGIN)

    @property
    def stable_dim(self) -> int:
        return int(np.sum(self.eigenvalue_moduli < 1.0))

    def power(self, n: int) -> "IntegerMatrix":
        """Exact ``A**n`` for ``n >= 0``."""
        if n < 0:
            raise InvalidInputError("negative powers are not integer matrices")
        return IntegerMatrix((self.sympy**n).tolist())

    def power_minus_identity(self, n: int) -> "IntegerMatrix":
        """Exact ``A**n - I``; raises :class:`DegeneratePeriodError` when singular."""
        B = self.sympy**n - Matrix.eye(self.m)
        if B.det() == 0:
            raise DegeneratePeriodError(
                f"A^{n} - I is singular; A has a root-of-unity eigenvalue"
            )
        return IntegerMatrix(B.tolist())


def _as_integer_matrix(A) -> IntegerMatrix:
    return A if isinstance(A, IntegerMatrix) else IntegerMatrix(A)


def smith_data(A) -> tuple[list[int], np.ndarray]:
    """Invariant factors of ``A`` and an integer matrix ``W`` with ``W j`` ranging over a transversal.

    With ``S = U A V`` in Smith form, ``Z^m / A Z^m`` is isomorphic to the
    product of ``Z / s_i`` via ``k -> U k``; the returned ``W`` is ``U^{-1}``.
    """
    A = _as_integer_matrix(A)
    S, U, _ = smith_normal_decomp(A.sympy, domain=ZZ)
    factors = [abs(int(S[i, i])) for i in range(A.m)]
    W = np.array(U.inv().tolist(), dtype=object)
    return factors, W


def coset_representatives(A) -> list[np.ndarray]:
    """Integer vectors forming a transversal of ``Z^m / A Z^m``.

    The preimages of ``y`` under ``x -> Ax mod 1`` are exactly
    ``reduce_mod1(A^{-1}(y + k))`` over the returned ``k``.
    """
    A = _as_integer_matrix(A)
    factors, W = smith_data(A)
    reps = []
    for j in np.ndindex(*factors):
        k = W.dot(np.array(j, dtype=object))
        reps.append(np.array([int(c) for c in k], dtype=np.int64))
    return reps


class _LatticeSolver:
    """Exact solutions of ``Bx in Z^m``, ``x in [0,1)^m``, as numerators over ``|det B|``."""

    def __init__(self, B: IntegerMatrix):
        self.B = B
        self.denom = B.degree
        factors, W = smith_data(B)
        self.factors = factors
        sign = 1 if B.det > 0 else -1
        adj = np.array((B.sympy.adjugate() * sign).tolist(), dtype=object)
        # x = adj(B) k / det(B); only the residue mod |det| matters
        C = adj.dot(W)
        self.C = np.array([[int(c) % self.denom for c in row] for row in C], dtype=object)
        self.count = math.prod(factors)
        assert self.count == self.denom
        big = self.B.m * self.denom * self.denom
        self.dtype = np.int64 if big < _INT64_SAFE else object

    def numerators(self, start: int, stop: int) -> np.ndarray:
        idx = np.arange(start, stop, dtype=np.int64)
        j = np.stack(np.unravel_index(idx, self.factors), axis=-1).astype(self.dtype)
        C = self.C.astype(self.dtype)
        return (j @ C.T) % self.denom


def periodic_lattice_numerators(B, start: int = 0, stop: int | None = None) -> tuple[np.ndarray, int]:
    """Integer numerators ``N`` and denominator ``D`` with ``x = N / D`` solving ``Bx in Z^m``.

    ``start``/``stop`` select a slice of the (ordered) solution set so that
    very large sets can be processed in chunks.
    """
    B = _as_integer_matrix(B)
    solver = _LatticeSolver(B)
    stop = solver.count if stop is None else min(stop, solver.count)
    return solver.numerators(start, stop), solver.denom


def periodic_lattice_points(B) -> np.ndarray:
    """All ``x in [0,1)^m`` with ``Bx in Z^m``; there are exactly ``|det B|`` of them.

    Singular ``B`` signals a root-of-unity eigenvalue of the underlying map
    and raises :class:`DegeneratePeriodError`.
    """
    try:
        B = _as_integer_matrix(B)
    except InvalidInputError as exc:
        raise DegeneratePeriodError(str(exc)) from exc
    nums, denom = periodic_lattice_numerators(B)
    return nums.astype(float) / float(denom)


def iter_periodic_lattice_points(B, chunk: int = 1 << 20) -> Iterator[np.ndarray]:
    """Yield the solutions of ``Bx in Z^m`` in chunks of at most ``chunk`` points."""
    B = _as_integer_matrix(B)
    solver = _LatticeSolver(B)
    for start in range(0, solver.count, chunk):
        nums = solver.numerators(start, min(start + chunk, solver.count))
        yield nums.astype(float) / float(solver.denom)
