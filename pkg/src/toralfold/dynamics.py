"""Perturbed toral endomorphisms: forward map, derivative, preimages, periodic orbits.

A map is ``x -> A x + P(x) (mod 1)`` with ``A`` an integer hyperbolic matrix
and ``P`` a finite sum of sine terms with integer frequencies.  All
evaluation routines broadcast over leading axes, so a batch of points is an
array of shape ``(..., m)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    HyperbolicityLossError,
    InvalidInputError,
    PerturbationTooLargeError,
    TreeBudgetError,
)
from .torus import (
    IntegerMatrix,
    coset_representatives,
    periodic_lattice_numerators,
    reduce_mod1,
    torus_distance,
)

TWO_PI = 2.0 * math.pi

NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
BRANCH_COLLISION = 1e-8
TREE_BUDGET = 1 << 22
PERIODIC_BUDGET = 10**6
# exact lattice enumeration for linear maps is far cheaper than continuation
LINEAR_PERIODIC_BUDGET = 10**7
HOMOTOPY_STEPS = 8
DIRECTION_DEPTH = 40
GAP_FLOOR = 1e-6


@dataclass(frozen=True)
class TrigTerm:
    """Adds ``amplitude * sin(2 pi <frequency, x> + phase)`` to coordinate ``target``."""

    target: int
    amplitude: float
    frequency: tuple[int, ...]
    phase: float = 0.0

    def __post_init__(self):
        freq = tuple(self.frequency)
        for i, f in enumerate(freq):
            if isinstance(f, bool) or not float(f).is_integer():
                raise InvalidInputError(f"frequency[{i}] = {f!r} is not an integer")
        object.__setattr__(self, "frequency", tuple(int(f) for f in freq))
        if not math.isfinite(self.amplitude) or not math.isfinite(self.phase):
            raise InvalidInputError("amplitude and phase must be finite")


@dataclass(frozen=True, eq=False)
class Prehistory:
    """Finite backward orbit ``(x, x_{-1}, ..., x_{-n})``.

    ``points[i]`` is ``x_{-i}``; a batch of prehistories has shape
    ``(n + 1, N, m)``.
    """

    points: np.ndarray

    @property
    def depth(self) -> int:
        return self.points.shape[0] - 1

    @property
    def present(self) -> np.ndarray:
        return self.points[0]

    @property
    def oldest(self) -> np.ndarray:
        return self.points[-1]

    def forward_order(self) -> np.ndarray:
        """Points from the oldest to the present, i.e. a forward orbit segment."""
        return self.points[::-1]

    def defect(self, g: "PerturbedEndo") -> float:
        """Largest ``d(g(x_{-i}), x_{-i+1})`` along the chain."""
        if self.depth == 0:
            return 0.0
        return float(np.max(torus_distance(g.apply(self.points[1:]), self.points[:-1])))


class PerturbedEndo:
    """Hyperbolic toral endomorphism with a trigonometric perturbation.

    Parameters
    ----------
    matrix : IntegerMatrix or nested ints
        The linear part ``A``; must be hyperbolic.
    terms : sequence of TrigTerm
        Perturbation terms.
    label : str
        Free-form name carried into reports.
    """

    def __init__(self, matrix, terms: Sequence[TrigTerm] = (), label: str = ""):
        self.linear = matrix if isinstance(matrix, IntegerMatrix) else IntegerMatrix(matrix)
        if not self.linear.is_hyperbolic:
            from .errors import ValidationError

            raise ValidationError(
                f"linear part {self.linear} is not hyperbolic "
                f"(eigenvalue moduli {self.linear.eigenvalue_moduli.tolist()})"
            )
        self.m = self.linear.m
        self.terms = tuple(terms)
        self.label = label
        for t in self.terms:
            if len(t.frequency) != self.m:
                raise InvalidInputError(f"term frequency {t.frequency} has wrong length for m={self.m}")
            if not 0 <= t.target < self.m:
                raise InvalidInputError(f"term target {t.target} out of range for m={self.m}")
        self._A = self.linear.array.astype(float)
        self._Ainv = self.linear.inverse
        self._reps = np.array(coset_representatives(self.linear), dtype=float)
        if self.terms:
            self._freq = np.array([t.frequency for t in self.terms], dtype=float)
            self._amp = np.array([t.amplitude for t in self.terms], dtype=float)
            self._phase = np.array([t.phase for t in self.terms], dtype=float)
            self._onehot = np.zeros((len(self.terms), self.m))
            self._onehot[np.arange(len(self.terms)), [t.target for t in self.terms]] = 1.0
            self._jac_basis = (self._onehot[:, :, None] * self._freq[:, None, :]).reshape(len(self.terms), -1)
            self._warn_if_large()

    # -- basic evaluation -------------------------------------------------

    @property
    def degree(self) -> int:
        return self.linear.degree

    @property
    def is_linear(self) -> bool:
        return not self.terms or not np.any(self._amp)

    @property
    def stable_dim(self) -> int:
        return self.linear.stable_dim

    @property
    def unstable_dim(self) -> int:
        return self.m - self.linear.stable_dim

    def __repr__(self) -> str:
        return f"PerturbedEndo({self.linear!r}, {len(self.terms)} terms, label={self.label!r})"

    def scaled(self, s: float) -> "PerturbedEndo":
        """Same map with every amplitude multiplied by ``s``."""
        terms = [TrigTerm(t.target, s * t.amplitude, t.frequency, t.phase) for t in self.terms]
        out = PerturbedEndo.__new__(PerturbedEndo)
        out.__dict__.update(self.__dict__)
        out.terms = tuple(terms)
        if terms:
            out._amp = self._amp * s
        return out

    def perturbation(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros_like(x)
        theta = TWO_PI * (x @ self._freq.T) + self._phase
        return (self._amp * np.sin(theta)) @ self._onehot

    def perturbation_jacobian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.m, self.m)
        if not self.terms:
            return np.zeros(shape)
        theta = TWO_PI * (x @ self._freq.T) + self._phase
        c = self._amp * TWO_PI * np.cos(theta)
        return (c @ self._jac_basis).reshape(shape)

    def lift(self, x) -> np.ndarray:
        """``A x + P(x)`` without reduction (a lift of the map to ``R^m``)."""
        x = np.asarray(x, dtype=float)
        return x @ self._A.T + self.perturbation(x)

    def apply(self, x) -> np.ndarray:
        """The map itself, reduced mod 1."""
        return reduce_mod1(self.lift(x))

    def iterate(self, x, n: int) -> np.ndarray:
        for _ in range(n):
            x = self.apply(x)
        return np.asarray(x, dtype=float)

    def derivative(self, x) -> np.ndarray:
        """``Dg(x) = A + DP(x)``, shape ``(..., m, m)``."""
        x = np.asarray(x, dtype=float)
        return self._A + self.perturbation_jacobian(x)

    def log_abs_det(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_linear:
            return np.full(x.shape[:-1], math.log(self.degree))
        return np.log(np.abs(_det(self.derivative(x))))

    # -- construction-time checks ------------------------------------------

    def spectral_gap(self) -> float:
        """Gap between the smallest unstable and largest stable eigenvalue modulus of ``A``."""
        mods = self.linear.eigenvalue_moduli
        unstable = mods[mods > 1.0]
        stable = mods[mods < 1.0]
        lo = unstable.min() if unstable.size else 1.0
        hi = stable.max() if stable.size else 1.0
        return float(lo - hi)

    def perturbation_size(self, resolution: int = 64) -> float:
        """Sup over a ``resolution^m`` grid of the operator 2-norm of ``DP``."""
        axes = [(np.arange(resolution) + 0.5) / resolution] * self.m
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.m)
        best = 0.0
        for start in range(0, len(grid), 1 << 16):
            J = self.perturbation_jacobian(grid[start : start + (1 << 16)])
            best = max(best, float(np.max(np.linalg.norm(J, ord=2, axis=(-2, -1)))))
        return best

    def _warn_if_large(self) -> None:
        size = self.perturbation_size(64 if self.m <= 3 else 16)
        if size >= 0.5 * self.spectral_gap():
            warnings.warn(
                f"perturbation derivative norm {size:.3g} is not below half the "
                f"spectral gap {self.spectral_gap():.3g}; hyperbolicity may fail",
                RuntimeWarning,
                stacklevel=3,
            )

    def check_degree(self, samples: int = 256, seed: int = 0) -> None:
        """Verify the ``d``-to-1 property on random points; raises on failure."""
        rng = np.random.default_rng(seed)
        preimages(self, rng.random((samples, self.m)))


def example_map(eps: float = 0.05) -> PerturbedEndo:
    """``(2x+2y+eps sin 2 pi y, 2x+3y+2 eps sin 2 pi y) mod 1``."""
    terms = [] if eps == 0 else [
        TrigTerm(0, eps, (0, 1), 0.0),
        TrigTerm(1, 2.0 * eps, (0, 1), 0.0),
    ]
    return PerturbedEndo([[2, 2], [2, 3]], terms, label=f"perturbed [[2,2],[2,3]], eps = {eps:g}")


# -- small linear-algebra helpers ---------------------------------------------


def _det(M: np.ndarray) -> np.ndarray:
    if M.shape[-1] == 2:
        return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    return np.linalg.det(M)


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if A.shape[-1] == 2 and A.shape[-2] == 2 and B.shape[-2] == 2:
        cols = [_matvec(A, B[..., :, j]) for j in range(B.shape[-1])]
        return np.stack(cols, axis=-1)
    return A @ B


def _matvec(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    if A.shape[-2:] == (2, 2):
        return np.stack(
            [A[..., 0, 0] * v[..., 0] + A[..., 0, 1] * v[..., 1],
             A[..., 1, 0] * v[..., 0] + A[..., 1, 1] * v[..., 1]],
            axis=-1,
        )
    return (A @ v[..., None])[..., 0]


def _solve(M: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Batched solve of ``M x = r`` with ``r`` of shape ``(..., m)``."""
    if M.shape[-1] == 2:
        det = _det(M)
        x0 = (M[..., 1, 1] * r[..., 0] - M[..., 0, 1] * r[..., 1]) / det
        x1 = (M[..., 0, 0] * r[..., 1] - M[..., 1, 0] * r[..., 0]) / det
        return np.stack([x0, x1], axis=-1)
    return np.linalg.solve(M, r[..., None])[..., 0]


def _qr(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched QR with a non-negative diagonal; returns ``(Q, |diag R|)``."""
    if M.shape[-1] == 1:
        norm = np.linalg.norm(M[..., 0], axis=-1)
        return M / norm[..., None, None], norm[..., None]
    if M.shape[-2:] == (2, 2):
        a, b = M[..., :, 0], M[..., :, 1]
        r11 = np.hypot(a[..., 0], a[..., 1])
        q1 = a / r11[..., None]
        r12 = np.sum(q1 * b, axis=-1)
        b = b - r12[..., None] * q1
        r22 = np.hypot(b[..., 0], b[..., 1])
        q2 = b / r22[..., None]
        return np.stack([q1, q2], axis=-1), np.stack([r11, r22], axis=-1)
    Q, R = np.linalg.qr(M)
    return Q, np.abs(np.diagonal(R, axis1=-2, axis2=-1))


def generic_frame(m: int, k: int) -> np.ndarray:
    """Fixed ``m x k`` orthonormal frame whose first column is ``(1, 0.37, 0.37^2, ...)``."""
    bases = [0.37, -0.61, 0.83, -0.29]
    cols = [np.array([b**i for i in range(m)]) for b in bases[:k]]
    Q, _ = np.linalg.qr(np.stack(cols, axis=-1))
    if Q[0, 0] < 0:
        Q = -Q
    return Q


# -- Newton in the covering space ------------------------------------------------


def _newton_lift(g: PerturbedEndo, target: np.ndarray, x0: np.ndarray, tol: float) -> np.ndarray:
    """Solve ``lift(x) = target`` elementwise; converged entries are frozen."""
    x = np.array(x0, dtype=float, copy=True)
    flat_x = x.reshape(-1, g.m)
    flat_t = target.reshape(-1, g.m)
    scale = np.maximum(1.0, np.max(np.abs(flat_t), axis=-1))
    active = np.arange(len(flat_x))
    for _ in range(NEWTON_MAXITER):
        xa = flat_x[active]
        r = g.lift(xa) - flat_t[active]
        done = np.max(np.abs(r), axis=-1) <= tol * scale[active]
        keep = ~done
        active = active[keep]
        if active.size == 0:
            return x
        step = _solve(g.derivative(xa[keep]), r[keep])
        if not np.all(np.isfinite(step)):
            break
        flat_x[active] = xa[keep] - step
    raise PerturbationTooLargeError(
        f"Newton did not converge for {active.size} preimage branch(es) in {NEWTON_MAXITER} iterations"
    )


def preimages(g: PerturbedEndo, y, tol: float = NEWTON_TOL) -> np.ndarray:
    """All ``d`` preimages of ``y``; shape ``(d, m)`` or ``(..., d, m)`` for batches.

    Branch ``j`` is the solution of ``lift(x) = y + k_j`` seeded at the
    linear preimage ``A^{-1}(y + k_j)``, with ``k_j`` a transversal of
    ``Z^m / A Z^m``.
    """
    y = np.asarray(y, dtype=float)
    target = y[..., None, :] + g._reps
    x = target @ g._Ainv.T
    if not g.is_linear:
        x = _newton_lift(g, target, x, tol)
    x = reduce_mod1(x)
    _check_distinct(x)
    return x


def preimage_branch(g: PerturbedEndo, y, branch, tol: float = NEWTON_TOL) -> np.ndarray:
    """Only the preimage on branch index ``branch`` (array-broadcast with ``y``)."""
    y = np.asarray(y, dtype=float)
    target = y + g._reps[np.asarray(branch)]
    x = target @ g._Ainv.T
    if not g.is_linear:
        x = _newton_lift(g, target, x, tol)
    return reduce_mod1(x)


def _check_distinct(x: np.ndarray) -> None:
    d = x.shape[-2]
    for i in range(d):
        for j in range(i + 1, d):
            gap = np.min(torus_distance(x[..., i, :], x[..., j, :]))
            if gap < BRANCH_COLLISION:
                raise PerturbationTooLargeError(
                    f"preimage branches {i} and {j} collide (distance {gap:.3g})"
                )


# -- preimage trees -----------------------------------------------------------------


def _check_tree_budget(g: PerturbedEndo, n: int, budget: int) -> int:
    if n < 1:
        raise InvalidInputError("tree depth must be >= 1")
    size = g.degree**n
    if size > budget:
        raise TreeBudgetError(f"preimage tree has d^n = {size} leaves (budget {budget})", size, budget)
    return size


def preimage_leaves(
    g: PerturbedEndo,
    z,
    n: int,
    visitor: Callable[[np.ndarray, Prehistory], None] | None = None,
    budget: int = TREE_BUDGET,
) -> Iterator[tuple[np.ndarray, Prehistory]]:
    """Depth-first walk over the ``d^n`` leaves of the depth-``n`` preimage tree of ``z``.

    Yields ``(leaf, path)`` where ``path`` is the prehistory from ``z`` down
    to the leaf.  If ``visitor`` is given it is called on every pair as
    well.  Only the current root-to-leaf path is held in memory.
    """
    _check_tree_budget(g, n, budget)
    z = reduce_mod1(z)
    path = np.empty((n + 1, g.m))
    path[0] = z

    def descend(level: int):
        for child in preimages(g, path[level]):
            path[level + 1] = child
            if level + 1 == n:
                item = (child.copy(), Prehistory(path.copy()))
                if visitor is not None:
                    visitor(*item)
                yield item
            else:
                yield from descend(level + 1)

    yield from descend(0)


def tree_leaves(g: PerturbedEndo, roots, n: int, budget: int = TREE_BUDGET) -> np.ndarray:
    """Leaves of the depth-``n`` trees over a batch of roots, shape ``(N, d^n, m)``.

    Leaves are ordered as :func:`preimage_leaves` visits them.
    """
    leaves, _ = tree_leaf_sums(g, roots, n, None, budget)
    return leaves


def tree_leaf_sums(g: PerturbedEndo, roots, n: int, node_values=None, budget: int = TREE_BUDGET):
    """Expand trees level by level, accumulating ``node_values`` along each path.

    ``node_values(points, parent_state)`` returns ``(values, state)`` for
    newly created nodes; the accumulated sum over the ``n`` non-root nodes of
    a path is the forward Birkhoff sum of the leaf.  Returns ``(leaves, sums)``
    with ``sums`` of shape ``(N, d^n)`` (``None`` when no values requested).
    """
    _check_tree_budget(g, n, budget)
    pts = np.asarray(roots, dtype=float)
    if pts.ndim == 1:
        pts = pts[None]
    N = pts.shape[0]
    pts = pts[:, None, :]
    acc = np.zeros((N, 1)) if node_values is not None else None
    state = None
    d = g.degree
    for _ in range(n):
        children = preimages(g, pts)  # (N, w, d, m)
        w = pts.shape[1]
        children = children.reshape(N, w * d, g.m)
        if node_values is not None:
            parent_state = None if state is None else np.repeat(state, d, axis=1)
            vals, state = node_values(children, parent_state)
            acc = np.repeat(acc, d, axis=1) + vals
        pts = children
    return pts, acc


# -- periodic points ------------------------------------------------------------------


def _assert_no_collisions(points: np.ndarray, what: str) -> None:
    if len(points) < 2:
        return
    tree = cKDTree(points, boxsize=1.0)
    pairs = tree.query_pairs(BRANCH_COLLISION, output_type="ndarray")
    if len(pairs):
        raise PerturbationTooLargeError(f"{what}: {len(pairs)} pair(s) collided")


def periodic_budget(g: PerturbedEndo, budget: int | None = None) -> int:
    """``budget`` if given, else the default for linear or perturbed maps."""
    if budget is not None:
        return budget
    return LINEAR_PERIODIC_BUDGET if g.is_linear else PERIODIC_BUDGET


def _orbit_keys(orbit: list[np.ndarray], denom: int) -> list[np.ndarray] | None:
    m = orbit[0].shape[-1]
    if denom ** m >= _KEY_LIMIT:
        return None
    weights = np.array([denom ** (m - 1 - j) for j in range(m)], dtype=np.int64)
    return [o.astype(np.int64) @ weights for o in orbit]


_KEY_LIMIT = 2**62


def periodic_points(
    g: PerturbedEndo,
    n: int,
    budget: int | None = None,
    steps: int = HOMOTOPY_STEPS,
    chunk: int = 1 << 16,
) -> np.ndarray:
    """All points of ``Fix(g^n)``, shape ``(|det(A^n - I)|, m)``.

    The default ``budget`` is ``PERIODIC_BUDGET`` for perturbed maps and
    ``LINEAR_PERIODIC_BUDGET`` for linear ones.

    For the linear map these are the exact lattice solutions.  Otherwise each
    lattice orbit is continued along ``s -> A x + s P(x)`` for
    ``s = 1/steps, ..., 1``.  Each continuation step is a Newton solve of the
    multiple-shooting system ``lift_s(X_i) - K_i = X_{i+1}`` (indices mod
    ``n``) over the whole orbit, with the integer jumps ``K_i`` taken from the
    exact lattice orbit; this keeps every Newton step well conditioned.  One
    representative per orbit is continued and the result is scattered back
    to every point of the orbit.
    """
    if n < 1:
        raise InvalidInputError("period must be >= 1")
    budget = periodic_budget(g, budget)
    B = g.linear.power_minus_identity(n)
    if B.degree > budget:
        raise TreeBudgetError(
            f"|det(A^{n} - I)| = {B.degree} periodic points exceed the budget {budget}",
            B.degree,
            budget,
        )
    nums, denom = periodic_lattice_numerators(B)
    if g.is_linear:
        return nums.astype(float) / float(denom)
    A = g.linear.array.astype(nums.dtype)
    orbit = [nums]
    for _ in range(n - 1):
        orbit.append((orbit[-1] @ A.T) % denom)
    keys = _orbit_keys(orbit, denom)
    if keys is None:
        reps = np.arange(len(nums))
        positions = None
    else:
        reps = np.flatnonzero(keys[0] == np.min(np.stack(keys), axis=0))
        sorter = np.argsort(keys[0])
        positions = [sorter[np.searchsorted(keys[0], k[reps], sorter=sorter)] for k in keys]
    out = np.empty((len(nums), g.m))
    for start in range(0, len(reps), chunk):
        sel = reps[start : start + chunk]
        X, K = _lattice_orbit_arrays([o[sel] for o in orbit], A, denom)
        for j in range(1, steps + 1):
            X = _shoot(g.scaled(j / steps), X, K)
        X = reduce_mod1(X)
        if positions is None:
            out[sel] = X[0]
        else:
            for i in range(n):
                out[positions[i][start : start + chunk]] = X[i]
    _assert_no_collisions(out, f"period-{n} continuation")
    return out


def _lattice_orbit_arrays(orbit: list[np.ndarray], A: np.ndarray, denom: int):
    """Float orbit points ``X[i]`` and integer jumps ``K[i] = A X[i] - X[i+1]`` (indices mod n)."""
    n = len(orbit)
    jumps = [(orbit[i] @ A.T - orbit[(i + 1) % n]) // denom for i in range(n)]
    X = np.stack([o.astype(float) / float(denom) for o in orbit])
    K = np.stack([k.astype(float) for k in jumps])
    return X, K


def _shoot(g: PerturbedEndo, X: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Newton iterations for the cyclic multiple-shooting system (frozen once converged)."""
    n = X.shape[0]
    X = X.copy()
    active = np.arange(X.shape[1])
    eye = np.eye(g.m)
    for _ in range(NEWTON_MAXITER):
        Xa = X[:, active]
        R = g.lift(Xa) - K[:, active] - np.roll(Xa, -1, axis=0)
        D = g.derivative(Xa)
        # condense: (I - M) d0 = c, M = D_{n-1}...D_0, c = sum of propagated residuals
        M = np.broadcast_to(eye, D.shape[1:]).copy()
        c = np.zeros(Xa.shape[1:])
        for i in range(n):
            M = _matmul(D[i], M)
            c = _matvec(D[i], c) + R[i]
        d = _solve(eye - M, c)
        delta = np.empty_like(Xa)
        for i in range(n):
            delta[i] = d
            d = _matvec(D[i], d) + R[i]
        if not np.all(np.isfinite(delta)):
            raise PerturbationTooLargeError("periodic-orbit continuation diverged")
        X[:, active] = Xa + delta
        small = np.max(np.abs(delta), axis=(0, -1)) <= NEWTON_TOL
        active = active[~small]
        if active.size == 0:
            return X
    raise PerturbationTooLargeError(
        f"periodic-orbit continuation failed to converge for {active.size} orbit(s)"
    )


# -- backward walks -------------------------------------------------------------------


def backward_walks(g: PerturbedEndo, roots, branches) -> Prehistory:
    """Batch of backward walks following the given branch indices.

    ``branches`` has shape ``(n, N)``; step ``i`` takes the preimage on
    branch ``branches[i]``.  Returns a batched :class:`Prehistory` of
    shape ``(n + 1, N, m)``.
    """
    roots = reduce_mod1(np.atleast_2d(roots))
    branches = np.asarray(branches)
    out = np.empty((branches.shape[0] + 1,) + roots.shape)
    out[0] = roots
    for i in range(branches.shape[0]):
        out[i + 1] = preimage_branch(g, out[i], branches[i])
    return Prehistory(out)


def backward_walk(g: PerturbedEndo, z, n: int, rng: np.random.Generator) -> Prehistory:
    """One backward walk of length ``n`` with uniformly chosen branches."""
    if n < 1:
        raise InvalidInputError("walk length must be >= 1")
    branches = rng.integers(0, g.degree, size=(n, 1))
    walk = backward_walks(g, np.asarray(z, dtype=float)[None], branches)
    return Prehistory(walk.points[:, 0, :])


def forward_orbit(g: PerturbedEndo, x0, n: int, transient: int = 0) -> np.ndarray:
    """``n`` consecutive forward iterates after discarding ``transient``; shape ``(n, ..., m)``."""
    x = g.iterate(reduce_mod1(x0), transient)
    out = np.empty((n,) + x.shape)
    for i in range(n):
        out[i] = x
        x = g.apply(x)
    return out


# -- invariant directions and Lyapunov exponents ------------------------------------------


def _check_gap(g: PerturbedEndo, log_r: np.ndarray, what: str) -> None:
    """``log_r`` holds summed log-|diag R| values, last axis sorted by frame column."""
    ku = g.unstable_dim
    if ku in (0, g.m):
        return
    gap = log_r[..., ku - 1] - log_r[..., ku]
    if np.any(gap < math.log1p(GAP_FLOOR)):
        raise HyperbolicityLossError(f"{what}: singular-value ratio below 1 + {GAP_FLOOR:g}")


def stable_frame(g: PerturbedEndo, x, depth: int = DIRECTION_DEPTH) -> np.ndarray:
    """Orthonormal basis of ``E^s_x``, shape ``(..., m, k_s)``.

    This is the most contracted right-singular subspace of the forward
    cocycle over ``depth`` steps, obtained stably by pulling a generic frame
    back from ``g^depth(x)`` with ``Dg^{-1}``.
    """
    if depth < 1:
        raise InvalidInputError("depth must be positive")
    x = reduce_mod1(x)
    orbit = forward_orbit(g, x, depth)
    base = x.shape[:-1]
    Q = np.broadcast_to(np.eye(g.m), base + (g.m, g.m)).copy()
    logs = np.zeros(base + (g.m,))
    for p in orbit:
        Q, r = _qr(_matmul(g.derivative(p), Q))
        logs += np.log(r)
    _check_gap(g, logs, "stable direction")
    ks = g.stable_dim
    F = np.broadcast_to(generic_frame(g.m, ks), base + (g.m, ks)).copy()
    for p in orbit[::-1]:
        F, _ = _qr(_solve_cols(g.derivative(p), F))
    return F


def _solve_cols(M: np.ndarray, F: np.ndarray) -> np.ndarray:
    cols = [_solve(M, F[..., :, j]) for j in range(F.shape[-1])]
    return np.stack(cols, axis=-1)


def unstable_frame(g: PerturbedEndo, history: Prehistory) -> np.ndarray:
    """Orthonormal basis of ``E^u`` at the present point of ``history``.

    A fixed generic frame is pushed forward by ``Dg`` from ``x_{-depth}``
    to ``x``.
    """
    pts = history.points
    ku = g.unstable_dim
    base = pts.shape[1:-1]
    F = np.broadcast_to(generic_frame(g.m, ku), base + (g.m, ku)).copy()
    Q = np.broadcast_to(np.eye(g.m), base + (g.m, g.m)).copy()
    logs = np.zeros(base + (g.m,))
    for p in pts[:0:-1]:
        D = g.derivative(p)
        F, _ = _qr(_matmul(D, F))
        Q, r = _qr(_matmul(D, Q))
        logs += np.log(r)
    _check_gap(g, logs, "unstable direction")
    return F


def invariant_directions(g: PerturbedEndo, source, depth: int = DIRECTION_DEPTH) -> np.ndarray:
    """Stable direction at a point, or unstable direction at a :class:`Prehistory`.

    One-dimensional bundles come back as unit vectors ``(..., m)``; higher
    dimensional ones as frames ``(..., m, k)``.
    """
    if depth < 20:
        raise InvalidInputError("depth must be at least 20")
    if isinstance(source, Prehistory):
        if source.depth < 20:
            raise InvalidInputError("prehistory depth must be at least 20")
        F = unstable_frame(g, source)
    else:
        F = stable_frame(g, source, depth)
    return F[..., 0] if F.shape[-1] == 1 else F


@dataclass
class LyapunovResult:
    """QR-cocycle averages along one or more orbits."""

    exponents: np.ndarray  # (..., m), descending
    mean_log_det: np.ndarray  # Birkhoff average of log|det Dg| over the same steps
    steps: int
    per_orbit: np.ndarray | None = field(default=None, repr=False)

    @property
    def defect(self) -> np.ndarray:
        """``|sum(exponents) - mean log|det Dg||``; zero up to rounding."""
        return np.abs(np.sum(self.exponents, axis=-1) - self.mean_log_det)


def lyapunov_exponents(g: PerturbedEndo, orbit, n_align: int = 64) -> LyapunovResult:
    """Lyapunov exponents from a forward orbit segment by repeated QR.

    Parameters
    ----------
    orbit : array ``(n, m)`` or ``(n, N, m)``, or Prehistory
        Consecutive forward iterates.  A :class:`Prehistory` is read from its
        oldest point forward.
    n_align : int
        Leading steps used only to align the frame; they are not averaged.
    """
    if isinstance(orbit, Prehistory):
        orbit = orbit.forward_order()
    orbit = np.asarray(orbit, dtype=float)
    n = orbit.shape[0] - n_align
    if n < 1000:
        raise InvalidInputError("need at least 1000 averaged steps")
    base = orbit.shape[1:-1]
    Q = np.broadcast_to(np.eye(g.m), base + (g.m, g.m)).copy()
    for p in orbit[:n_align]:
        Q, _ = _qr(_matmul(g.derivative(p), Q))
    total = np.zeros(base + (g.m,))
    comp = np.zeros_like(total)
    det_total = np.zeros(base)
    det_comp = np.zeros(base)
    for p in orbit[n_align:]:
        D = g.derivative(p)
        Q, r = _qr(_matmul(D, Q))
        total, comp = _kahan(total, comp, np.log(r))
        det_total, det_comp = _kahan(det_total, det_comp, np.log(np.abs(_det(D))))
    exps = total / n
    _check_gap(g, exps, "Lyapunov spectrum")
    exps = -np.sort(-exps, axis=-1)
    return LyapunovResult(exps, det_total / n, n)


def _kahan(total: np.ndarray, comp: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = x - comp
    t = total + y
    comp = (t - total) - y
    return t, comp
