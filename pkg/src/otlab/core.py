"""Finite metric spaces, discrete probability measures, couplings, dual pairs.

These are the validated data types everything else operates on.  All values
are immutable after construction (arrays are frozen), so they can be shared
freely between threads or workers.

Tolerances are absolute and tiered: 1e-12 for metric axioms (construction
error), 1e-10 for coupling marginals (LP round-off), 1e-9 for dual
feasibility (conjugacy round-off).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from otlab.errors import (
    DomainError,
    EmptySpaceError,
    FeasibilityError,
    InvariantError,
    ShapeError,
    SpaceMismatchError,
)

METRIC_TOL = 1e-12
WEIGHT_TOL = 1e-12
MARGINAL_TOL = 1e-10
FEAS_TOL = 1e-9


def _frozen_array(x, dtype=np.float64) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=dtype)
    a.setflags(write=False)
    return a


class MetricViolation(NamedTuple):
    """One broken metric axiom: which axiom, at which indices, by how much."""

    axiom: str  # "diagonal" | "symmetry" | "nonnegative" | "triangle"
    indices: tuple[int, ...]
    magnitude: float


def validate_metric(dist) -> list[MetricViolation]:
    """Scan a square matrix for metric-axiom violations (tolerance 1e-12).

    Returns an empty list iff all four axioms hold; otherwise one entry per
    violated (axiom, index) combination.  Non-square or non-finite input is a
    ShapeError, not a violation.
    """
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ShapeError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ShapeError("distance matrix contains non-finite entries")
    n = d.shape[0]
    out: list[MetricViolation] = []

    for i in range(n):
        if abs(d[i, i]) > METRIC_TOL:
            out.append(MetricViolation("diagonal", (i,), abs(float(d[i, i]))))

    asym = d - d.T
    for i, j in zip(*np.nonzero(np.abs(asym) > METRIC_TOL)):
        if i < j:
            out.append(MetricViolation("symmetry", (int(i), int(j)), abs(float(asym[i, j]))))

    for i, j in zip(*np.nonzero(d < -METRIC_TOL)):
        out.append(MetricViolation("nonnegative", (int(i), int(j)), -float(d[i, j])))

    # d[i,k] <= d[i,j] + d[j,k]: compare against the best relay point j.
    via = d[:, :, None] + d[None, :, :]  # via[i, j, k] = d(i,j) + d(j,k)
    best = via.min(axis=1)
    relay = via.argmin(axis=1)
    for i, k in zip(*np.nonzero(d > best + METRIC_TOL)):
        j = int(relay[i, k])
        out.append(
            MetricViolation("triangle", (int(i), int(k), j), float(d[i, k] - best[i, k]))
        )
    return out


@dataclass(frozen=True)
class FiniteMetricSpace:
    """n points with a validated distance matrix; coords only for Euclidean builds."""

    dist: np.ndarray
    labels: tuple | None = None
    coords: np.ndarray | None = None

    def __post_init__(self):
        d = _frozen_array(self.dist)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ShapeError(f"distance matrix must be square, got shape {d.shape}")
        if d.shape[0] == 0:
            raise EmptySpaceError("a metric space needs at least one point")
        object.__setattr__(self, "dist", d)
        if self.coords is not None:
            c = _frozen_array(self.coords)
            if c.ndim != 2 or c.shape[0] != d.shape[0]:
                raise ShapeError("coords must be n x k")
            object.__setattr__(self, "coords", c)
        if self.labels is not None and len(self.labels) != d.shape[0]:
            raise ShapeError("labels length must match point count")
        violations = validate_metric(d)
        if violations:
            raise InvariantError(f"not a metric: {violations[:3]}{'...' if len(violations) > 3 else ''}")

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def same_as(self, other: "FiniteMetricSpace") -> bool:
        return self is other or (
            self.dist.shape == other.dist.shape and np.array_equal(self.dist, other.dist)
        )


def euclidean_space(coords, labels: Sequence | None = None) -> FiniteMetricSpace:
    """Build the metric space of points in R^k with the Euclidean distance."""
    c = np.asarray(coords, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    if c.ndim != 2:
        raise ShapeError(f"coords must be n x k, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ShapeError("coords contain non-finite entries")
    d = pairwise_distances(c, c)
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace(dist=d, labels=tuple(labels) if labels is not None else None, coords=c)


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distances between two coordinate clouds (shapes n x k, m x k)."""
    if a.shape[1] != b.shape[1]:
        raise SpaceMismatchError(
            f"coordinate dimensions differ: {a.shape[1]} vs {b.shape[1]}"
        )
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def random_metric_space(n: int, seed: int) -> FiniteMetricSpace:
    """Seeded random metric on n points.

    Draws a symmetric matrix with entries in (0.1, 1.1), then replaces it by
    its all-pairs-shortest-path closure, so the triangle inequality holds
    exactly (the closure is iterated to a fixpoint of the relaxation step).
    Deterministic for a fixed seed.
    """
    if n < 1:
        raise EmptySpaceError("n must be >= 1")
    rng = np.random.default_rng(seed)
    return _random_metric_from_rng(n, rng)


def _random_metric_from_rng(n: int, rng: np.random.Generator) -> FiniteMetricSpace:
    if n < 1:
        raise EmptySpaceError("n must be >= 1")
    raw = rng.uniform(0.1, 1.1, size=(n, n))
    d = np.triu(raw, 1)
    d = d + d.T
    d = metric_closure(d)
    return FiniteMetricSpace(dist=d)


def metric_closure(dist: np.ndarray) -> np.ndarray:
    """Shortest-path closure of a symmetric nonnegative matrix with zero diagonal.

    Repeats Floyd-Warshall passes until no entry changes, so the triangle
    inequality holds exactly in floating point, not just up to round-off.
    """
    d = np.array(dist, dtype=np.float64)
    n = d.shape[0]
    while True:
        before = d.copy()
        for k in range(n):
            np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
        if np.array_equal(before, d):
            return d


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights over a space's points, summing to one."""

    space: FiniteMetricSpace
    w: np.ndarray

    def __post_init__(self):
        w = _frozen_array(self.w)
        if w.ndim != 1 or w.shape[0] != self.space.n:
            raise ShapeError(f"weights must have length {self.space.n}, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ShapeError("weights contain non-finite entries")
        if np.any(w < 0.0):
            raise InvariantError(f"negative weight: min = {w.min():.3e}")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise InvariantError(f"weights sum to {total!r}, not 1 within {WEIGHT_TOL}")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def support(self) -> np.ndarray:
        return np.nonzero(self.w > 0.0)[0]


def dirac(space: FiniteMetricSpace, index: int) -> DiscreteMeasure:
    """Point mass at one point of the space."""
    if not 0 <= index < space.n:
        raise DomainError(f"point index {index} out of range [0, {space.n})")
    w = np.zeros(space.n)
    w[index] = 1.0
    return DiscreteMeasure(space, w)


def uniform(space: FiniteMetricSpace) -> DiscreteMeasure:
    """Uniform measure over all points of the space."""
    return DiscreteMeasure(space, np.full(space.n, 1.0 / space.n))


def p_moment(mu: DiscreteMeasure, x0: int, p: float) -> float:
    """p-th moment of the distance to a base point: sum_i w[i] d(x0, i)^p.

    Always finite on a finite space; the base point is a free parameter.
    """
    if not 0 <= x0 < mu.n:
        raise DomainError(f"base point {x0} out of range [0, {mu.n})")
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    return float(np.dot(mu.w, mu.space.dist[x0] ** p))


def cost_matrix(space: FiniteMetricSpace, p: float) -> np.ndarray:
    """Entrywise p-th power of the distance matrix (the transport cost)."""
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    return space.dist**p


def cross_cost_matrix(
    first: FiniteMetricSpace, second: FiniteMetricSpace, p: float
) -> np.ndarray:
    """Cost d(x, y)^p between two spaces.

    If the spaces coincide this is `cost_matrix`; otherwise both must carry
    coordinates, and the cost is the Euclidean distance between the clouds.
    """
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    if first.same_as(second):
        return cost_matrix(first, p)
    if first.coords is None or second.coords is None:
        raise SpaceMismatchError(
            "measures live on different spaces and at least one has no coordinates"
        )
    return pairwise_distances(first.coords, second.coords) ** p


@dataclass(frozen=True)
class Coupling:
    """Joint probabilities with prescribed marginals (rows: first, cols: second)."""

    pi: np.ndarray
    first: DiscreteMeasure
    second: DiscreteMeasure

    def __post_init__(self):
        pi = np.ascontiguousarray(self.pi, dtype=np.float64)
        if pi.shape != (self.first.n, self.second.n):
            raise ShapeError(
                f"coupling must be {self.first.n} x {self.second.n}, got {pi.shape}"
            )
        if np.any(pi < -1e-12) or not np.all(np.isfinite(pi)):
            raise InvariantError(f"coupling entries must be >= 0; min = {pi.min():.3e}")
        pi = np.maximum(pi, 0.0)  # clamp round-off dust
        row_err = float(np.max(np.abs(pi.sum(axis=1) - self.first.w)))
        col_err = float(np.max(np.abs(pi.sum(axis=0) - self.second.w)))
        if row_err > MARGINAL_TOL or col_err > MARGINAL_TOL:
            raise InvariantError(
                f"marginal mismatch: rows {row_err:.3e}, cols {col_err:.3e} (tol {MARGINAL_TOL})"
            )
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


@dataclass(frozen=True)
class DualPair:
    """Potential vectors (a, b) feasible for the cost d^p: a(x) + b(y) <= d(x,y)^p."""

    a: np.ndarray
    b: np.ndarray
    p: float
    first_space: FiniteMetricSpace
    second_space: FiniteMetricSpace
    feas_slack: float = field(init=False)

    def __post_init__(self):
        a = _frozen_array(self.a)
        b = _frozen_array(self.b)
        if a.ndim != 1 or a.shape[0] != self.first_space.n:
            raise ShapeError("dual vector a has wrong length")
        if b.ndim != 1 or b.shape[0] != self.second_space.n:
            raise ShapeError("dual vector b has wrong length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ShapeError("dual vectors must be finite")
        c = cross_cost_matrix(self.first_space, self.second_space, self.p)
        worst = float(np.max(a[:, None] + b[None, :] - c))
        if worst > FEAS_TOL:
            raise FeasibilityError(
                f"dual pair infeasible: a(x)+b(y) exceeds d^p by {worst:.3e} (tol {FEAS_TOL})"
            )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "feas_slack", worst)

    def objective(self, mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
        """Dual objective <a, mu> + <b, nu>."""
        return float(np.dot(self.a, mu.w) + np.dot(self.b, nu.w))
