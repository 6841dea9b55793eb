"""Conjugation machinery for the cost d^p.

The central operation is the transform

    f*(y) = min_x ( d(x, y)^p - f(x) ),

an order-reversing conjugation: applying it twice to any transform gives the
transform back, which is the finite-space test for a function being a
transform at all ("concave for the cost d^p").  Double conjugation turns raw
LP duals into a conjugate optimal pair without decreasing the dual
objective.  The p = 1 case produces 1-Lipschitz potentials; the Euclidean
p = 2 case reduces to the classical convex conjugate, and
`legendre_bridge_check` verifies that reduction numerically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otlab.core import (
    DualPair,
    FiniteMetricSpace,
    cost_matrix,
    cross_cost_matrix,
)
from otlab.errors import (
    DomainError,
    ExponentError,
    ShapeError,
    UnsupportedInstanceError,
)

CONJ_TOL = 1e-9

NEG_INF = float("-inf")


@dataclass(frozen=True)
class Potential:
    """Extended-real function on a space's points: finite values or -inf.

    -inf marks points excluded from minimization (the extended-real
    convention); +inf and NaN are rejected, and at least one value must be
    finite.
    """

    space: FiniteMetricSpace
    values: np.ndarray
    p: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.shape[0] != self.space.n:
            raise ShapeError(f"potential must have length {self.space.n}, got {vals.shape}")
        if np.any(np.isnan(vals)) or np.any(vals == np.inf):
            raise DomainError("potential values must be finite or -inf")
        if not np.any(np.isfinite(vals)):
            raise DomainError("potential is identically -inf")
        if self.p < 1.0:
            raise ExponentError(f"p must be >= 1, got {self.p}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


def _ctransform(cost: np.ndarray, values: np.ndarray) -> np.ndarray:
    """out[y] = min over x with values[x] > -inf of (cost[x, y] - values[x])."""
    finite = np.isfinite(values)
    diff = cost[finite] - values[finite, None]
    return np.min(diff, axis=0)


def p_legendre(f: Potential) -> Potential:
    """Conjugate of a potential for the cost d^p on its own space.

    Output values are always finite; -inf entries of the input simply drop
    out of the minimization.  Ties in the argmin do not affect the value.
    """
    c = cost_matrix(f.space, f.p)
    return Potential(space=f.space, values=_ctransform(c, f.values), p=f.p)


def is_dp_concave(g: Potential) -> bool:
    """Fixed-point test: g is a transform iff conjugating twice returns g.

    Componentwise tolerance 1e-9.  A potential with -inf entries can never
    be a transform on a finite space (transforms are finite), so it fails.
    """
    if not g.finite_mask().all():
        return False
    gg = p_legendre(p_legendre(g))
    return bool(np.max(np.abs(gg.values - g.values)) <= CONJ_TOL)


def conjugate_normalize(duals: DualPair) -> DualPair:
    """Double conjugation of a feasible dual pair.

    Returns (a', b') with b' = a*, a' = (b')*: a conjugate pair that is
    feasible by construction and whose objective never falls below the
    input's.  Already-conjugate pairs come back unchanged.
    """
    c = cross_cost_matrix(duals.first_space, duals.second_space, duals.p)
    b_new = _ctransform(c, duals.a)  # min over x of c - a
    a_new = _ctransform(c.T, b_new)  # min over y of c - b'
    return DualPair(
        a=a_new,
        b=b_new,
        p=duals.p,
        first_space=duals.first_space,
        second_space=duals.second_space,
    )


def kr_potential(duals: DualPair) -> Potential:
    """Collapse p = 1 duals into a single 1-Lipschitz potential.

    phi = -(a*) is a contraction, and <phi, mu> - <phi, nu> dominates the
    dual objective <a, mu> + <b, nu> of the input pair.  Requires both
    measures on one shared space, so phi can integrate against either.
    """
    if duals.p != 1.0:
        raise ExponentError(f"the Lipschitz route needs p = 1, got p = {duals.p}")
    if not duals.first_space.same_as(duals.second_space):
        raise UnsupportedInstanceError("the Lipschitz route needs a single shared space")
    c = cost_matrix(duals.first_space, 1.0)
    phi = -_ctransform(c, duals.a)
    return Potential(space=duals.first_space, values=phi, p=1.0)


def lipschitz_constant(f: Potential) -> float:
    """max over pairs x != y of |f(x) - f(y)| / d(x, y) (0 on one point)."""
    vals = f.values
    if not np.all(np.isfinite(vals)):
        raise DomainError("Lipschitz constant needs finite values")
    d = f.space.dist
    n = f.space.n
    if n == 1:
        return 0.0
    off = ~np.eye(n, dtype=bool)
    diff = np.abs(vals[:, None] - vals[None, :])[off]
    dd = d[off]
    pos = dd > 0.0
    if np.any(diff[~pos] > 0.0):
        return float("inf")
    return float(np.max(diff[pos] / dd[pos])) if pos.any() else 0.0


def legendre_bridge_check(f: Potential, tol: float = CONJ_TOL) -> bool:
    """Check the Euclidean p = 2 reduction to the classical conjugate.

    With F(x) = (|x|^2 - f(x)) / 2 and G(y) = max_x (x.y - F(x)) over the
    point set, the transform g = f* for d^2 must satisfy
    G(y) = (|y|^2 - g(y)) / 2 at every point.  Both maxima run over the same
    finite point set, so the identity is exact up to round-off.
    """
    if f.space.coords is None:
        raise UnsupportedInstanceError("bridge check needs a coordinate-built space")
    if f.p != 2.0:
        raise ExponentError(f"bridge check needs p = 2, got p = {f.p}")
    g = p_legendre(f).values
    x = f.space.coords
    sq = np.einsum("ik,ik->i", x, x)
    finite = f.finite_mask()
    big_f = 0.5 * (sq - f.values)  # +inf where f = -inf; excluded below
    inner = x @ x.T
    big_g = np.max(inner[finite] - big_f[finite, None], axis=0)
    rhs = 0.5 * (sq - g)
    return bool(np.max(np.abs(big_g - rhs)) <= tol)
