"""Exact discrete Kantorovich problem: optimal couplings, duals, certificates.

`solve_transport` runs a primal network simplex on the bipartite
transportation graph, so the optimum is a vertex of the transportation
polytope and the dual node potentials come for free.  Every returned
solution carries a duality-gap certificate and satisfies complementary
slackness on the support of the coupling.

The glueing construction and a brute-force permutation oracle live here as
independent cross-checks on the solver.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from otlab import _kernels
from otlab.core import (
    Coupling,
    DiscreteMeasure,
    DualPair,
    cross_cost_matrix,
)
from otlab.errors import (
    DomainError,
    GlueingError,
    InvariantError,
    UnsupportedInstanceError,
)

GAP_REL_TOL = 1e-7
GAP_ABS_FLOOR = 1e-9
SUPPORT_EPS = 1e-10
SLACK_TOL = 1e-7


@dataclass(frozen=True)
class TransportSolution:
    """Optimal value W_p(mu, nu)^p with primal, dual and gap certificates."""

    value: float
    p: float
    coupling: Coupling
    duals: DualPair
    gap: float
    iterations: int

    def __post_init__(self):
        if self.value < 0.0:
            raise InvariantError(f"negative transport value {self.value!r}")
        if not -GAP_ABS_FLOOR <= self.gap <= GAP_REL_TOL * (1.0 + self.value):
            raise InvariantError(
                f"duality gap {self.gap:.3e} outside certificate range for value {self.value:.6g}"
            )
        # complementary slackness: mass only where the dual constraint is tight
        pi = self.coupling.pi
        c = cross_cost_matrix(self.duals.first_space, self.duals.second_space, self.p)
        tight = np.abs(self.duals.a[:, None] + self.duals.b[None, :] - c)
        worst = float(np.max(np.where(pi > SUPPORT_EPS, tight, 0.0)))
        if worst > SLACK_TOL:
            raise InvariantError(
                f"complementary slackness violated by {worst:.3e} on the coupling support"
            )

    @property
    def distance(self) -> float:
        """W_p(mu, nu) = value ** (1/p)."""
        return float(self.value ** (1.0 / self.p))


def _check_p(p: float) -> float:
    p = float(p)
    if not np.isfinite(p) or p < 1.0:
        raise DomainError(f"exponent p must satisfy p >= 1, got {p}")
    return p


def solve_transport(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> TransportSolution:
    """Exact optimum of min <d^p, pi> over couplings of (mu, nu).

    Zero-weight support points are dropped before solving; their dual values
    are back-filled by conjugation against the surviving potential, which
    keeps the full-size pair feasible.
    """
    p = _check_p(p)
    c = cross_cost_matrix(mu.space, nu.space, p)
    m, n = c.shape

    rows = mu.w > 0.0
    cols = nu.w > 0.0
    full = bool(rows.all() and cols.all())
    c_sub = c if full else np.ascontiguousarray(c[np.ix_(rows, cols)])

    flow, u, v, iters = _kernels.ns_solve(c_sub, mu.w[rows], nu.w[cols])

    if full:
        pi, a, b = flow, u, v
    else:
        pi = np.zeros((m, n))
        pi[np.ix_(rows, cols)] = flow
        a = np.empty(m)
        b = np.empty(n)
        a[rows] = u
        b[cols] = v
        dropped_rows = ~rows
        if dropped_rows.any():
            a[dropped_rows] = np.min(c[np.ix_(dropped_rows, cols)] - b[cols][None, :], axis=1)
        dropped_cols = ~cols
        if dropped_cols.any():
            b[dropped_cols] = np.min(c[:, dropped_cols] - a[:, None], axis=0)

    value = float(np.sum(c * pi))
    gap = value - float(np.dot(a, mu.w) + np.dot(b, nu.w))
    return TransportSolution(
        value=value,
        p=p,
        coupling=Coupling(pi=pi, first=mu, second=nu),
        duals=DualPair(a=a, b=b, p=p, first_space=mu.space, second_space=nu.space),
        gap=gap,
        iterations=iters,
    )


def wasserstein_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """The distance W_p(mu, nu) itself (p-th root of the optimal cost)."""
    return solve_transport(mu, nu, p).distance


def duality_gap(sol: TransportSolution) -> float:
    """Recompute <c, pi> - (<a, mu> + <b, nu>) from the solution's own pieces."""
    c = cross_cost_matrix(sol.duals.first_space, sol.duals.second_space, sol.p)
    primal = float(np.sum(c * sol.coupling.pi))
    dual = sol.duals.objective(sol.coupling.first, sol.coupling.second)
    return primal - dual


ORACLE_MAX_POINTS = 8


def permutation_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """Brute-force W_p for uniform measures with equal support sizes.

    For equal-size uniform marginals the transportation polytope's vertices
    are permutation matrices, so scanning all n! permutations is an exact,
    solver-independent oracle.  Hard-capped at n = 8 (40320 permutations).
    """
    p = _check_p(p)
    si = mu.support()
    sj = nu.support()
    n = len(si)
    if len(sj) != n:
        raise UnsupportedInstanceError("oracle needs equal support sizes")
    if n > ORACLE_MAX_POINTS:
        raise UnsupportedInstanceError(f"oracle capped at {ORACLE_MAX_POINTS} points, got {n}")
    if np.max(np.abs(mu.w[si] - 1.0 / n)) > 1e-12 or np.max(np.abs(nu.w[sj] - 1.0 / n)) > 1e-12:
        raise UnsupportedInstanceError("oracle needs uniform weights on both supports")
    c = cross_cost_matrix(mu.space, nu.space, p)[np.ix_(si, sj)]
    best = min(
        sum(c[i, perm[i]] for i in range(n)) for perm in itertools.permutations(range(n))
    )
    return float((best / n) ** (1.0 / p))


@dataclass(frozen=True)
class GluedTriple:
    """Three-way joint measure with prescribed (1,2)- and (2,3)-marginals."""

    sigma: np.ndarray
    first: DiscreteMeasure
    middle: DiscreteMeasure
    last: DiscreteMeasure
    rho12: Coupling = field(repr=False)
    rho23: Coupling = field(repr=False)

    def __post_init__(self):
        sigma = np.ascontiguousarray(self.sigma, dtype=np.float64)
        if sigma.shape != (self.first.n, self.middle.n, self.last.n):
            raise InvariantError(f"glued tensor has wrong shape {sigma.shape}")
        if np.any(sigma < 0.0):
            raise InvariantError("glued tensor has negative entries")
        err12 = float(np.max(np.abs(sigma.sum(axis=2) - self.rho12.pi)))
        err23 = float(np.max(np.abs(sigma.sum(axis=0) - self.rho23.pi)))
        mass = float(sigma.sum())
        if err12 > 1e-10 or err23 > 1e-10:
            raise InvariantError(
                f"glued marginals off: (1,2) by {err12:.3e}, (2,3) by {err23:.3e}"
            )
        if abs(mass - 1.0) > 1e-10:
            raise InvariantError(f"glued tensor mass {mass!r} is not 1")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    def outer_marginal(self) -> Coupling:
        """Project out the middle coordinate; a coupling of (first, last)."""
        return Coupling(pi=self.sigma.sum(axis=1), first=self.first, second=self.last)


def glue_couplings(rho12: Coupling, rho23: Coupling) -> GluedTriple:
    """Glue two couplings through their shared middle marginal.

    sigma[i, j, k] = rho12[i, j] * rho23[j, k] / mid[j] wherever mid[j] > 0
    (discrete disintegration through the middle measure).
    """
    mid = rho12.second
    if rho23.first.n != mid.n:
        raise GlueingError("middle marginals have different sizes")
    col12 = rho12.pi.sum(axis=0)
    row23 = rho23.pi.sum(axis=1)
    mismatch = float(np.max(np.abs(col12 - row23)))
    if mismatch > 1e-10:
        raise GlueingError(f"middle marginals disagree by {mismatch:.3e} (tol 1e-10)")
    inv_mid = np.zeros(mid.n)
    pos = mid.w > 0.0
    inv_mid[pos] = 1.0 / mid.w[pos]
    sigma = np.einsum("ij,jk->ijk", rho12.pi * inv_mid[None, :], rho23.pi)
    return GluedTriple(
        sigma=sigma,
        first=rho12.first,
        middle=mid,
        last=rho23.second,
        rho12=rho12,
        rho23=rho23,
    )


def triangle_via_glueing(
    lam: DiscreteMeasure, mu: DiscreteMeasure, nu: DiscreteMeasure, p: float
) -> tuple[float, bool]:
    """Classical triangle-inequality route: glue optimal couplings.

    Glues the optimal couplings of (lam, mu) and (mu, nu), projects to the
    outer (1,3)-marginal, and evaluates its cost.  Returns the bound
    (<d^p, rho13>)^(1/p) and the flag
    W_p(lam, nu) <= bound <= W_p(lam, mu) + W_p(mu, nu) + 1e-8.
    Kept as a cross-check against the duality route.
    """
    p = _check_p(p)
    sol12 = solve_transport(lam, mu, p)
    sol23 = solve_transport(mu, nu, p)
    glued = glue_couplings(sol12.coupling, sol23.coupling)
    rho13 = glued.outer_marginal()
    c13 = cross_cost_matrix(lam.space, nu.space, p)
    bound = float(np.sum(c13 * rho13.pi) ** (1.0 / p))
    w13 = wasserstein_p(lam, nu, p)
    ok = w13 <= bound + 1e-8 and bound <= sol12.distance + sol23.distance + 1e-8
    return bound, ok
