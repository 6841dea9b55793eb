"""Duality-based certification of the triangle inequality for W_p.

The machinery splits into a scalar layer and a measure layer.

Scalar layer.  For p > 1 and eta > 0, the sharp constant

    f(eta) = ((eta+1)^(p/(p-1)) - (eta+1)) / ((eta+1)^(1/(p-1)) - 1)^p - 1

is the smallest value making

    (X + Y)^p <= (1 + eta) X^p + (f(eta) + 1) Y^p        for all X, Y >= 0.

It arises as sup_{Z>0} of -eta*Z - 1 - Z + (1 + Z^(1/p))^p, attained at the
unique stationary point Z^(1/p) = 1 / ((eta+1)^(1/(p-1)) - 1); `f_eta_brute`
rebuilds it from that supremum as an independent oracle.  With the matched
choice eta + 1 = (Z^(-1/p) + 1)^(p-1) the two-coefficient bound collapses:
(1+eta) Z + f(eta) + 1 = (1 + Z^(1/p))^p exactly (`collapse_identity_check`).

Measure layer.  Take conjugate optimal potentials (alpha, gamma) for the
pair (lambda, nu), so <alpha, lambda> + <gamma, nu> = W_p(lambda, nu)^p.
With K = f(eta) + 1, the scaled infimal convolution

    beta_eta(y) = K * min_z ( d(y, z)^p - gamma(z) / K )

splits the single optimal pair into two feasible ones:

    alpha(x) - beta_eta(y) <= (1 + eta) d(x, y)^p      (`lemma_bound_check`)
    beta_eta(y) + gamma(z) <= K d(y, z)^p              (by construction)

so duality bounds W_p(lambda,nu)^p by (1+eta) W_p(lambda,mu)^p +
K W_p(mu,nu)^p for every eta > 0, and the collapse identity at the matched
eta turns the right side into (W_p(lambda,mu) + W_p(mu,nu))^p.
`certify_triangle` runs that whole chain and records every slack; the p = 1
route goes through the 1-Lipschitz potential instead (`certify_triangle_kr`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from otlab.conjugacy import Potential, _ctransform, conjugate_normalize, kr_potential, p_legendre
from otlab.core import DiscreteMeasure, cost_matrix, p_moment
from otlab.errors import (
    DegenerateTriangleError,
    DomainError,
    ExponentError,
    SpaceMismatchError,
)
from otlab.transport import solve_transport

TRIVIAL_BRANCH_EPS = 1e-12
LEMMA_TOL = 1e-9
LINK_TOL = 1e-9
COLLAPSE_TOL = 1e-9
TRIANGLE_TOL = 1e-8
DUAL_MATCH_TOL = 1e-7


def _check_p_eta(p: float, eta: float | None = None) -> None:
    if not (np.isfinite(p) and p > 1.0):
        raise ExponentError(f"this construction needs p > 1, got p = {p}")
    if eta is not None and not (np.isfinite(eta) and eta > 0.0):
        raise DomainError(f"eta must be positive, got {eta}")


_LOG2 = math.log(2.0)


def _log1mexp(x: float) -> float:
    """log(1 - exp(-x)) for x > 0, accurate in both small- and large-x regimes."""
    if x <= _LOG2:
        return math.log(-math.expm1(-x))
    return math.log1p(-math.exp(-x))


def f_eta(p: float, eta: float) -> float:
    """Sharp second coefficient (minus one) of the split power inequality.

    Evaluated in the cancellation-free form

        f(eta) = (1 - (eta+1)^(-1/(p-1)))^(1-p) - 1
               = expm1( (1-p) * log1mexp(log1p(eta)/(p-1)) ),

    which keeps full relative precision even where f is astronomically
    large (small eta, large p) or vanishingly small (large eta, p near 1).
    Strictly positive and strictly decreasing in eta wherever the true value
    is representable at all; once log1p(eta)/(p-1) passes ~745 the true f
    drops below the smallest subnormal and the result underflows to 0.
    """
    _check_p_eta(p, eta)
    x = math.log1p(eta) / (p - 1.0)  # log of (eta+1)^(1/(p-1))
    return math.expm1((1.0 - p) * _log1mexp(x))


def critical_z(p: float, eta: float) -> float:
    """Unique stationary ratio Z = (X/Y)^p where the split inequality is tight.

    Z^(1/p) = 1 / ((eta+1)^(1/(p-1)) - 1); the derivative
    -(eta+1) + (Z^(-1/p)+1)^(p-1) of the supremum's objective vanishes here.
    """
    _check_p_eta(p, eta)
    x = math.log1p(eta) / (p - 1.0)
    root = math.expm1(x)  # (eta+1)^(1/(p-1)) - 1
    return math.exp(-p * math.log(root))


def f_eta_brute(p: float, eta: float, grid_points: int = 2001, span: float = 1e3) -> float:
    """Oracle for f_eta: maximize -eta*Z - 1 - Z + (1 + Z^(1/p))^p on a grid.

    The grid is geometric over [Zc/span, Zc*span] around the stationary
    point Zc, with Zc itself included, so the maximum matches the closed
    form to round-off; off the stationary point every grid value stays below
    it (the objective is concave in Z).
    """
    _check_p_eta(p, eta)
    if grid_points < 1:
        raise DomainError("grid_points must be >= 1")
    zc = critical_z(p, eta)
    grid = np.geomspace(zc / span, zc * span, grid_points)
    grid = np.append(grid, zc)
    # objective regrouped as [(1+Z^(1/p))^p - 1] - (eta+1) Z and evaluated
    # through expm1/log1p, otherwise the two O(1) terms swallow tiny values
    vals = np.expm1(p * np.log1p(grid ** (1.0 / p))) - (eta + 1.0) * grid
    return float(np.max(vals))


def lemma2_violations(p: float, eta: float, x, y) -> np.ndarray:
    """Per-sample residual (X+Y)^p - (1+eta) X^p - (f(eta)+1) Y^p.

    Nonpositive up to round-off for all X, Y >= 0; the natural scale of the
    round-off at a sample is 1e-9 * (1 + (X+Y)^p).
    """
    _check_p_eta(p, eta)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x < 0.0) or np.any(y < 0.0):
        raise DomainError("samples must be nonnegative")
    k = f_eta(p, eta) + 1.0
    return (x + y) ** p - (1.0 + eta) * x**p - k * y**p


def lemma2_check(p: float, eta: float, samples) -> float:
    """Max violation of the split power inequality over (X, Y) samples."""
    arr = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    return float(np.max(lemma2_violations(p, eta, arr[:, 0], arr[:, 1])))


def collapse_identity_check(p: float, z: float) -> float:
    """Relative residual of the collapse identity at the matched eta.

    With eta + 1 = (Z^(-1/p) + 1)^(p-1), returns
    |(1+eta) Z + f(eta) + 1 - (1 + Z^(1/p))^p| / (1 + Z^(1/p))^p.
    """
    _check_p_eta(p)
    if not (np.isfinite(z) and z > 0.0):
        raise DomainError(f"Z must be positive, got {z}")
    w = math.exp(-math.log(z) / p)  # Z^(-1/p)
    eta = math.expm1((p - 1.0) * math.log1p(w))
    lhs = (1.0 + eta) * z + f_eta(p, eta) + 1.0
    rhs = math.exp(p * math.log1p(math.exp(math.log(z) / p)))
    return abs(lhs - rhs) / rhs


def choose_eta(p: float, w_lambda_mu: float, w_mu_nu: float) -> float:
    """The matched eta for given leg lengths: (w_mu_nu/w_lambda_mu + 1)^(p-1) - 1.

    At p = 2 this is exactly the ratio w_mu_nu / w_lambda_mu.  Zero or
    negative legs have no matched eta; the caller must take the trivial
    branch instead.
    """
    _check_p_eta(p)
    if not (w_lambda_mu > 0.0 and w_mu_nu > 0.0):
        raise DegenerateTriangleError(
            f"legs must be positive for the eta choice, got {w_lambda_mu!r}, {w_mu_nu!r}"
        )
    return math.expm1((p - 1.0) * math.log1p(w_mu_nu / w_lambda_mu))


@dataclass(frozen=True)
class EtaWeights:
    """The two coefficients of the split bound: left = 1+eta, right = f(eta)+1."""

    p: float
    eta: float
    left: float
    right: float


def eta_weights(p: float, eta: float) -> EtaWeights:
    _check_p_eta(p, eta)
    return EtaWeights(p=p, eta=eta, left=1.0 + eta, right=f_eta(p, eta) + 1.0)


def beta_eta(gamma: Potential, p: float, eta: float) -> Potential:
    """Scaled infimal convolution K * min_z ( d(., z)^p - gamma(z) / K ).

    K = f(eta) + 1, so beta_eta / K is the conjugate of gamma / K and is
    therefore concave for the cost d^p.  At p = 2, K equals 1 + 1/eta.
    """
    _check_p_eta(p, eta)
    if gamma.p != p:
        raise DomainError(f"potential carries p = {gamma.p}, expected {p}")
    k = f_eta(p, eta) + 1.0
    c = cost_matrix(gamma.space, p)
    scaled = np.where(gamma.finite_mask(), gamma.values / k, -np.inf)
    return Potential(space=gamma.space, values=k * _ctransform(c, scaled), p=p)


class LemmaBound(NamedTuple):
    """Worst residual of alpha(x) - beta(y) <= (1+eta) d(x,y)^p, and where."""

    max_violation: float
    x: int
    y: int
    scale: float  # 1 + |alpha(x)| + |beta(y)| at the argmax


def lemma_bound_check(gamma: Potential, p: float, eta: float) -> LemmaBound:
    """Pointwise check of the split-pair bound, rebuilding both sides.

    alpha = gamma* and beta_eta are recomputed here from gamma, which makes
    mismatched-potential misuse impossible at the cost of one extra
    transform.  Returns the largest residual over all (x, y) pairs together
    with its location and natural round-off scale.
    """
    _check_p_eta(p, eta)
    if gamma.p != p:
        raise DomainError(f"potential carries p = {gamma.p}, expected {p}")
    alpha = p_legendre(gamma).values
    beta = beta_eta(gamma, p, eta).values
    c = cost_matrix(gamma.space, p)
    resid = alpha[:, None] - beta[None, :] - (1.0 + eta) * c
    flat = int(np.argmax(resid))
    x, y = divmod(flat, gamma.space.n)
    return LemmaBound(
        max_violation=float(resid[x, y]),
        x=x,
        y=y,
        scale=1.0 + abs(float(alpha[x])) + abs(float(beta[y])),
    )


def beta_integrability_bound(
    beta: Potential,
    gamma: Potential,
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    p: float,
    eta: float,
    x0: int,
) -> bool:
    """Discrete form of the L1 bound on beta_eta.

    sum_y mu(y) |beta(y)|  <=  2^(p-1) K (moment_p(mu, x0) + moment_p(nu, x0))
                               + sum_z nu(z) |gamma(z)|  + 1e-9,

    with K = f(eta) + 1.  Finite moments make beta integrable; this just
    evaluates both sides.
    """
    _check_p_eta(p, eta)
    k = f_eta(p, eta) + 1.0
    lhs = float(np.dot(mu.w, np.abs(beta.values)))
    gamma_l1 = float(np.dot(nu.w, np.abs(np.where(gamma.finite_mask(), gamma.values, 0.0))))
    rhs = 2.0 ** (p - 1.0) * k * (p_moment(mu, x0, p) + p_moment(nu, x0, p)) + gamma_l1
    return lhs <= rhs + 1e-9


@dataclass(frozen=True)
class ChainReport:
    """Everything the triangle certificate measured, slacks included.

    Slacks are signed: nonnegative means the inequality held with room.
    `certified` is the conjunction of every check at its pinned tolerance;
    a certified report always satisfies
    w_lambda_nu <= w_lambda_mu + w_mu_nu + 1e-8.
    """

    p: float
    eta: float
    w_lambda_mu: float
    w_mu_nu: float
    w_lambda_nu: float
    lemma_bound_max_violation: float
    ineq_wlamu_slack: float
    ineq_wmunu_slack: float
    rhs_collapsed: float
    certified: bool
    branch: str  # "duality" | "trivial" | "lipschitz"
    dual_objective: float
    collapse_residual: float
    violation_pair: tuple[int, int] | None = None

    def __post_init__(self):
        if self.certified and not (
            self.w_lambda_nu <= self.w_lambda_mu + self.w_mu_nu + TRIANGLE_TOL
        ):
            raise AssertionError(
                "certified report violates the triangle inequality: "
                f"{self.w_lambda_nu} > {self.w_lambda_mu} + {self.w_mu_nu}"
            )


def _require_shared_space(*measures: DiscreteMeasure) -> None:
    base = measures[0].space
    for m in measures[1:]:
        if not base.same_as(m.space):
            raise SpaceMismatchError("certification needs all measures on one shared space")


def certify_triangle(
    lam: DiscreteMeasure, mu: DiscreteMeasure, nu: DiscreteMeasure, p: float
) -> ChainReport:
    """Certify W_p(lam, nu) <= W_p(lam, mu) + W_p(mu, nu) through duality.

    Pipeline: solve (lam, nu) and conjugate-normalize its duals into
    (alpha, gamma); solve the two legs; if either leg is below 1e-12 take
    the trivial branch; otherwise pick the matched eta, build beta_eta,
    verify the pointwise bound and the two dual-side inequalities, and check
    that the assembled right side collapses to (leg sum)^p.  Every slack is
    recorded; any violation beyond tolerance flags the report uncertified
    and keeps the offending pair.
    """
    if not (np.isfinite(p) and p > 1.0):
        raise ExponentError(f"duality route needs p > 1 (p = 1 has the Lipschitz route), got {p}")
    _require_shared_space(lam, mu, nu)

    sol13 = solve_transport(lam, nu, p)
    sol12 = solve_transport(lam, mu, p)
    sol23 = solve_transport(mu, nu, p)
    w13, w12, w23 = sol13.distance, sol12.distance, sol23.distance

    if w12 <= TRIVIAL_BRANCH_EPS or w23 <= TRIVIAL_BRANCH_EPS:
        certified = w13 <= w12 + w23 + TRIANGLE_TOL
        return ChainReport(
            p=p,
            eta=math.nan,
            w_lambda_mu=w12,
            w_mu_nu=w23,
            w_lambda_nu=w13,
            lemma_bound_max_violation=math.nan,
            ineq_wlamu_slack=math.nan,
            ineq_wmunu_slack=math.nan,
            rhs_collapsed=(w12 + w23) ** p,
            certified=certified,
            branch="trivial",
            dual_objective=math.nan,
            collapse_residual=math.nan,
        )

    conj = conjugate_normalize(sol13.duals)
    alpha = Potential(space=lam.space, values=conj.a, p=p)
    gamma = Potential(space=lam.space, values=conj.b, p=p)
    dual_obj = conj.objective(lam, nu)
    dual_ok = abs(dual_obj - sol13.value) <= DUAL_MATCH_TOL * (1.0 + sol13.value)

    eta = choose_eta(p, w12, w23)
    weights = eta_weights(p, eta)
    beta = beta_eta(gamma, p, eta)

    lemma = lemma_bound_check(gamma, p, eta)
    lemma_ok = lemma.max_violation <= LEMMA_TOL * lemma.scale

    lhs12 = float(np.dot(alpha.values, lam.w) - np.dot(beta.values, mu.w))
    rhs12 = weights.left * sol12.value
    slack12 = rhs12 - lhs12
    link12_ok = slack12 >= -LINK_TOL * (1.0 + abs(rhs12))

    lhs23 = float(np.dot(beta.values, mu.w) + np.dot(gamma.values, nu.w))
    rhs23 = weights.right * sol23.value
    slack23 = rhs23 - lhs23
    link23_ok = slack23 >= -LINK_TOL * (1.0 + abs(rhs23))

    rhs_chain = rhs12 + rhs23
    rhs_collapsed = (w12 + w23) ** p
    collapse_residual = abs(rhs_chain - rhs_collapsed) / rhs_collapsed
    collapse_ok = collapse_residual <= COLLAPSE_TOL

    certified = (
        dual_ok
        and lemma_ok
        and link12_ok
        and link23_ok
        and collapse_ok
        and w13 <= w12 + w23 + TRIANGLE_TOL
    )
    return ChainReport(
        p=p,
        eta=eta,
        w_lambda_mu=w12,
        w_mu_nu=w23,
        w_lambda_nu=w13,
        lemma_bound_max_violation=lemma.max_violation,
        ineq_wlamu_slack=slack12,
        ineq_wmunu_slack=slack23,
        rhs_collapsed=rhs_collapsed,
        certified=certified,
        branch="duality",
        dual_objective=dual_obj,
        collapse_residual=collapse_residual,
        violation_pair=None if lemma_ok else (lemma.x, lemma.y),
    )


def certify_triangle_kr(
    lam: DiscreteMeasure, mu: DiscreteMeasure, nu: DiscreteMeasure
) -> ChainReport:
    """Certify the p = 1 triangle inequality through a 1-Lipschitz potential.

    The optimal potential phi for (lam, nu) gives
    W_1(lam, nu) = <phi, lam> - <phi, nu>, and each middle term
    |<phi, .> - <phi, .>| is bounded by the corresponding W_1 because phi is
    feasible for the sup formulation of that leg.
    """
    _require_shared_space(lam, mu, nu)
    sol13 = solve_transport(lam, nu, 1.0)
    sol12 = solve_transport(lam, mu, 1.0)
    sol23 = solve_transport(mu, nu, 1.0)
    w13, w12, w23 = sol13.distance, sol12.distance, sol23.distance

    phi = kr_potential(sol13.duals)
    int_lam = float(np.dot(phi.values, lam.w))
    int_mu = float(np.dot(phi.values, mu.w))
    int_nu = float(np.dot(phi.values, nu.w))

    dual_obj = int_lam - int_nu
    dual_ok = abs(dual_obj - w13) <= TRIANGLE_TOL * (1.0 + w13)
    slack12 = w12 - abs(int_lam - int_mu)
    slack23 = w23 - abs(int_mu - int_nu)
    certified = (
        dual_ok
        and slack12 >= -TRIANGLE_TOL
        and slack23 >= -TRIANGLE_TOL
        and w13 <= w12 + w23 + TRIANGLE_TOL
    )
    return ChainReport(
        p=1.0,
        eta=math.nan,
        w_lambda_mu=w12,
        w_mu_nu=w23,
        w_lambda_nu=w13,
        lemma_bound_max_violation=math.nan,
        ineq_wlamu_slack=slack12,
        ineq_wmunu_slack=slack23,
        rhs_collapsed=w12 + w23,
        certified=certified,
        branch="lipschitz",
        dual_objective=dual_obj,
        collapse_residual=math.nan,
    )
