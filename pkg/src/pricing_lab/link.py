"""Gaussian survival link, virtual valuation, greedy pricing, and derived constants.

The demand model is Bernoulli with purchase probability S(w), w = beta*p - u,
where S(w) = 1 - Phi(w / sigma) is the survival function of centered gaussian
valuation noise.  S is strictly decreasing, so its derivative s = S' is
negative throughout; f = -s is the (positive) noise density.  The virtual
valuation phi(w) = S(w)/f(w) - w is strictly decreasing with phi' < -1, which
makes the greedy price J(u, beta) = (u + phi^{-1}(u)) / beta well defined.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Absolute tolerance on |phi(w) - u| for the bisection inverse.
_INV_TOL = 1e-10
# Bracket expansion hard cap, in units of sigma.
_BRACKET_CAP_SIGMAS = 50.0


class LinkError(ValueError):
    """Domain error in link evaluation (non-finite input, underflow, bracket failure)."""


@dataclass(frozen=True)
class LinkModel:
    """Survival link S(w) = 1 - Phi(w / sigma) with noise scale sigma > 0."""

    sigma: float = 0.5
    kind: str = "gaussian-survival"

    def __post_init__(self) -> None:
        if not (isinstance(self.sigma, (int, float)) and math.isfinite(self.sigma) and self.sigma > 0):
            raise LinkError(f"sigma must be a finite positive number, got {self.sigma!r}")
        if self.kind != "gaussian-survival":
            raise LinkError(f"unsupported link kind {self.kind!r}")


def _check_finite_scalar(w: float, name: str = "w") -> float:
    w = float(w)
    if not math.isfinite(w):
        raise LinkError(f"non-finite {name}: {w!r}")
    return w


def survival(link: LinkModel, w):
    """S(w): purchase probability at margin w.  Accepts floats or arrays."""
    if isinstance(w, np.ndarray):
        if not np.all(np.isfinite(w)):
            raise LinkError("non-finite entries in w")
        return ndtr(-w / link.sigma)
    w = _check_finite_scalar(w)
    return 0.5 * math.erfc(w / (link.sigma * _SQRT2))


def density(link: LinkModel, w):
    """f(w) = -S'(w): gaussian noise density scaled by 1/sigma."""
    if isinstance(w, np.ndarray):
        if not np.all(np.isfinite(w)):
            raise LinkError("non-finite entries in w")
        z = w / link.sigma
        return np.exp(-0.5 * z * z) / (link.sigma * _SQRT2PI)
    w = _check_finite_scalar(w)
    z = w / link.sigma
    return math.exp(-0.5 * z * z) / (link.sigma * _SQRT2PI)


def density_deriv(link: LinkModel, w):
    """f'(w) = -S''(w); equals -(w / sigma^2) * f(w) for the gaussian kind."""
    if isinstance(w, np.ndarray):
        return -(w / link.sigma**2) * density(link, w)
    w = _check_finite_scalar(w)
    return -(w / link.sigma**2) * density(link, w)


_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def hazard_up(link: LinkModel, w):
    """f(w)/S(w) through erfcx, exact to the far right tail (no underflow).

    The naive ratio loses S to underflow near w ~ 8*sigma; erfcx keeps the
    quotient finite and accurate for all margins, which the loss derivatives
    rely on.  Vanishes (correctly) as w -> -inf.
    """
    if isinstance(w, np.ndarray):
        if not np.all(np.isfinite(w)):
            raise LinkError("non-finite entries in w")
        t = w / (link.sigma * _SQRT2)
        with np.errstate(over="ignore"):
            return _SQRT_2_OVER_PI / (link.sigma * erfcx(t))
    w = _check_finite_scalar(w)
    t = w / (link.sigma * _SQRT2)
    e = float(erfcx(t))
    return _SQRT_2_OVER_PI / (link.sigma * e) if math.isfinite(e) else 0.0


def hazard_down(link: LinkModel, w):
    """f(w)/(1 - S(w)): the mirror-image lower-tail ratio, same stability."""
    if isinstance(w, np.ndarray):
        if not np.all(np.isfinite(w)):
            raise LinkError("non-finite entries in w")
        t = -w / (link.sigma * _SQRT2)
        with np.errstate(over="ignore"):
            return _SQRT_2_OVER_PI / (link.sigma * erfcx(t))
    w = _check_finite_scalar(w)
    t = -w / (link.sigma * _SQRT2)
    e = float(erfcx(t))
    return _SQRT_2_OVER_PI / (link.sigma * e) if math.isfinite(e) else 0.0


def varphi(link: LinkModel, w: float) -> float:
    """Virtual valuation phi(w) = S(w)/f(w) - w (strictly decreasing, phi' < -1)."""
    w = _check_finite_scalar(w)
    f = density(link, w)
    if f == 0.0:
        raise LinkError(f"density underflow at w={w}; phi(w) is not evaluable here")
    return survival(link, w) / f - w


def varphi_inv(link: LinkModel, u: float) -> float:
    """Solve phi(w) = u by bracketing plus bisection; |phi(w) - u| <= 1e-10.

    The bracket expands geometrically from [-sigma, sigma] and is capped at
    |w| <= 50 * sigma; expansion past the cap raises LinkError.
    """
    u = _check_finite_scalar(u, "u")
    cap = _BRACKET_CAP_SIGMAS * link.sigma
    lo, hi = -link.sigma, link.sigma
    # phi decreasing: widen hi until phi(hi) <= u, lo until phi(lo) >= u.
    while varphi(link, hi) > u:
        if hi >= cap:
            raise LinkError(f"bracket expansion failed at w={hi} (cap {cap}) for u={u}")
        hi = min(2.0 * hi, cap)
    while varphi(link, lo) < u:
        if lo <= -cap:
            raise LinkError(f"bracket expansion failed at w={lo} (cap {-cap}) for u={u}")
        lo = max(2.0 * lo, -cap)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = varphi(link, mid) - u
        if abs(r) <= _INV_TOL:
            return mid
        if r > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    if abs(varphi(link, mid) - u) > _INV_TOL:
        raise LinkError(f"bisection failed to reach tolerance for u={u}")
    return mid


def greedy_price(link: LinkModel, u: float, beta: float) -> float:
    """Revenue-maximizing price J(u, beta) = (u + phi^{-1}(u)) / beta."""
    beta = _check_finite_scalar(beta, "beta")
    if beta <= 0.0:
        raise LinkError(f"beta must be positive, got {beta}")
    u = _check_finite_scalar(u, "u")
    return (u + varphi_inv(link, u)) / beta


def expected_reward(link: LinkModel, u: float, beta: float, p: float) -> float:
    """r(u, beta, p) = p * S(beta*p - u): expected revenue of posting price p."""
    return p * survival(link, beta * p - u)


def instant_regret(link: LinkModel, u_star: float, beta_star: float, p: float) -> float:
    """Expected revenue gap of price p against the greedy price at (u_star, beta_star).

    beta_star only needs to be positive (benchmarks under a valuation-form
    truth can have beta_star > 1).  Tiny negative values from root solve
    tolerances are clipped to zero.
    """
    p_opt = greedy_price(link, u_star, beta_star)
    gap = expected_reward(link, u_star, beta_star, p_opt) - expected_reward(link, u_star, beta_star, p)
    return gap if gap > 0.0 else 0.0


def elasticity(link: LinkModel, u: float, beta: float, p: float) -> float:
    """Price elasticity of expected demand, beta * (s(w)/S(w)) * p with w = beta*p - u.

    Negative for every positive price: demand falls as price rises, and the
    magnitude scales linearly in beta for a fixed margin w.
    """
    w = beta * p - u
    s_w = -density(link, w)
    return beta * (s_w / survival(link, w)) * p


@dataclass(frozen=True)
class PricingConstants:
    """Derived problem constants for a link and elasticity floor c_beta.

    c1, c2 bound the posted-price interval; c_l / c_g / c_e are the curvature,
    gradient, and exp-concavity constants of the per-round log loss over the
    margin range [-1, c2]; c_j bounds the greedy-price sensitivity; c_r the
    reward curvature in price; g_bound the loss-gradient norm; d_diam the
    parameter-set diameter; delta the price-perturbation half-width.
    """

    c_beta: float
    j01: float
    c1: float
    c2: float
    c_l: float
    c_g: float
    c_e: float
    c_j: float
    c_r: float
    g_bound: float
    d_diam: float
    delta: float


@functools.lru_cache(maxsize=64)
def derive_constants(link: LinkModel, c_beta: float, d: int, horizon: int) -> PricingConstants:
    """Compute PricingConstants by dense grid evaluation (step 1e-3 in the margin).

    Requires 0 < c_beta <= 1, d >= 1, horizon >= 2.  delta is the smallest of
    (d * ln(horizon) / horizon)^(1/4), J(0,1)/10, and 1/10.
    """
    if not (0.0 < c_beta <= 1.0):
        raise ValueError(f"c_beta must lie in (0, 1], got {c_beta}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")

    j01 = greedy_price(link, 0.0, 1.0)
    c1 = j01 / 2.0
    c2 = 2.0 * greedy_price(link, 1.0, c_beta)

    step = 1e-3
    w = np.arange(-1.0, c2 + step / 2.0, step)
    f = density(link, w)
    fp = density_deriv(link, w)
    s_w = -f
    surv = survival(link, w)
    fail = 1.0 - surv
    curv_surv = (-fp * surv - f * f) / (surv * surv)          # d^2 log S / dw^2
    curv_fail = (fp * fail - f * f) / (fail * fail)           # d^2 log (1-S) / dw^2
    c_l = -max(curv_surv.max(), curv_fail.max())
    c_g = max(np.abs(s_w / surv).max(), np.abs(s_w / fail).max())
    c_e = c_l / c_g**2
    c_j = max(1.0 / c_beta, c2 / c_beta)

    # Reward curvature |r''(p)| / 2 = |2 s(w) beta + p s'(w) beta^2| / 2, maximized
    # over the feasible box p in [c1, c2], beta in [c_beta, 1], u in [0, 1].
    pg = np.linspace(c1, c2, 160)[:, None, None]
    bg = np.linspace(c_beta, 1.0, 80)[None, :, None]
    ug = np.linspace(0.0, 1.0, 80)[None, None, :]
    wg = bg * pg - ug
    val = np.abs(2.0 * (-density(link, wg)) * bg + pg * (-density_deriv(link, wg)) * bg**2)
    c_r = 0.5 * float(val.max())

    g_bound = c_g * math.sqrt(1.0 + c2**2)
    d_diam = 2.0 * math.sqrt(2.0)
    delta = min((d * math.log(horizon) / horizon) ** 0.25, j01 / 10.0, 0.1)

    return PricingConstants(
        c_beta=float(c_beta),
        j01=float(j01),
        c1=float(c1),
        c2=float(c2),
        c_l=float(c_l),
        c_g=float(c_g),
        c_e=float(c_e),
        c_j=float(c_j),
        c_r=c_r,
        g_bound=float(g_bound),
        d_diam=float(d_diam),
        delta=float(delta),
    )
