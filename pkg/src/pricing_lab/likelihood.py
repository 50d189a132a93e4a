"""Per-round negative log-likelihood of Bernoulli purchases, with derivatives.

A hypothesis is a pair (theta, eta), each inside the unit euclidean ball; the
round margin is w = p * x'eta - x'theta and the purchase probability is S(w).
The per-round loss is the negative Bernoulli log-likelihood, whose gradient
and Hessian in the stacked parameter [theta; eta] have closed forms through
the direction vector v = [-x; p*x].  Probabilities are clamped away from 0/1
before taking logs (countable through ClampCounter); the derivative hazard
ratios are computed through erfcx instead, so they stay exact at margins
where the survival itself underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .link import LinkModel, hazard_down, hazard_up, survival

PROB_FLOOR = 1e-12
_NORM_TOL = 1e-9


@dataclass
class ClampCounter:
    """Mutable tally of probability clamp events, for trial diagnostics."""

    events: int = 0


@dataclass(frozen=True)
class ParamPair:
    """Hypothesis (theta, eta) with each block in the closed unit ball."""

    theta: np.ndarray
    eta: np.ndarray

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "eta", eta)
        if theta.ndim != 1 or eta.ndim != 1 or theta.shape != eta.shape:
            raise ValueError(f"theta and eta must be 1-d of equal length, got {theta.shape} and {eta.shape}")
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(eta))):
            raise ValueError("non-finite parameter entries")
        nt, ne = float(np.linalg.norm(theta)), float(np.linalg.norm(eta))
        if nt > 1.0 + _NORM_TOL or ne > 1.0 + _NORM_TOL:
            raise ValueError(f"parameter blocks must lie in the unit ball, got norms {nt:.6g}, {ne:.6g}")

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def vec(self) -> np.ndarray:
        """Stacked view [theta; eta] of length 2d."""
        return np.concatenate([self.theta, self.eta])

    @classmethod
    def from_vec(cls, v: np.ndarray) -> "ParamPair":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.shape[0] % 2 != 0:
            raise ValueError(f"stacked parameter must be 1-d of even length, got shape {v.shape}")
        d = v.shape[0] // 2
        return cls(theta=v[:d].copy(), eta=v[d:].copy())


@dataclass(frozen=True)
class Observation:
    """One pricing round: context x, posted price p > 0, purchase indicator."""

    x: np.ndarray
    p: float
    bought: bool

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "bought", bool(self.bought))
        if x.ndim != 1 or not np.all(np.isfinite(x)):
            raise ValueError("context must be a finite 1-d vector")
        if not (math.isfinite(self.p) and self.p > 0.0):
            raise ValueError(f"price must be finite and positive, got {self.p}")


def _margin(params: ParamPair, obs: Observation) -> float:
    return obs.p * float(obs.x @ params.eta) - float(obs.x @ params.theta)


def _clamped_prob(link: LinkModel, w: float, counter: ClampCounter | None) -> float:
    s = survival(link, w)
    if s < PROB_FLOOR or s > 1.0 - PROB_FLOOR:
        if counter is not None:
            counter.events += 1
        s = min(max(s, PROB_FLOOR), 1.0 - PROB_FLOOR)
    return s


def nll(link: LinkModel, params: ParamPair, obs: Observation, counter: ClampCounter | None = None) -> float:
    """Negative Bernoulli log-likelihood of one observation."""
    s = _clamped_prob(link, _margin(params, obs), counter)
    return -math.log(s) if obs.bought else -math.log(1.0 - s)


def _dloss_dmargin(link: LinkModel, w: float, bought: bool, counter: ClampCounter | None) -> float:
    if counter is not None:
        _clamped_prob(link, w, counter)
    # Stable hazard ratios: exact f/S and f/(1-S) at any margin, no clamp.
    return hazard_up(link, w) if bought else -hazard_down(link, w)


def nll_grad(link: LinkModel, params: ParamPair, obs: Observation, counter: ClampCounter | None = None) -> np.ndarray:
    """Gradient of the per-round loss in the stacked parameter [theta; eta].

    Equals q * [-x; p*x] with q the loss derivative in the margin, so the
    theta and eta blocks are always colinear with the context.
    """
    w = _margin(params, obs)
    q = _dloss_dmargin(link, w, obs.bought, counter)
    g = np.empty(2 * params.d)
    g[: params.d] = -q * obs.x
    g[params.d :] = (q * obs.p) * obs.x
    return g


def _d2loss_dmargin2(link: LinkModel, w: float, bought: bool, counter: ClampCounter | None) -> float:
    if counter is not None:
        _clamped_prob(link, w, counter)
    # With r the branch hazard, the margin curvature is r*(r -+ w/sigma^2);
    # gaussian hazard inequalities keep both expressions positive everywhere.
    ws = w / link.sigma**2
    if bought:
        r = hazard_up(link, w)
        return r * (r - ws)
    r = hazard_down(link, w)
    return r * (r + ws)


def nll_hessian(link: LinkModel, params: ParamPair, obs: Observation, counter: ClampCounter | None = None) -> np.ndarray:
    """Hessian of the per-round loss: a PSD rank-one matrix h * v v' with v = [-x; p*x]."""
    w = _margin(params, obs)
    h = _d2loss_dmargin2(link, w, obs.bought, counter)
    v = np.concatenate([-obs.x, obs.p * obs.x])
    return h * np.outer(v, v)


def cumulative_nll(link: LinkModel, params: ParamPair, observations, counter: ClampCounter | None = None) -> float:
    """Sum of per-round losses over an observation sequence (0.0 when empty)."""
    return sum(nll(link, params, obs, counter) for obs in observations)


# Batched forms used by the epoch MLE; X is (n, d), prices (n,), bought (n,).


def _batch_clamped_prob(link: LinkModel, w: np.ndarray, counter: ClampCounter | None) -> np.ndarray:
    s = survival(link, w)
    oob = (s < PROB_FLOOR) | (s > 1.0 - PROB_FLOOR)
    if counter is not None:
        counter.events += int(oob.sum())
    return np.clip(s, PROB_FLOOR, 1.0 - PROB_FLOOR)


def _batch_bernoulli_terms(
    link: LinkModel, w: np.ndarray, bought: np.ndarray, counter: ClampCounter | None
) -> tuple[float, np.ndarray]:
    """Mean NLL and the per-sample loss derivative q_i in the margin."""
    s = _batch_clamped_prob(link, w, counter)
    loss = float(-np.mean(np.where(bought, np.log(s), np.log1p(-s))))
    q = np.where(bought, hazard_up(link, w), -hazard_down(link, w))
    return loss, q


def glm_mean_nll(
    link: LinkModel,
    theta: np.ndarray,
    eta: np.ndarray,
    X: np.ndarray,
    prices: np.ndarray,
    bought: np.ndarray,
    counter: ClampCounter | None = None,
) -> float:
    w = prices * (X @ eta) - X @ theta
    loss, _ = _batch_bernoulli_terms(link, w, bought, counter)
    return loss


def glm_mean_nll_grad(
    link: LinkModel,
    theta: np.ndarray,
    eta: np.ndarray,
    X: np.ndarray,
    prices: np.ndarray,
    bought: np.ndarray,
    counter: ClampCounter | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL with its gradients in theta and eta under the margin model."""
    w = prices * (X @ eta) - X @ theta
    loss, q = _batch_bernoulli_terms(link, w, bought, counter)
    n = X.shape[0]
    g_theta = -(X.T @ q) / n
    g_eta = X.T @ (q * prices) / n
    return loss, g_theta, g_eta


VALUATION_DENOM_FLOOR = 1e-6


def valuation_mean_nll_grad(
    link: LinkModel,
    theta: np.ndarray,
    eta: np.ndarray,
    X: np.ndarray,
    prices: np.ndarray,
    bought: np.ndarray,
    counter: ClampCounter | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL and gradients under the scaled-noise valuation model.

    Purchase probability S((p - x'theta) / x'eta); the denominator is floored
    at VALUATION_DENOM_FLOOR to keep hypotheses with tiny x'eta evaluable
    (the floor acts as a subgradient choice on the clipped region).
    """
    e = np.maximum(X @ eta, VALUATION_DENOM_FLOOR)
    v = (prices - X @ theta) / e
    loss, q = _batch_bernoulli_terms(link, v, bought, counter)
    n = X.shape[0]
    g_theta = -(X.T @ (q / e)) / n
    g_eta = -(X.T @ (q * v / e)) / n
    return loss, g_theta, g_eta
