"""Synthetic market environments: ground truth, context streams, demand draws.

An EnvSpec materializes everything random about an environment at build time
(ground-truth parameters, context covariance) so that experiment snapshots
can be re-run bit-identically.  Context and demand-noise randomness is drawn
from generators owned by the harness, one draw per round, which keeps the
streams aligned across policies running on the same trial seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .link import LinkModel, survival

CONTEXT_KINDS = ("stochastic-gaussian", "adversarial-triangular")
DEMAND_KINDS = ("glm", "valuation", "misspecified-valuation")

GROUND_TRUTH_NORM = 0.9
REJECTION_BUDGET = 1000


class EnvError(ValueError):
    """Invalid environment specification or exhausted rejection budget."""


@dataclass(frozen=True)
class Expansion:
    """Polynomial context expansion around x0 with elementwise integer powers."""

    x0: np.ndarray
    powers: tuple[int, ...]

    def __post_init__(self) -> None:
        x0 = np.asarray(self.x0, dtype=float)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "powers", tuple(int(a) for a in self.powers))
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise EnvError("expansion center must be a finite 1-d vector")
        if len(self.powers) == 0:
            raise EnvError("expansion needs at least one power")


@dataclass(frozen=True)
class EnvSpec:
    """Materialized environment: truth, link scale, context and demand kinds."""

    d: int
    sigma: float
    c_beta: float
    context_kind: str
    demand_kind: str
    theta_star: np.ndarray
    eta_star: np.ndarray
    mu_x: np.ndarray | None = None
    cov_x: np.ndarray | None = None
    expansion: Expansion | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta_star", np.asarray(self.theta_star, dtype=float))
        object.__setattr__(self, "eta_star", np.asarray(self.eta_star, dtype=float))
        if self.mu_x is not None:
            object.__setattr__(self, "mu_x", np.asarray(self.mu_x, dtype=float))
        if self.cov_x is not None:
            object.__setattr__(self, "cov_x", np.asarray(self.cov_x, dtype=float))
        if self.context_kind not in CONTEXT_KINDS:
            raise EnvError(f"unknown context kind {self.context_kind!r}")
        if self.demand_kind not in DEMAND_KINDS:
            raise EnvError(f"unknown demand kind {self.demand_kind!r}")
        if self.context_kind == "adversarial-triangular" and self.d != 2:
            raise EnvError("the adversarial context stream is defined for d = 2")
        if self.theta_star.shape != (self.d,) or self.eta_star.shape != (self.d,):
            raise EnvError("ground-truth vectors must have shape (d,)")

    @property
    def policy_dim(self) -> int:
        """Dimension of the context the learning policy sees (post expansion)."""
        if self.expansion is None:
            return self.d
        return (len(self.expansion.powers) + 1) * self.d


def gen_ground_truth(d: int, c_beta: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw (theta*, eta*) with positive entries and block norms 0.9.

    Entries are uniform on [0.3, 1.0] before scaling.  eta* is resampled until
    every scaled entry is at least c_beta, so each basis context e_i satisfies
    e_i' eta* >= c_beta; the rejection budget is 1000 attempts.
    """
    if d < 1:
        raise EnvError(f"d must be >= 1, got {d}")
    if not (0.0 < c_beta <= 0.3 + 1e-12):
        raise EnvError(f"the default scheme requires 0 < c_beta <= 0.3, got {c_beta}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x67]))
    raw = rng.uniform(0.3, 1.0, size=d)
    theta = GROUND_TRUTH_NORM * raw / np.linalg.norm(raw)
    for _ in range(REJECTION_BUDGET):
        raw = rng.uniform(0.3, 1.0, size=d)
        eta = GROUND_TRUTH_NORM * raw / np.linalg.norm(raw)
        if eta.min() >= c_beta:
            return theta, eta
    raise EnvError(f"could not draw eta* with min entry >= {c_beta} in {REJECTION_BUDGET} attempts")


def make_env(
    d: int,
    sigma: float,
    c_beta: float,
    context_kind: str,
    demand_kind: str,
    seed: int,
    expansion: Expansion | None = None,
) -> EnvSpec:
    """Materialize an EnvSpec from a seed (truth, context moments)."""
    theta_star, eta_star = gen_ground_truth(d, c_beta, seed)
    mu_x = cov_x = None
    if context_kind == "stochastic-gaussian":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5D]))
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        lam = rng.uniform(0.5, 2.0, size=d)
        cov_x = (q * lam) @ q.T
        mu_x = np.full(d, 10.0)
    return EnvSpec(
        d=d,
        sigma=sigma,
        c_beta=c_beta,
        context_kind=context_kind,
        demand_kind=demand_kind,
        theta_star=theta_star,
        eta_star=eta_star,
        mu_x=mu_x,
        cov_x=cov_x,
        expansion=expansion,
        seed=int(seed),
    )


def is_triangular(t: int) -> bool:
    """True when t = k(k+1)/2 for some positive integer k."""
    if t < 1:
        return False
    k = int((math.isqrt(8 * t + 1) - 1) // 2)
    return k * (k + 1) // 2 == t


def adversarial_context(d: int, t: int) -> np.ndarray:
    """Basis vector e1 exactly at triangular rounds, e2 otherwise (d = 2)."""
    if d != 2:
        raise EnvError("the adversarial context stream is defined for d = 2")
    if t < 1:
        raise EnvError(f"rounds are 1-based, got t={t}")
    return np.array([1.0, 0.0]) if is_triangular(t) else np.array([0.0, 1.0])


class ContextStream:
    """Per-trial context source; one stochastic draw (or none) per round."""

    def __init__(self, spec: EnvSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self._chol = None
        if spec.context_kind == "stochastic-gaussian":
            self._chol = np.linalg.cholesky(spec.cov_x)

    def context(self, t: int) -> np.ndarray:
        if self.spec.context_kind == "adversarial-triangular":
            return adversarial_context(self.spec.d, t)
        z = self.spec.mu_x + self._chol @ self.rng.standard_normal(self.spec.d)
        nrm = float(np.linalg.norm(z))
        if nrm == 0.0:
            # Measure-zero draw; keep the stream length fixed.
            z = np.ones(self.spec.d)
            nrm = math.sqrt(self.spec.d)
        return z / nrm


def stochastic_context(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    """One normalized draw z/||z|| of z ~ N(mu_x, cov_x)."""
    if spec.context_kind != "stochastic-gaussian":
        raise EnvError("stochastic_context requires a stochastic-gaussian spec")
    return ContextStream(spec, rng).context(1)


def sample_demand(spec: EnvSpec, x: np.ndarray, p: float, rng: np.random.Generator) -> bool:
    """Draw the purchase indicator at price p; exactly one rng draw per call.

    glm: Bernoulli(S(p * x'eta* - x'theta*)).
    valuation: buy iff p <= (x'theta* + N) / x'eta*, N ~ N(0, sigma^2).
    misspecified-valuation: buy iff p <= x'theta* + x'eta* * N.
    """
    link = LinkModel(sigma=spec.sigma)
    a = float(x @ spec.theta_star)
    e = float(x @ spec.eta_star)
    if spec.demand_kind == "glm":
        return bool(rng.random() < survival(link, e * p - a))
    if e <= 0.0:
        raise EnvError(f"valuation demand needs x'eta* > 0, got {e}")
    noise = spec.sigma * rng.standard_normal()
    if spec.demand_kind == "valuation":
        return bool(p <= (a + noise) / e)
    return bool(p <= a + e * noise)


def oracle_pair(spec: EnvSpec, x: np.ndarray) -> tuple[float, float]:
    """(u*, beta*) such that the true purchase probability is S(beta* p - u*).

    For the valuation-form truth y = x'theta* + x'eta* * N this is
    (a/e, 1/e); for the margin-form kinds it is (a, e) directly.
    """
    a = float(x @ spec.theta_star)
    e = float(x @ spec.eta_star)
    if spec.demand_kind == "misspecified-valuation":
        return a / e, 1.0 / e
    return a, e


def expand_context(x: np.ndarray, x0: np.ndarray, powers) -> np.ndarray:
    """Stack [x, (x-x0)^a1, ..., (x-x0)^am] and rescale into the unit ball.

    Powers apply elementwise; a zero power contributes an all-ones block.  The
    stack is scaled by 1/sqrt(m+1) and then, if still outside the unit ball,
    normalized onto it so downstream norm preconditions hold.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != x.shape:
        raise EnvError(f"center shape {x0.shape} does not match context {x.shape}")
    diff = x - x0
    blocks = [x]
    for a in powers:
        a = int(a)
        if a < 0 and np.any(diff == 0.0):
            raise EnvError(f"negative power {a} with a zero coordinate in x - x0")
        blocks.append(diff**a)
    out = np.concatenate(blocks) / math.sqrt(len(blocks))
    nrm = float(np.linalg.norm(out))
    if nrm > 1.0:
        out = out / nrm
    return out


def with_expansion(spec: EnvSpec, x0, powers) -> EnvSpec:
    """Copy of spec with an Expansion attached."""
    return replace(spec, expansion=Expansion(x0=np.asarray(x0, dtype=float), powers=tuple(powers)))
