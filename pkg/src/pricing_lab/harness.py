"""Experiment harness: seeded trials, analytic regret accounting, aggregation.

A trial replays one environment seed against one policy.  Context and
demand-noise generators depend only on the trial seed, so every policy run on
the same seed sees identical streams (common random numbers); the policy's
own randomness lives in a third, policy-keyed stream.  Regret accumulates
analytically (expected-revenue gap of the posted price), never from realized
purchases.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .environments import ContextStream, EnvSpec, expand_context, oracle_pair, sample_demand
from .likelihood import Observation, ParamPair, nll, nll_grad
from .link import LinkModel, derive_constants, greedy_price, instant_regret
from .policies import PwpPolicy, Rmlp2Policy, make_pwp, make_rmlp2

POLICY_KINDS = (
    "pwp",
    "rmlp2-modified",
    "rmlp2-homoscedastic",
    "rmlp2-valuation",
    "oracle",
    "constant",
)

_RMLP_VARIANT_BY_KIND = {
    "rmlp2-modified": "modified-heteroscedastic",
    "rmlp2-homoscedastic": "original-homoscedastic",
    "rmlp2-valuation": "valuation-heteroscedastic",
}

# Stream tags: context/noise depend only on the trial seed (shared across
# policies); the policy stream is keyed by the policy kind as well.
_CTX_TAG = 11
_NOISE_TAG = 13
_POLICY_TAG = 17
_POLICY_CODES = {kind: i + 1 for i, kind in enumerate(POLICY_KINDS)}

# Slope fits use checkpoints in the last window [T/64, T].
SLOPE_WINDOW_DIVISOR = 64
WALD_Z = 1.96


class HarnessError(RuntimeError):
    """Trial or aggregation failure."""


def checkpoints(horizon: int) -> np.ndarray:
    """64 log-spaced recording rounds from 16 to the horizon, plus the horizon."""
    if horizon < 16:
        return np.array([horizon], dtype=int)
    grid = np.round(np.geomspace(16.0, float(horizon), 64)).astype(int)
    return np.unique(np.append(grid, horizon))


@dataclass
class TrialResult:
    """One (policy, seed) run: cumulative regret at the checkpoint grid."""

    policy_kind: str
    seed: int
    checkpoints: np.ndarray
    cum_regret: np.ndarray
    final_params: ParamPair | None
    diagnostics: dict = field(default_factory=dict)
    nll_gap_max: float | None = None
    trace_rows: list[tuple] | None = None


@dataclass
class RegretCurve:
    """Aggregated mean curve with a Wald band and a log-log slope fit."""

    checkpoints: np.ndarray
    mean: np.ndarray
    half_width: np.ndarray
    slope: float
    slope_stderr: float
    trials: int


class _OraclePolicy:
    """Prices at the true greedy optimum every round (zero regret)."""

    def __init__(self, link: LinkModel, spec: EnvSpec):
        self.link = link
        self.spec = spec

    def price(self, x: np.ndarray) -> float:
        # x is the policy-side context; the oracle needs the raw one, which the
        # harness guarantees by never expanding contexts for this kind.
        u, b = oracle_pair(self.spec, x)
        return greedy_price(self.link, u, b)

    def update(self, obs: Observation) -> None:
        pass


class _ConstantPolicy:
    """Posts one fixed price forever (linear-regret reference)."""

    def __init__(self, price: float):
        self._price = price

    def price(self, x: np.ndarray) -> float:
        return self._price

    def update(self, obs: Observation) -> None:
        pass


def _build_policy(kind: str, spec: EnvSpec, horizon: int, rng: np.random.Generator):
    link = LinkModel(sigma=spec.sigma)
    if kind == "pwp":
        d_pol = spec.policy_dim
        constants = derive_constants(link, spec.c_beta, d_pol, horizon)
        return make_pwp(link, constants, d_pol, rng)
    if kind in _RMLP_VARIANT_BY_KIND:
        constants = derive_constants(link, spec.c_beta, spec.d, horizon)
        return make_rmlp2(link, constants, spec.d, rng, variant=_RMLP_VARIANT_BY_KIND[kind])
    if kind == "oracle":
        return _OraclePolicy(link, spec)
    if kind == "constant":
        constants = derive_constants(link, spec.c_beta, spec.d, horizon)
        return _ConstantPolicy(constants.c2)
    raise HarnessError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")


def run_trial(spec: EnvSpec, policy_kind: str, horizon: int, seed: int, trace: bool = False) -> TrialResult:
    """Play one policy against one seeded stream for `horizon` rounds.

    Per-round flow: context draw, price, demand draw, analytic regret
    accrual, policy update.  With trace=True a per-round Newton diagnostic
    row is kept for PwP and the cumulative log-loss gap to the truth is
    tracked on well-specified margin-model environments.
    """
    if horizon < 1:
        raise HarnessError(f"horizon must be >= 1, got {horizon}")
    if policy_kind not in POLICY_KINDS:
        raise HarnessError(f"unknown policy kind {policy_kind!r}; expected one of {POLICY_KINDS}")
    link = LinkModel(sigma=spec.sigma)
    rng_ctx = np.random.default_rng(np.random.SeedSequence([int(seed), _CTX_TAG]))
    rng_noise = np.random.default_rng(np.random.SeedSequence([int(seed), _NOISE_TAG]))
    rng_pol = np.random.default_rng(
        np.random.SeedSequence([int(seed), _POLICY_TAG, _POLICY_CODES[policy_kind]])
    )
    stream = ContextStream(spec, rng_ctx)
    policy = _build_policy(policy_kind, spec, horizon, rng_pol)
    expand = spec.expansion is not None and policy_kind == "pwp"

    track_gap = (
        trace
        and isinstance(policy, PwpPolicy)
        and spec.demand_kind == "glm"
        and not expand
    )
    truth = ParamPair(spec.theta_star, spec.eta_star) if track_gap else None
    gap = 0.0
    gap_max: float | None = None
    trace_rows: list[tuple] | None = [] if (trace and isinstance(policy, PwpPolicy)) else None

    cps = checkpoints(horizon)
    cum_at_cp = np.empty(cps.shape[0])
    next_i = 0
    cum = 0.0
    for t in range(1, horizon + 1):
        x_env = stream.context(t)
        x_pol = expand_context(x_env, spec.expansion.x0, spec.expansion.powers) if expand else x_env
        p = policy.price(x_pol)
        bought = sample_demand(spec, x_env, p, rng_noise)
        u_star, beta_star = oracle_pair(spec, x_env)
        cum += instant_regret(link, u_star, beta_star, p)
        obs = Observation(x=x_pol, p=p, bought=bought)
        if track_gap:
            gap += nll(link, policy.params, obs) - nll(link, truth, obs)
            gap_max = gap if gap_max is None else max(gap_max, gap)
        grad_norm = (
            float(np.linalg.norm(nll_grad(link, policy.params, obs))) if trace_rows is not None else 0.0
        )
        policy.update(obs)
        if trace_rows is not None:
            state = policy.ons
            lam_min = float(np.linalg.eigvalsh(state.a_matrix)[0])
            trace_rows.append((state.step_count, grad_norm, lam_min, state.last_projection_residual))
        if next_i < cps.shape[0] and t == cps[next_i]:
            cum_at_cp[next_i] = cum
            next_i += 1

    diagnostics: dict = {}
    final_params: ParamPair | None = None
    if isinstance(policy, PwpPolicy):
        diagnostics["clamp_events"] = policy.clamps.events
        diagnostics["projection_failures"] = policy.ons.projection_failures
        final_params = policy.params
    elif isinstance(policy, Rmlp2Policy):
        diagnostics["clamp_events"] = policy.clamps.events
        diagnostics["refits"] = policy.refits
        final_params = policy.current_fit
    return TrialResult(
        policy_kind=policy_kind,
        seed=int(seed),
        checkpoints=cps,
        cum_regret=cum_at_cp,
        final_params=final_params,
        diagnostics=diagnostics,
        nll_gap_max=gap_max,
        trace_rows=trace_rows,
    )


def loglog_slope(rounds: np.ndarray, values: np.ndarray) -> tuple[float, float]:
    """OLS slope and standard error of log2(values) on log2(rounds).

    The fit is restricted to rounds >= max(rounds)/64 and needs at least
    three checkpoints there; non-positive values in the window give (nan, nan).
    """
    rounds = np.asarray(rounds, dtype=float)
    values = np.asarray(values, dtype=float)
    if rounds.shape != values.shape or rounds.ndim != 1:
        raise HarnessError("rounds and values must be 1-d arrays of equal length")
    window = rounds >= rounds.max() / SLOPE_WINDOW_DIVISOR
    if int(window.sum()) < 3:
        raise HarnessError("slope fit needs at least three checkpoints in the window")
    r, v = rounds[window], values[window]
    if np.any(v <= 0.0):
        return float("nan"), float("nan")
    x, y = np.log2(r), np.log2(v)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ y) / sxx
    resid = y - (y.mean() + slope * xc)
    dof = x.shape[0] - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else float("nan")
    return slope, stderr


def wald_band(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-checkpoint mean and 1.96 * sd / sqrt(n) half-width over trials."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[0] < 1:
        raise HarnessError("samples must be a (trials, checkpoints) matrix")
    mean = samples.mean(axis=0)
    n = samples.shape[0]
    if n == 1:
        return mean, np.zeros_like(mean)
    half = WALD_Z * samples.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, half


class ExperimentResult(Mapping):
    """Mapping policy kind -> RegretCurve, with per-trial results attached."""

    def __init__(self, curves: dict[str, RegretCurve], trials: dict[str, list[TrialResult]]):
        self._curves = curves
        self.trials = trials

    def __getitem__(self, key: str) -> RegretCurve:
        return self._curves[key]

    def __iter__(self):
        return iter(self._curves)

    def __len__(self) -> int:
        return len(self._curves)


def _trial_task(args) -> TrialResult:
    spec, kind, horizon, seed, trace = args
    return run_trial(spec, kind, horizon, seed, trace=trace)


def run_experiment(
    spec: EnvSpec,
    policy_kinds,
    horizon: int,
    trials: int,
    base_seed: int,
    jobs: int = 1,
    trace: bool = False,
) -> ExperimentResult:
    """Run `trials` seeded trials per policy kind and aggregate regret curves.

    Trial i uses seed base_seed + i for every policy, so the context and
    demand-noise streams are shared across policies (common random numbers).
    Aggregation order is fixed by (kind, trial index) regardless of how many
    worker processes compute the trials.
    """
    policy_kinds = list(policy_kinds)
    if trials < 1:
        raise HarnessError(f"trials must be >= 1, got {trials}")
    for kind in policy_kinds:
        if kind not in POLICY_KINDS:
            raise HarnessError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
    tasks = [
        (spec, kind, horizon, base_seed + i, trace)
        for kind in policy_kinds
        for i in range(trials)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_task, tasks))
    else:
        results = [_trial_task(t) for t in tasks]

    by_kind: dict[str, list[TrialResult]] = {k: [] for k in policy_kinds}
    for res in results:
        by_kind[res.policy_kind].append(res)
    curves: dict[str, RegretCurve] = {}
    for kind in policy_kinds:
        rs = sorted(by_kind[kind], key=lambda r: r.seed)
        matrix = np.vstack([r.cum_regret for r in rs])
        mean, half = wald_band(matrix)
        cps = rs[0].checkpoints
        slope, stderr = loglog_slope(cps, mean)
        curves[kind] = RegretCurve(
            checkpoints=cps,
            mean=mean,
            half_width=half,
            slope=slope,
            slope_stderr=stderr,
            trials=len(rs),
        )
        by_kind[kind] = rs
    return ExperimentResult(curves, by_kind)
