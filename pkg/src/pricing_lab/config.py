"""Experiment configuration: strict JSON with line-referenced diagnostics.

The schema is flat and closed: unknown keys are rejected, every error message
carries `path:line` pointing at the offending key, and a parsed config
serializes back to the exact same document (round-trip identity).  A config
may carry a `materialized` block (the ground truth and context moments a run
actually used); reloading such a snapshot replays the run bit-for-bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .environments import CONTEXT_KINDS, DEMAND_KINDS, EnvSpec, Expansion, make_env
from .harness import POLICY_KINDS


class ConfigError(ValueError):
    """Invalid experiment configuration (message carries file:line context)."""


_REQUIRED_KEYS = (
    "name",
    "T",
    "d",
    "sigma",
    "c_beta",
    "trials",
    "base_seed",
    "context_kind",
    "demand_kind",
    "policies",
)
_OPTIONAL_KEYS = ("expansion", "output_dir", "materialized")
_EXPANSION_KEYS = ("x0", "a")
_MATERIALIZED_KEYS = ("theta_star", "eta_star", "mu_x", "cov_x")

DEFAULT_OUTPUT_DIR = "runs"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: environment recipe, policy list, trial plan."""

    name: str
    horizon: int
    d: int
    sigma: float
    c_beta: float
    trials: int
    base_seed: int
    context_kind: str
    demand_kind: str
    policies: tuple[str, ...]
    expansion_x0: tuple[float, ...] | None = None
    expansion_powers: tuple[int, ...] | None = None
    output_dir: str = DEFAULT_OUTPUT_DIR
    # Ground truth and context moments as plain JSON-shaped lists; None until
    # a run snapshots them.
    materialized: dict | None = None

    def with_base_seed(self, base_seed: int) -> "ExperimentConfig":
        return replace(self, base_seed=int(base_seed))


def _key_line(text: str, key: str) -> str:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return str(i)
    return "?"


def _fail(path: str, text: str, key: str, message: str) -> None:
    raise ConfigError(f"{path}:{_key_line(text, key)}: {message}")


def _want_int(path: str, text: str, raw: dict, key: str, minimum: int) -> int:
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(path, text, key, f"{key} must be an integer, got {v!r}")
    if v < minimum:
        _fail(path, text, key, f"{key} must be >= {minimum}, got {v}")
    return int(v)


def _want_real(path: str, text: str, raw: dict, key: str, low: float, high: float) -> float:
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, text, key, f"{key} must be a number, got {v!r}")
    v = float(v)
    if not (low < v <= high):
        _fail(path, text, key, f"{key} must lie in ({low}, {high}], got {v}")
    return v


def _numeric_vector(value, n: int | None = None) -> tuple[float, ...] | None:
    if not isinstance(value, list) or not all(
        isinstance(e, (int, float)) and not isinstance(e, bool) for e in value
    ):
        return None
    if n is not None and len(value) != n:
        return None
    return tuple(float(e) for e in value)


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    """Parse and validate a config document; raises ConfigError with file:line."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")

    allowed = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
    for key in raw:
        if key not in allowed:
            _fail(path, text, key, f"unknown key {key!r}")
    for key in _REQUIRED_KEYS:
        if key not in raw:
            raise ConfigError(f"{path}:1: missing required key {key!r}")

    if not isinstance(raw["name"], str) or not raw["name"]:
        _fail(path, text, "name", "name must be a non-empty string")
    name = raw["name"]
    horizon = _want_int(path, text, raw, "T", 1)
    d = _want_int(path, text, raw, "d", 1)
    sigma = _want_real(path, text, raw, "sigma", 0.0, 100.0)
    c_beta = _want_real(path, text, raw, "c_beta", 0.0, 1.0)
    trials = _want_int(path, text, raw, "trials", 2)
    base_seed = _want_int(path, text, raw, "base_seed", 0)

    context_kind = raw["context_kind"]
    if context_kind not in CONTEXT_KINDS:
        _fail(path, text, "context_kind", f"context_kind must be one of {CONTEXT_KINDS}, got {context_kind!r}")
    demand_kind = raw["demand_kind"]
    if demand_kind not in DEMAND_KINDS:
        _fail(path, text, "demand_kind", f"demand_kind must be one of {DEMAND_KINDS}, got {demand_kind!r}")
    if context_kind == "adversarial-triangular" and d != 2:
        _fail(path, text, "context_kind", "the adversarial context stream requires d = 2")

    pol = raw["policies"]
    if not isinstance(pol, list) or not pol or not all(isinstance(k, str) for k in pol):
        _fail(path, text, "policies", "policies must be a non-empty list of policy names")
    for k in pol:
        if k not in POLICY_KINDS:
            _fail(path, text, "policies", f"unknown policy {k!r}; expected one of {POLICY_KINDS}")
    policies = tuple(pol)

    expansion_x0 = expansion_powers = None
    if "expansion" in raw:
        exp = raw["expansion"]
        if not isinstance(exp, dict) or set(exp) != set(_EXPANSION_KEYS):
            _fail(path, text, "expansion", f"expansion must be an object with keys {_EXPANSION_KEYS}")
        expansion_x0 = _numeric_vector(exp["x0"], d)
        if expansion_x0 is None:
            _fail(path, text, "x0", f"expansion.x0 must be a list of {d} numbers")
        a = exp["a"]
        if (
            not isinstance(a, list)
            or not a
            or not all(isinstance(e, int) and not isinstance(e, bool) for e in a)
        ):
            _fail(path, text, "a", "expansion.a must be a non-empty list of integers")
        expansion_powers = tuple(int(e) for e in a)

    output_dir = raw.get("output_dir", DEFAULT_OUTPUT_DIR)
    if "output_dir" in raw and (not isinstance(output_dir, str) or not output_dir):
        _fail(path, text, "output_dir", "output_dir must be a non-empty string")

    materialized = None
    if "materialized" in raw:
        mat = raw["materialized"]
        if not isinstance(mat, dict) or set(mat) != set(_MATERIALIZED_KEYS):
            _fail(path, text, "materialized", f"materialized must be an object with keys {_MATERIALIZED_KEYS}")
        for key in ("theta_star", "eta_star"):
            if _numeric_vector(mat[key], d) is None:
                _fail(path, text, key, f"materialized.{key} must be a list of {d} numbers")
        stochastic = context_kind == "stochastic-gaussian"
        if stochastic:
            if _numeric_vector(mat["mu_x"], d) is None:
                _fail(path, text, "mu_x", f"materialized.mu_x must be a list of {d} numbers")
            cov = mat["cov_x"]
            if (
                not isinstance(cov, list)
                or len(cov) != d
                or any(_numeric_vector(row, d) is None for row in cov)
            ):
                _fail(path, text, "cov_x", f"materialized.cov_x must be a {d}x{d} matrix")
        elif mat["mu_x"] is not None or mat["cov_x"] is not None:
            _fail(path, text, "mu_x", "materialized moments must be null for adversarial contexts")
        materialized = mat

    return ExperimentConfig(
        name=name,
        horizon=horizon,
        d=d,
        sigma=sigma,
        c_beta=c_beta,
        trials=trials,
        base_seed=base_seed,
        context_kind=context_kind,
        demand_kind=demand_kind,
        policies=policies,
        expansion_x0=expansion_x0,
        expansion_powers=expansion_powers,
        output_dir=output_dir,
        materialized=materialized,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from exc
    return parse_config(text, str(p))


def config_to_dict(config: ExperimentConfig) -> dict:
    """Canonical JSON-shaped form; the exact inverse of parse_config."""
    doc: dict = {
        "name": config.name,
        "T": config.horizon,
        "d": config.d,
        "sigma": config.sigma,
        "c_beta": config.c_beta,
        "trials": config.trials,
        "base_seed": config.base_seed,
        "context_kind": config.context_kind,
        "demand_kind": config.demand_kind,
        "policies": list(config.policies),
    }
    if config.expansion_x0 is not None:
        doc["expansion"] = {"x0": list(config.expansion_x0), "a": list(config.expansion_powers)}
    doc["output_dir"] = config.output_dir
    if config.materialized is not None:
        doc["materialized"] = config.materialized
    return doc


def serialize_config(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"


def build_env(config: ExperimentConfig) -> EnvSpec:
    """Materialize the environment, honoring a snapshot's recorded truth."""
    expansion = None
    if config.expansion_x0 is not None:
        expansion = Expansion(np.array(config.expansion_x0), config.expansion_powers)
    if config.materialized is None:
        return make_env(
            config.d,
            config.sigma,
            config.c_beta,
            config.context_kind,
            config.demand_kind,
            seed=config.base_seed,
            expansion=expansion,
        )
    mat = config.materialized
    return EnvSpec(
        d=config.d,
        sigma=config.sigma,
        c_beta=config.c_beta,
        context_kind=config.context_kind,
        demand_kind=config.demand_kind,
        theta_star=np.array(mat["theta_star"], dtype=float),
        eta_star=np.array(mat["eta_star"], dtype=float),
        mu_x=None if mat["mu_x"] is None else np.array(mat["mu_x"], dtype=float),
        cov_x=None if mat["cov_x"] is None else np.array(mat["cov_x"], dtype=float),
        expansion=expansion,
        seed=config.base_seed,
    )


def snapshot_config(config: ExperimentConfig, env: EnvSpec) -> ExperimentConfig:
    """Attach the environment's materialized truth for exact replay."""
    mat = {
        "theta_star": env.theta_star.tolist(),
        "eta_star": env.eta_star.tolist(),
        "mu_x": None if env.mu_x is None else env.mu_x.tolist(),
        "cov_x": None if env.cov_x is None else env.cov_x.tolist(),
    }
    return replace(config, materialized=mat)
