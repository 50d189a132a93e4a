"""Shipped experiment presets (JSON package data).

Four canonical setups: the stochastic and adversarial glm comparisons at
T=2^16, the homoscedastic-baseline comparison at T=2^14, and the misspecified
valuation environment with a polynomial context expansion at T=2^14.
"""

from __future__ import annotations

from importlib import resources


def list_presets() -> tuple[str, ...]:
    root = resources.files(__name__)
    names = sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))
    return tuple(names)


def preset_text(name: str) -> str:
    """Raw JSON text of a shipped preset; KeyError if the name is unknown."""
    path = resources.files(__name__) / f"{name}.json"
    if not path.is_file():
        raise KeyError(f"no preset named {name!r}; shipped: {', '.join(list_presets())}")
    return path.read_text()
