"""Named example maps with budgets, regions and set systems that have been validated for them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import OrbitBudget
from .mapmodel import MapSpec
from .wanderingcert import AnnulusSystem, translation_system

DEFAULT_SEEDS = (3 + 0j, 5 + 0j, 4 + 2j)


def wandering_map() -> MapSpec:
    """z exp(sin(z)/z + 2 pi / z): behaves like z + sin z + 2 pi far to the right."""
    return MapSpec.parse(1, "sin(z)/z", "2*pi*z", name="ex2_1")


def hyperbolic_map(lam: float = 2.0) -> MapSpec:
    """lam z exp(e^{-z} + 1/z): an invariant hyperbolic Baker domain for lam > 1."""
    if not lam > 1:
        raise ValueError("lambda must be > 1")
    return MapSpec.parse(1, f"log({float(lam)!r}) + exp(-z)", "z", name="ex3_2")


def parabolic_map() -> MapSpec:
    """z exp((e^{-z} + 1)/z), whose lift is z + e^{-e^z - z} + e^{-z}: doubly parabolic."""
    return MapSpec.parse(1, "(exp(-z) - 1)/z", "2*z", name="ex3_4")


@dataclass(frozen=True)
class Preset:
    name: str
    map: MapSpec
    budget: OrbitBudget
    viewport: tuple
    baker_R: Optional[float] = None
    baker_n_max: int = 100
    seeds: tuple = DEFAULT_SEEDS
    wandering: Optional[AnnulusSystem] = None
    scan_n_max: int = 60
    notes: str = field(default="", compare=False)


def _build() -> dict:
    return {
        "ex2_1": Preset(
            "ex2_1",
            wandering_map(),
            # orbits in the wandering domains drift by about 2 pi per step, so
            # a modest escape radius keeps the budget small
            OrbitBudget(max_iter=2000, r_inf=1e3),
            (0.0, 8 * math.pi, -4.0, 4.0),
            wandering=translation_system(),
        ),
        "ex3_2": Preset(
            "ex3_2",
            hyperbolic_map(2.0),
            OrbitBudget(max_iter=200),
            (-5.0, 15.0, -10.0, 10.0),
            baker_R=10.0,
            baker_n_max=50,
        ),
        "ex3_4": Preset(
            "ex3_4",
            parabolic_map(),
            # Re z grows by about 1 per step in the Baker domain
            OrbitBudget(max_iter=2000, r_inf=1e3),
            (-5.0, 15.0, -10.0, 10.0),
            baker_R=10.0,
            baker_n_max=200,
        ),
    }


PRESETS = _build()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
