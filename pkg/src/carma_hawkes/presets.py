"""Reference parameter sets used throughout the numerical study."""
from __future__ import annotations

import math

from .charfn import RiskNeutralModel
from .jump_models import NormalJump
from .model_core import CarmaHawkesParams

__all__ = ["FAMILIES", "hawkes_params", "reference_model"]

# (a_1..a_p, b_0..b_q)
FAMILIES = {
    "hawkes": ((3.0,), (1.0,)),
    "carma21": ((3.0, 2.0), (1.0, 0.3)),
    "carma31": ((1.3, 0.34 + math.pi**2 / 4, 0.025 + 0.025 * math.pi**2), (0.2, 0.3)),
}

BASE = dict(mu=3.0, mu_J=0.0, sigma_J=0.45, sigma=0.2, r=0.05, S0=100.0)


def hawkes_params(family: str, mu: float = BASE["mu"]) -> CarmaHawkesParams:
    try:
        a, b = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return CarmaHawkesParams(mu, a, b)


def reference_model(family: str, **overrides) -> RiskNeutralModel:
    """Risk-neutral model for one of the reference families with optional overrides."""
    kw = dict(BASE)
    kw.update(overrides)
    return RiskNeutralModel(
        hawkes=hawkes_params(family, kw["mu"]),
        jump_Q=NormalJump(kw["mu_J"], kw["sigma_J"], "Q"),
        sigma=kw["sigma"],
        r=kw["r"],
        S0=kw["S0"],
    )
