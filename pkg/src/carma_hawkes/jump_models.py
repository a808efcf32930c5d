"""Log-price jump laws and the Esscher change of measure.

Two families are supported: a normal law on the log jump ``J`` and a shifted
gamma law ``J = Gamma(alpha, rate=beta) + shift``.  Specs carry a measure tag
so that a risk-neutral law is never tilted a second time.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import optimize, special

__all__ = [
    "EsscherSolution",
    "JumpSpec",
    "NormalJump",
    "ShiftedGammaJump",
    "esscher_transform",
    "exp_moment",
    "jump_cdf_sum",
    "jump_cgf",
    "mean_one_normal",
    "sample_jump_sums",
    "solve_theta_star",
    "with_measure",
]

MEASURES = ("P", "Q")


@dataclass(frozen=True)
class NormalJump:
    mu_J: float
    sigma_J: float
    measure: str = "P"

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}")
        if not math.isfinite(self.mu_J) or not math.isfinite(self.sigma_J):
            raise ValueError("jump parameters must be finite")
        # sigma_J = 0 is kept as a degenerate point-mass jump
        if self.sigma_J < 0:
            raise ValueError(f"sigma_J must be non-negative, got {self.sigma_J}")

    @property
    def upper_domain(self) -> float:
        return math.inf


@dataclass(frozen=True)
class ShiftedGammaJump:
    """``J = G + shift`` with ``G ~ Gamma(shape=alpha, rate=beta)``.

    The default shift ``alpha*ln(1 - 1/beta)`` makes ``E[e^J] = 1``.
    """

    alpha: float
    beta: float
    shift: float | None = None
    measure: str = "P"

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"measure must be one of {MEASURES}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.beta > 1:
            raise ValueError(f"beta must exceed 1, got {self.beta}")
        if self.shift is None:
            object.__setattr__(self, "shift", self.alpha * math.log1p(-1.0 / self.beta))

    @property
    def upper_domain(self) -> float:
        return self.beta


JumpSpec = Union[NormalJump, ShiftedGammaJump]


@dataclass(frozen=True)
class EsscherSolution:
    theta_star: float
    phi: float


def mean_one_normal(sigma_J: float, measure: str = "Q") -> NormalJump:
    """Normal log jump with ``E[e^J] = 1``."""
    return NormalJump(-0.5 * sigma_J**2, sigma_J, measure)


def with_measure(spec: JumpSpec, measure: str) -> JumpSpec:
    """Relabel a spec that is already expressed under ``measure``."""
    return dataclasses.replace(spec, measure=measure)


def jump_cgf(spec: JumpSpec, z):
    """``log E[exp(z J)]`` for real or complex ``z`` (scalar or array)."""
    z_arr = np.asarray(z)
    if isinstance(spec, NormalJump):
        out = spec.mu_J * z_arr + 0.5 * spec.sigma_J**2 * z_arr * z_arr
    elif isinstance(spec, ShiftedGammaJump):
        if np.any(np.real(z_arr) >= spec.beta):
            raise ValueError(f"argument outside mgf domain: Re(z) must be < beta = {spec.beta}")
        out = -spec.alpha * np.log1p(-z_arr / spec.beta) + z_arr * spec.shift
    else:
        raise TypeError(f"unknown jump spec {type(spec).__name__}")
    return out[()] if out.ndim == 0 else out


def exp_moment(spec: JumpSpec) -> float:
    """``E[e^J]``."""
    return float(np.exp(jump_cgf(spec, 1.0)))


def _martingale_gap(spec: JumpSpec, target: float):
    return lambda th: float(jump_cgf(spec, th + 1.0) - jump_cgf(spec, th)) - target


def _bracket(g, upper: float):
    """Expand ``[-1, 1]`` geometrically inside ``theta < upper`` until ``g`` changes sign."""
    lo, hi = -1.0, min(1.0, 0.5 * upper)
    for _ in range(200):
        glo, ghi = g(lo), g(hi)
        if glo <= 0.0 <= ghi:
            return lo, hi
        if glo > 0:
            lo *= 2.0
        if ghi < 0:
            hi = 2.0 * hi if math.isinf(upper) else 0.5 * (hi + upper)
    raise ValueError("no sign change of the martingale condition inside the mgf domain")


def solve_theta_star(spec: JumpSpec, phi: float, method: str = "auto") -> EsscherSolution:
    """Tilt parameter solving ``1 - phi = E[e^{(theta+1)J}] / E[e^{theta J}]``.

    ``method='closed'`` is only available for normal jumps, ``'root'`` always
    uses the bracketed root finder and ``'auto'`` picks the closed form when
    one exists.
    """
    if spec.measure != "P":
        raise ValueError("Esscher tilt expects a P-measure spec")
    if not phi < 1:
        raise ValueError(f"phi must be < 1, got {phi}")
    target = math.log1p(-phi)
    if method not in ("auto", "closed", "root"):
        raise ValueError(f"unknown method {method!r}")
    if isinstance(spec, NormalJump) and method in ("auto", "closed"):
        if spec.sigma_J == 0:
            raise ValueError("sigma_J = 0 admits no Esscher tilt")
        theta = (target - spec.mu_J) / spec.sigma_J**2 - 0.5
        return EsscherSolution(theta, float(phi))
    if method == "closed":
        raise ValueError("closed form only exists for normal jumps")

    if isinstance(spec, ShiftedGammaJump) and target <= spec.shift:
        # the tilted mean ratio decreases to e^shift as theta -> -inf
        raise ValueError(f"no tilt exists: need ln(1 - phi) > shift = {spec.shift:.6g}")
    upper = spec.upper_domain - 1.0
    g = _martingale_gap(spec, target)
    lo, hi = _bracket(g, upper)
    theta = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(g(theta)) > 1e-12:
        raise ValueError(f"theta* residual {g(theta):.3e} above tolerance")
    return EsscherSolution(float(theta), float(phi))


def esscher_transform(spec: JumpSpec, theta) -> JumpSpec:
    """Exponentially tilted law ``f(j) e^{theta j} / E[e^{theta J}]`` tagged Q."""
    if spec.measure != "P":
        raise ValueError("spec is already risk-neutral; refusing to tilt twice")
    if isinstance(theta, EsscherSolution):
        theta = theta.theta_star
    if isinstance(spec, NormalJump):
        return NormalJump(spec.mu_J + theta * spec.sigma_J**2, spec.sigma_J, "Q")
    new_rate = spec.beta - theta
    if new_rate <= 1:
        raise ValueError(f"tilted rate {new_rate:.6g} <= 1: E^Q[e^J] diverges")
    return ShiftedGammaJump(spec.alpha, new_rate, spec.shift, "Q")


def jump_cdf_sum(spec: JumpSpec, n: int, x, tilted: bool = False):
    """CDF of ``Y_n = J_1 + ... + J_n`` at ``x``.

    With ``tilted=True`` this is the CDF under the density ``e^y f_{Y_n}(y) / E[e^J]^n``.
    For a mean-one law this is exactly ``int_{-inf}^x e^y dF_{Y_n}(y)``.
    """
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer; n = 0 is a point mass at 0")
    x = np.asarray(x, dtype=float)
    if isinstance(spec, NormalJump):
        mean = n * spec.mu_J + (n * spec.sigma_J**2 if tilted else 0.0)
        sd = spec.sigma_J * math.sqrt(n)
        if sd == 0:
            out = (x >= mean).astype(float)
        else:
            out = special.ndtr((x - mean) / sd)
    else:
        rate = spec.beta - 1.0 if tilted else spec.beta
        g = np.maximum(x - n * spec.shift, 0.0)
        out = special.gammainc(n * spec.alpha, rate * g)
    return float(out) if out.ndim == 0 else out


def sample_jump_sums(spec: JumpSpec, counts, rng: np.random.Generator) -> np.ndarray:
    """Draw ``J_1 + ... + J_n`` for each entry of ``counts`` (zero where ``n = 0``)."""
    counts = np.asarray(counts)
    out = np.zeros(counts.shape)
    pos = counts > 0
    n = counts[pos].astype(float)
    if isinstance(spec, NormalJump):
        out[pos] = n * spec.mu_J + spec.sigma_J * np.sqrt(n) * rng.standard_normal(n.size)
    else:
        out[pos] = rng.gamma(spec.alpha * n, 1.0 / spec.beta) + n * spec.shift
    return out
