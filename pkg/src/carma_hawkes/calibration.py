"""Implied-volatility calibration by RRMSE minimisation.

The parameter vector is ``psi = (mu, b_0..b_q, a_1..a_p, mu_J, sigma_J, sigma)``.
Infeasible points (outside the box, non-stationary, negative kernel) get an
infinite objective so the simplex never settles there.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .black_scholes import ImpliedVolError, implied_vol
from .charfn import NumericalError, RiskNeutralModel
from .fourier import FourierPricer
from .jump_models import NormalJump
from .model_core import CarmaHawkesParams, NonDiagonalizableError, validate
from .quadrature import gauss_laguerre

__all__ = [
    "CalibConfig",
    "CalibrationResult",
    "MarketQuote",
    "Objective",
    "PricingSettings",
    "PsiLayout",
    "QuoteFileError",
    "calibrate",
    "read_quotes",
    "rrmse",
    "rrmse_from_ivs",
]

log = logging.getLogger(__name__)

QUOTE_COLUMNS = ("strike", "maturity", "observable_type", "observable", "option_type",
                 "volume", "open_interest")
MIN_LIQUIDITY = 10


@dataclass(frozen=True)
class MarketQuote:
    strike: float
    maturity: float
    option_type: str = "call"
    price: float | None = None
    iv: float | None = None
    volume: int | None = None
    open_interest: int | None = None

    def __post_init__(self):
        if not (self.strike > 0 and self.maturity > 0):
            raise ValueError("strike and maturity must be positive")
        if self.option_type not in ("call", "put"):
            raise ValueError(f"option_type must be call or put, got {self.option_type!r}")
        if self.price is None and self.iv is None:
            raise ValueError("quote needs a price or an implied volatility")


class QuoteFileError(ValueError):
    pass


def read_quotes(path, min_liquidity: int = MIN_LIQUIDITY) -> list[MarketQuote]:
    """Parse a quote CSV; rows with volume or open interest below ``min_liquidity`` are dropped."""
    quotes = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in QUOTE_COLUMNS[:5] if c not in header]
        if missing:
            raise QuoteFileError(f"{path}: missing columns {missing}")
        unknown = [c for c in header if c not in QUOTE_COLUMNS]
        if unknown:
            raise QuoteFileError(f"{path}: unknown columns {unknown}")
        for row in reader:
            line = reader.line_num
            try:
                obs_type = row["observable_type"].strip()
                if obs_type not in ("price", "iv"):
                    raise ValueError(f"observable_type must be price or iv, got {obs_type!r}")
                obs = float(row["observable"])
                vol = row.get("volume")
                oi = row.get("open_interest")
                vol = int(float(vol)) if vol not in (None, "") else None
                oi = int(float(oi)) if oi not in (None, "") else None
                q = MarketQuote(
                    strike=float(row["strike"]),
                    maturity=float(row["maturity"]),
                    option_type=row["option_type"].strip().lower(),
                    price=obs if obs_type == "price" else None,
                    iv=obs if obs_type == "iv" else None,
                    volume=vol,
                    open_interest=oi,
                )
            except (TypeError, ValueError) as exc:
                raise QuoteFileError(f"{path}:{line}: {exc}") from exc
            if (vol is not None and vol < min_liquidity) or (oi is not None and oi < min_liquidity):
                continue
            quotes.append(q)
    return quotes


@dataclass(frozen=True)
class PsiLayout:
    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or not 0 <= self.q < self.p:
            raise ValueError("need p >= 1 and 0 <= q < p")

    @property
    def size(self) -> int:
        return self.p + self.q + 5

    @property
    def names(self) -> list[str]:
        return (["mu"] + [f"b{i}" for i in range(self.q + 1)] + [f"a{i + 1}" for i in range(self.p)]
                + ["mu_J", "sigma_J", "sigma"])

    def unpack(self, psi):
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.size,):
            raise ValueError(f"psi must have length {self.size}")
        q1 = self.q + 1
        return dict(mu=psi[0], b=psi[1:1 + q1], a=psi[1 + q1:1 + q1 + self.p],
                    mu_J=psi[-3], sigma_J=psi[-2], sigma=psi[-1])

    def pack(self, mu, b, a, mu_J, sigma_J, sigma) -> np.ndarray:
        return np.concatenate([[mu], b, a, [mu_J, sigma_J, sigma]]).astype(float)

    def default_bounds(self) -> list[tuple[float, float]]:
        return ([(0.0, 20.0)] + [(0.0, 10.0)] * (self.q + 1) + [(0.0, 50.0)] * self.p
                + [(-2.0, 2.0), (0.0, 3.0), (0.0, 3.0)])

    @classmethod
    def for_family(cls, family: str) -> "PsiLayout":
        table = {"hawkes": (1, 0), "carma21": (2, 1), "carma32": (3, 2), "carma31": (3, 1)}
        if family in table:
            return cls(*table[family])
        raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True)
class PricingSettings:
    S0: float
    r: float
    m: int = 450
    n_steps: int = 2000
    X0: tuple[float, ...] | None = None
    t0: float = 0.0


def psi_to_model(psi, layout: PsiLayout, settings: PricingSettings) -> RiskNeutralModel:
    d = layout.unpack(psi)
    hawkes = CarmaHawkesParams(d["mu"], tuple(d["a"]), tuple(d["b"]))
    return RiskNeutralModel(hawkes, NormalJump(float(d["mu_J"]), float(d["sigma_J"]), "Q"),
                            float(d["sigma"]), settings.r, settings.S0, settings.X0, settings.t0)


def feasibility(psi, layout: PsiLayout, bounds=None) -> list[str]:
    """Reasons why ``psi`` is infeasible; empty when it is usable."""
    d = layout.unpack(psi)
    problems = []
    if not np.all(np.isfinite(psi)):
        return ["non-finite entry"]
    if bounds is not None:
        for name, v, (lo, hi) in zip(layout.names, psi, bounds):
            if v < lo or v > hi:
                problems.append(f"{name}={v:.6g} outside [{lo}, {hi}]")
    if d["mu"] <= 0:
        problems.append("mu must be positive")
    if np.any(d["a"] <= 0):
        problems.append("a_i must be positive")
    if d["sigma_J"] <= 0 or d["sigma"] <= 0:
        problems.append("sigma_J and sigma must be positive")
    if problems:
        return problems
    try:
        report = validate(CarmaHawkesParams(d["mu"], tuple(d["a"]), tuple(d["b"])))
    except NonDiagonalizableError as exc:
        return [str(exc)]
    return list(report.messages) if not report.passed else []


def rrmse_from_ivs(model_iv, market_iv) -> float:
    model_iv = np.asarray(model_iv, dtype=float)
    market_iv = np.asarray(market_iv, dtype=float)
    return float(np.sqrt(np.mean(((model_iv - market_iv) / market_iv) ** 2)))


@dataclass
class Objective:
    value: float
    model_iv: np.ndarray
    market_iv: np.ndarray
    skipped: list[int]
    problems: list[str] = field(default_factory=list)


class _QuoteSet:
    """Quotes grouped by maturity with market IVs resolved once."""

    def __init__(self, quotes, settings: PricingSettings):
        if not quotes:
            raise ValueError("no quotes")
        self.quotes = list(quotes)
        self.settings = settings
        iv = np.full(len(quotes), np.nan)
        for i, q in enumerate(self.quotes):
            if q.iv is not None:
                iv[i] = q.iv
            else:
                try:
                    iv[i] = implied_vol(q.price, settings.S0, q.strike, settings.r,
                                        q.maturity - settings.t0, q.option_type == "call")
                except ImpliedVolError as exc:
                    log.warning("market quote %d skipped: %s", i, exc)
        self.market_iv = iv
        self.by_maturity: dict[float, list[int]] = {}
        for i, q in enumerate(self.quotes):
            self.by_maturity.setdefault(q.maturity, []).append(i)


def _evaluate(psi, qs: _QuoteSet, layout: PsiLayout, bounds=None) -> Objective:
    problems = feasibility(psi, layout, bounds)
    n = len(qs.quotes)
    model_iv = np.full(n, np.nan)
    if problems:
        return Objective(math.inf, model_iv, qs.market_iv, [], problems)
    s = qs.settings
    try:
        model = psi_to_model(psi, layout, s)
        pricer = FourierPricer(model, gauss_laguerre(s.m), s.n_steps)
        for T, idx in qs.by_maturity.items():
            K = np.array([qs.quotes[i].strike for i in idx])
            calls = pricer.calls(K, T)
            puts = pricer.puts(K, T)
            for j, i in enumerate(idx):
                is_call = qs.quotes[i].option_type == "call"
                price = calls[j] if is_call else puts[j]
                try:
                    model_iv[i] = implied_vol(price, s.S0, K[j], s.r, T - s.t0, is_call)
                except ImpliedVolError:
                    pass
    except (NumericalError, ValueError) as exc:
        return Objective(math.inf, model_iv, qs.market_iv, [], [str(exc)])
    ok = np.isfinite(model_iv) & np.isfinite(qs.market_iv)
    skipped = [int(i) for i in np.flatnonzero(~ok)]
    if not ok.any():
        return Objective(math.inf, model_iv, qs.market_iv, skipped, ["all quotes skipped"])
    return Objective(rrmse_from_ivs(model_iv[ok], qs.market_iv[ok]), model_iv, qs.market_iv, skipped)


def rrmse(psi, quotes, settings: PricingSettings, layout: PsiLayout, bounds=None) -> float:
    """Relative RMSE between model and market implied vols; ``inf`` when ``psi`` is infeasible."""
    return _evaluate(psi, _QuoteSet(quotes, settings), layout, bounds).value


@dataclass
class CalibConfig:
    layout: PsiLayout
    initial: np.ndarray
    bounds: list[tuple[float, float]] | None = None
    max_evals: int = 2000
    restarts: int = 3
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        if self.bounds is None:
            self.bounds = self.layout.default_bounds()
        if self.restarts < 1:
            raise ValueError("need at least one start")


@dataclass
class CalibrationResult:
    psi: np.ndarray
    rrmse: float
    evaluations: int
    converged: bool
    traces: list[list[float]]
    skipped: list[int]
    layout: PsiLayout
    evaluated: list[tuple[np.ndarray, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "psi": dict(zip(self.layout.names, map(float, self.psi))),
            "rrmse": self.rrmse,
            "evaluations": self.evaluations,
            "converged": self.converged,
            "traces": self.traces,
            "skipped_quotes": self.skipped,
        }


def calibrate(quotes, config: CalibConfig, settings: PricingSettings) -> CalibrationResult:
    """Nelder-Mead with restarts inside the parameter box."""
    qs = _QuoteSet(quotes, settings)
    if not np.isfinite(qs.market_iv).any():
        raise ValueError("every market quote was skipped")
    layout, bounds = config.layout, config.bounds
    if feasibility(config.initial, layout, bounds):
        raise ValueError("initial psi is infeasible: " + "; ".join(feasibility(config.initial, layout, bounds)))
    rng = np.random.default_rng(config.seed)
    evaluated: list[tuple[np.ndarray, float]] = []

    def f(x):
        val = _evaluate(x, qs, layout, bounds).value
        evaluated.append((np.array(x), val))
        return val

    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    best_x, best_f = config.initial.copy(), f(config.initial)
    traces: list[list[float]] = []
    converged = False
    for k in range(config.restarts):
        # each start may use whatever budget the earlier ones left over
        budget = config.max_evals - len(evaluated)
        if budget <= config.layout.size + 1:
            break
        if k == 0:
            x0 = best_x
        else:
            # jitter around the incumbent, kept strictly inside the box
            x0 = best_x * np.exp(0.1 * rng.standard_normal(best_x.size))
            x0 = np.clip(x0, lo + 1e-9 * (hi - lo), hi - 1e-9 * (hi - lo))
            if not np.isfinite(f(x0)):
                x0 = best_x
        trace: list[float] = []
        res = optimize.minimize(
            f, x0, method="Nelder-Mead", bounds=bounds,
            callback=lambda intermediate_result: trace.append(float(intermediate_result.fun)),
            options=dict(maxfev=budget, xatol=1e-8, fatol=config.tol, adaptive=True),
        )
        traces.append(trace)
        if res.fun < best_f:
            best_x, best_f = np.array(res.x), float(res.fun)
        converged = converged or bool(res.success)
    if not np.isfinite(best_f):
        raise ValueError("all restarts ended infeasible")
    final = _evaluate(best_x, qs, layout, bounds)
    return CalibrationResult(best_x, best_f, len(evaluated), converged, traces, final.skipped,
                             layout, evaluated)
