"""Black-Scholes prices and implied volatility."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = ["ImpliedVolError", "IvQuote", "bs_price", "bs_vega", "implied_vol", "IV_BRACKET"]

IV_BRACKET = (1e-4, 5.0)


class ImpliedVolError(ValueError):
    pass


@dataclass(frozen=True)
class IvQuote:
    strike: float
    maturity: float
    iv: float
    forward_convention: bool = False

    def __post_init__(self):
        if not self.iv > 0:
            raise ValueError("implied volatility must be positive")


def _d1d2(S, K, r, sigma, tau):
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(S / K) + (r + 0.5 * sigma**2) * tau) / vol
    return d1, d1 - vol


def bs_price(S, K, r, sigma, tau, is_call=True):
    """European call or put; ``sigma = 0`` gives the discounted forward intrinsic value."""
    S, K, r, sigma, tau = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (S, K, r, sigma, tau)))
    disc_K = K * np.exp(-r * tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1, d2 = _d1d2(S, K, r, sigma, tau)
    if is_call:
        out = S * special.ndtr(d1) - disc_K * special.ndtr(d2)
        flat = np.maximum(S - disc_K, 0.0)
    else:
        out = disc_K * special.ndtr(-d2) - S * special.ndtr(-d1)
        flat = np.maximum(disc_K - S, 0.0)
    out = np.where(sigma * np.sqrt(tau) > 0, out, flat)
    return float(out) if out.ndim == 0 else out


def bs_vega(S, K, r, sigma, tau):
    d1, _ = _d1d2(S, K, r, sigma, tau)
    return S * np.sqrt(tau) * np.exp(-0.5 * d1 * d1) / np.sqrt(2 * np.pi)


def implied_vol(price, S, K, r, tau, is_call=True, tol=1e-10, max_iter=200) -> float:
    """Volatility that reproduces ``price``; safeguarded Newton inside ``IV_BRACKET``."""
    disc_K = K * np.exp(-r * tau)
    lower = max(S - disc_K, 0.0) if is_call else max(disc_K - S, 0.0)
    upper = S if is_call else disc_K
    if not np.isfinite(price) or price <= lower:
        raise ImpliedVolError(f"price {price:.6g} below band (intrinsic {lower:.6g})")
    if price >= upper:
        raise ImpliedVolError(f"price {price:.6g} above band ({upper:.6g})")

    def f(s):
        return bs_price(S, K, r, s, tau, is_call) - price

    lo, hi = IV_BRACKET
    flo, fhi = f(lo), f(hi)
    if flo > 0 or fhi < 0:
        raise ImpliedVolError(f"price {price:.6g} not attainable for sigma in {IV_BRACKET}")
    if flo == 0:
        return lo
    target = tol * S
    # Manaster-Koehler starting point
    sigma = min(max(np.sqrt(2 * abs(np.log(S / K) + r * tau) / tau), 0.2), hi)
    for _ in range(max_iter):
        val = f(sigma)
        vega = bs_vega(S, K, r, sigma, tau)
        assert vega >= 0
        # price within budget and the next Newton correction is negligible
        if val == 0 or (abs(val) < target and abs(val) <= 1e-12 * vega):
            return float(sigma)
        if val > 0:
            hi = sigma
        else:
            lo = sigma
        if hi - lo <= 4e-16 * hi:
            break
        cand = sigma - val / vega if vega > 0 else np.nan
        sigma = cand if lo < cand < hi else 0.5 * (lo + hi)
    if abs(f(sigma)) < target:
        return float(sigma)
    raise ImpliedVolError(f"implied vol did not converge after {max_iter} iterations")
