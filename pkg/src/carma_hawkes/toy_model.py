"""Series pricer for the pure-jump model with mean-one jumps.

When ``E^Q[e^J] = 1`` the drift correction vanishes and, conditional on the
number of events, the terminal log-price is a plain sum of jumps.  The call
price becomes a mixture over the counting law, which is recovered from the
joint transform of ``(X_T, N_T)`` by a discrete Fourier inversion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .black_scholes import bs_price
from .charfn import DEFAULT_STEPS, NumericalError, _integrate
from .jump_models import JumpSpec, NormalJump, exp_moment, jump_cdf_sum
from .model_core import CarmaHawkesParams

__all__ = [
    "CountingPmf",
    "PmfTruncationError",
    "SeriesPrice",
    "counting_cf",
    "counting_pgf",
    "counting_pmf",
    "joint_cf_XN",
    "pgf_derivative_pmf",
    "toy_call_price",
    "toy_call_price_with_diffusion",
    "toy_call_series",
]

DEFAULT_EPS = 1e-8
MAX_TERMS = 1 << 14


class PmfTruncationError(ArithmeticError):
    pass


def _log_transform(log_w, params: CarmaHawkesParams, horizon: float, X_t0, u_final, n_steps, method="euler"):
    """``log E[exp(u'X_T) w^{N_T - N_t0}]`` for each entry of ``log_w``."""
    log_w = np.atleast_1d(np.asarray(log_w, dtype=complex))
    zeros = np.zeros(log_w.shape, dtype=complex)
    u0, u = _integrate(zeros, log_w, params, 0.0, zeros, horizon, n_steps, method, u2_final=u_final)
    X = np.zeros(params.p) if X_t0 is None else np.asarray(X_t0, dtype=float)
    return u0 + u @ X


def joint_cf_XN(u, kappa, params: CarmaHawkesParams, t0: float, T: float, X_t0=None,
                n_steps: int = DEFAULT_STEPS):
    """``E[exp(i u'X_T + i kappa (N_T - N_t0)) | F_t0]``, vectorised over ``kappa``."""
    if not T > t0:
        raise ValueError("T must exceed t0")
    u = np.broadcast_to(np.asarray(u, dtype=float), (params.p,))
    k = np.asarray(kappa, dtype=float)
    out = np.exp(_log_transform(1j * k.ravel(), params, T - t0, X_t0, 1j * u, n_steps))
    return complex(out[0]) if k.ndim == 0 else out.reshape(k.shape)


def counting_cf(kappa, params, t0, T, X_t0=None, n_steps=DEFAULT_STEPS):
    return joint_cf_XN(np.zeros(params.p), kappa, params, t0, T, X_t0, n_steps)


def counting_pgf(z, params: CarmaHawkesParams, t0: float, T: float, X_t0=None,
                 n_steps: int = DEFAULT_STEPS):
    """``E[z^{N_T - N_t0} | F_t0]`` for real or complex ``z``."""
    z_arr = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore"):
        log_w = np.log(z_arr.ravel())
    out = np.exp(_log_transform(log_w, params, T - t0, X_t0, None, n_steps))
    return complex(out[0]) if z_arr.ndim == 0 else out.reshape(z_arr.shape)


@dataclass(frozen=True)
class CountingPmf:
    probs: np.ndarray
    n_max: int
    mass_deficit: float

    @property
    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def _grid_size(n_max: int) -> int:
    n = max(256, 4 * n_max)
    return 1 << (n - 1).bit_length()


def counting_pmf(params: CarmaHawkesParams, t0: float, T: float, X_t0=None, n_max: int = 64,
                 grid_size: int | None = None, n_steps: int = DEFAULT_STEPS,
                 eps: float | None = None) -> CountingPmf:
    """``P(N_T - N_t0 = n)`` for ``n = 0..n_max`` by inverting the counting transform.

    With ``eps`` set, a mass deficit above ``eps`` raises :class:`PmfTruncationError`.
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    N = _grid_size(n_max) if grid_size is None else int(grid_size)
    if N & (N - 1) or N < 2 * n_max or N < 1:
        raise ValueError("grid_size must be a power of two of at least 2 * n_max")
    kappa = 2 * np.pi * np.arange(N) / N
    phi = counting_cf(kappa, params, t0, T, X_t0, n_steps)
    probs = np.fft.fft(phi).real[: n_max + 1] / N
    probs = np.where(probs < 0, 0.0, probs)
    deficit = float(1.0 - probs.sum())
    if eps is not None and deficit > eps:
        raise PmfTruncationError(f"mass deficit {deficit:.3e} at n_max = {n_max}; raise n_max")
    return CountingPmf(probs, int(n_max), deficit)


def _pmf_to_eps(params, t0, T, X_t0, eps, n_steps) -> CountingPmf:
    n_max = 64
    while True:
        pmf = counting_pmf(params, t0, T, X_t0, n_max, n_steps=n_steps)
        if pmf.mass_deficit <= eps or n_max >= MAX_TERMS:
            return pmf
        n_max *= 4


def pgf_derivative_pmf(params: CarmaHawkesParams, t0: float, T: float, n: int, X_t0=None,
                       h: float = 0.05, n_steps: int = DEFAULT_STEPS) -> float:
    """``G^{(n)}(0) / n!`` by central differences; only meant for ``n <= 3``."""
    if not 0 <= n <= 3:
        raise ValueError("derivative extraction is only supported for n <= 3")
    # sixth-order central stencils on z = jh, j = -4..4
    stencils = {
        0: [0, 0, 0, 0, 1, 0, 0, 0, 0],
        1: [1 / 280, -4 / 105, 1 / 5, -4 / 5, 0, 4 / 5, -1 / 5, 4 / 105, -1 / 280],
        2: [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560],
        3: [-7 / 240, 3 / 10, -169 / 120, 61 / 30, 0, -61 / 30, 169 / 120, -3 / 10, 7 / 240],
    }
    z = h * np.arange(-4, 5)
    G = counting_pgf(z.astype(complex), params, t0, T, X_t0, n_steps).real
    return float(np.dot(stencils[n], G) / h**n / math.factorial(n))


@dataclass(frozen=True)
class SeriesPrice:
    price: float
    error_bound: float
    n_terms: int


def _check_mean_one(spec: JumpSpec):
    if abs(exp_moment(spec) - 1.0) > 1e-10:
        raise ValueError("series pricer needs E^Q[e^J] = 1")


def _truncate(pmf: CountingPmf, eps: float):
    cum = pmf.cdf()
    hit = np.flatnonzero(cum >= 1.0 - eps)
    n_last = int(hit[0]) if hit.size else pmf.probs.size - 1
    return n_last, max(1.0 - cum[n_last], 0.0)


def toy_call_series(K: float, t0: float, T: float, S0: float, r: float, params: CarmaHawkesParams,
                    spec_Q: JumpSpec, epsilon: float = DEFAULT_EPS, X_t0=None,
                    n_steps: int = DEFAULT_STEPS) -> SeriesPrice:
    _check_mean_one(spec_Q)
    tau = T - t0
    if not tau > 0:
        raise ValueError("T must exceed t0")
    pmf = _pmf_to_eps(params, t0, T, X_t0, epsilon, n_steps)
    n_last, tail = _truncate(pmf, epsilon)
    disc = math.exp(-r * tau)
    d_bar = math.log(K / S0) - r * tau
    price = disc * max(S0 / disc - K, 0.0) * pmf.probs[0]
    for n in range(1, n_last + 1):
        F = jump_cdf_sum(spec_Q, n, d_bar)
        F_bar = jump_cdf_sum(spec_Q, n, d_bar, tilted=True)
        price += (S0 * (1.0 - F_bar) - K * disc * (1.0 - F)) * pmf.probs[n]
    return SeriesPrice(max(price, 0.0), S0 * tail, n_last + 1)


def toy_call_price(K, t0, T, S0, r, params, spec_Q, epsilon=DEFAULT_EPS, X_t0=None,
                   n_steps=DEFAULT_STEPS) -> float:
    """Call price as a mixture over the number of jumps (no diffusion)."""
    return toy_call_series(K, t0, T, S0, r, params, spec_Q, epsilon, X_t0, n_steps).price


def toy_call_price_with_diffusion(K, t0, T, S0, r, params: CarmaHawkesParams, spec_Q: NormalJump,
                                  sigma: float, epsilon: float = DEFAULT_EPS, X_t0=None,
                                  n_steps: int = DEFAULT_STEPS) -> float:
    """Mixture of Black-Scholes calls at ``sigma(n) = sqrt(sigma^2 + n sigma_J^2 / tau)``."""
    if not isinstance(spec_Q, NormalJump):
        raise ValueError("diffusion series needs normal jumps")
    _check_mean_one(spec_Q)
    tau = T - t0
    if not tau > 0:
        raise ValueError("T must exceed t0")
    pmf = _pmf_to_eps(params, t0, T, X_t0, epsilon, n_steps)
    n_last, _ = _truncate(pmf, epsilon)
    n = np.arange(n_last + 1)
    vols = np.sqrt(sigma**2 + n * spec_Q.sigma_J**2 / tau)
    calls = bs_price(S0, K, r, vols, tau, True)
    price = float(np.dot(np.atleast_1d(calls), pmf.probs[: n_last + 1]))
    if not np.isfinite(price):
        raise NumericalError("series price is not finite")
    return price
