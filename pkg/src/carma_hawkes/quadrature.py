"""Gauss-Laguerre rules with log-scaled weights.

At the orders used for pricing (several hundred nodes) the smallest weights
underflow and ``L_{m+1}(u_k)`` overflows, so the weights are kept in log form.
They come from the Christoffel sum ``1 / sum_j L_j(u_k)^2``, which is the
analytic version of the squared first eigenvector components of the Jacobi
matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = ["QuadRule", "gauss_laguerre", "laguerre_eval", "closed_form_weights", "MAX_ORDER"]

MAX_ORDER = 2000
_RESCALE = 1e100
_LOG_RESCALE = np.log(_RESCALE)


@dataclass(frozen=True)
class QuadRule:
    m: int
    nodes: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray
    log_scaled: np.ndarray  # ln(w_k) + u_k

    def integrate(self, f) -> float:
        """Approximate ``int_0^inf e^{-x} f(x) dx``."""
        return float(np.sum(self.weights * f(self.nodes)))


def laguerre_eval(n: int, x):
    """``L_n(x)`` from ``(k+1) L_{k+1} = (2k+1-x) L_k - k L_{k-1}``."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.zeros_like(x), np.ones_like(x)
    for k in range(n):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
    return float(cur) if cur.ndim == 0 else cur


def _newton_polish(m: int, x: np.ndarray, sweeps: int = 2) -> np.ndarray:
    """Newton steps on ``L_m`` using the ratio ``L_m / L_m'``, which is scale free."""
    for _ in range(sweeps):
        prev, cur = np.zeros_like(x), np.ones_like(x)
        for k in range(m):
            prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
            big = np.abs(cur) > _RESCALE
            prev = np.where(big, prev / _RESCALE, prev)
            cur = np.where(big, cur / _RESCALE, cur)
        # x L_m' = m (L_m - L_{m-1})
        denom = m * (cur - prev)
        step = np.where(denom != 0, x * cur / np.where(denom != 0, denom, 1.0), 0.0)
        x = x - step
    return x


def _log_christoffel(m: int, x: np.ndarray) -> np.ndarray:
    """``-log sum_{j<m} L_j(x)^2`` with running rescaling against overflow."""
    prev, cur = np.zeros_like(x), np.ones_like(x)
    acc = np.ones_like(x)
    log_scale = np.zeros_like(x)
    for k in range(m - 1):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        acc += cur * cur
        big = np.abs(cur) > _RESCALE
        if big.any():
            prev = np.where(big, prev / _RESCALE, prev)
            cur = np.where(big, cur / _RESCALE, cur)
            acc = np.where(big, acc / _RESCALE**2, acc)
            log_scale = log_scale + big * _LOG_RESCALE
    return -(np.log(acc) + 2.0 * log_scale)


@lru_cache(maxsize=16)
def gauss_laguerre(m: int) -> QuadRule:
    """Nodes and weights of the order-``m`` Gauss-Laguerre rule."""
    if int(m) != m or not 1 <= m <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [1, {MAX_ORDER}], got {m}")
    m = int(m)
    diag = 2.0 * np.arange(m) + 1.0
    off = np.arange(1, m, dtype=float)
    nodes = eigh_tridiagonal(diag, off, eigvals_only=True) if m > 1 else diag.copy()
    nodes = np.sort(_newton_polish(m, nodes))
    if not np.all(np.diff(nodes) > 0) or nodes[0] <= 0:
        raise ArithmeticError("Laguerre nodes failed to separate")
    log_w = _log_christoffel(m, nodes)
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    weights = np.exp(log_w)
    weights.setflags(write=False)
    log_scaled = log_w + nodes
    log_scaled.setflags(write=False)
    return QuadRule(m, nodes, weights, log_w, log_scaled)


def closed_form_weights(m: int, nodes=None) -> np.ndarray:
    """``u_k / ((m+1)^2 L_{m+1}(u_k)^2)``; only usable for moderate ``m``."""
    if nodes is None:
        nodes = gauss_laguerre(m).nodes
    nodes = np.asarray(nodes, dtype=float)
    return nodes / ((m + 1) ** 2 * laguerre_eval(m + 1, nodes) ** 2)
