"""CARMA(p,q)-Hawkes state machinery.

The intensity of the counting process is ``lambda_t = mu + b' X_t`` where the
state ``X`` follows ``dX = A X dt + e dN``.  ``A`` is the companion matrix of
the autoregressive polynomial, ``b`` holds the moving-average coefficients and
``e = (0, ..., 0, 1)``.  Everything downstream (characteristic functions,
thinning bound, compensator) works in the eigenbasis of ``A``, so the
decomposition is computed once per parameter set and cached.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "CarmaHawkesParams",
    "CompanionSystem",
    "NonDiagonalizableError",
    "ValidationReport",
    "add_jump",
    "build_companion",
    "eigendecompose",
    "intensity",
    "kernel",
    "pad_b",
    "polynomial_roots",
    "propagate_state",
    "validate",
]

EIGEN_GAP_RTOL = 1e-7
KERNEL_GRID_POINTS = 4096
KERNEL_NEG_TOL = 1e-12


class NonDiagonalizableError(ValueError):
    """Companion matrix has (numerically) repeated eigenvalues."""


def build_companion(a: Sequence[float]) -> np.ndarray:
    """Companion matrix with last row ``(-a_p, ..., -a_1)``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size == 0:
        raise ValueError("autoregressive coefficient vector must be non-empty")
    p = a.size
    A = np.zeros((p, p))
    A[:-1, 1:] = np.eye(p - 1)
    A[-1, :] = -a[::-1]
    return A


def pad_b(b_raw: Sequence[float], p: int) -> np.ndarray:
    """Zero-pad ``(b_0, ..., b_q)`` to length ``p``."""
    b_raw = np.asarray(b_raw, dtype=float)
    if b_raw.size > p:
        raise ValueError(f"q + 1 = {b_raw.size} exceeds p = {p}")
    b = np.zeros(p)
    b[: b_raw.size] = b_raw
    return b


def polynomial_roots(coeffs: Sequence[float], tol: float = 1e-15, max_iter: int = 500) -> np.ndarray:
    """Roots of the monic polynomial ``z^p + c_1 z^{p-1} + ... + c_p``.

    Aberth-Ehrlich simultaneous iteration followed by two Newton polishing
    sweeps.  ``coeffs`` excludes the leading one.
    """
    c = np.concatenate(([1.0], np.asarray(coeffs, dtype=float)))
    p = c.size - 1
    if p == 1:
        return np.array([-c[1] + 0j])
    dc = c[:-1] * np.arange(p, 0, -1)

    # Fujiwara-type bound for the initial circle
    radius = 2.0 * max(abs(c[k]) ** (1.0 / k) for k in range(1, p + 1))
    radius = max(radius, 1e-3)
    angles = 2 * np.pi * np.arange(p) / p + 0.4
    z = radius * np.exp(1j * angles)

    for _ in range(max_iter):
        pv = np.polyval(c, z)
        dpv = np.polyval(dc, z)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = pv / dpv
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            s = np.sum(1.0 / diff, axis=1)
            step = w / (1.0 - w * s)
        step = np.where(np.isfinite(step), step, 0.0)
        z = z - step
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(z), 1.0)):
            break

    for _ in range(2):
        dpv = np.polyval(dc, z)
        ok = dpv != 0
        z[ok] = z[ok] - np.polyval(c, z[ok]) / dpv[ok]

    scale = max(np.max(np.abs(z)), 1.0)
    z = np.where(np.abs(z.imag) < 1e-13 * scale, z.real + 0j, z)
    order = np.lexsort((z.imag, -z.real))
    return z[order]


def eigendecompose(A: np.ndarray, gap_rtol: float = EIGEN_GAP_RTOL):
    """Eigenvalues, Vandermonde eigenvector matrix and its inverse.

    Column ``j`` of ``S`` is ``(1, l_j, l_j^2, ..., l_j^{p-1})``.
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    # last row is (-a_p, ..., -a_1)
    a = -A[-1, ::-1]
    eig = polynomial_roots(a)
    if p > 1:
        d = np.abs(eig[:, None] - eig[None, :])
        d[np.diag_indices(p)] = np.inf
        gap = d.min()
        if gap < gap_rtol * max(np.max(np.abs(eig)), 1e-300) or gap == 0.0:
            raise NonDiagonalizableError(
                f"non-diagonalizable within tolerance: min eigenvalue gap {gap:.3e}"
            )
    S = np.vander(eig, p, increasing=True).T
    S_inv = np.linalg.solve(S, np.eye(p, dtype=complex))
    return eig, S, S_inv


@dataclass(frozen=True)
class CompanionSystem:
    """Companion matrix, padded ``b`` and the eigendecomposition of ``A``."""

    A: np.ndarray
    b: np.ndarray
    e: np.ndarray
    eigenvalues: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray

    @classmethod
    def from_coefficients(cls, a: Sequence[float], b_raw: Sequence[float]) -> "CompanionSystem":
        A = build_companion(a)
        p = A.shape[0]
        b = pad_b(b_raw, p)
        e = np.zeros(p)
        e[-1] = 1.0
        eig, S, S_inv = eigendecompose(A)
        return cls(A=A, b=b, e=e, eigenvalues=eig, S=S, S_inv=S_inv)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    @cached_property
    def bS(self) -> np.ndarray:
        """Row vector ``b' S``."""
        return self.b @ self.S

    @cached_property
    def Sinv_e(self) -> np.ndarray:
        return self.S_inv @ self.e

    @cached_property
    def decay(self) -> float:
        """Largest real part among the eigenvalues."""
        return float(np.max(self.eigenvalues.real))

    def expm(self, dt: float) -> np.ndarray:
        """``exp(A dt)`` through the eigendecomposition."""
        M = (self.S * np.exp(self.eigenvalues * dt)) @ self.S_inv
        return M.real

    def to_eigen(self, X: np.ndarray) -> np.ndarray:
        """Eigen coordinates ``S^{-1} X`` (works row-wise on ``(n, p)``)."""
        return np.asarray(X) @ self.S_inv.T

    def from_eigen(self, W: np.ndarray) -> np.ndarray:
        return (np.asarray(W) @ self.S.T).real

    def propagate(self, X: np.ndarray, dt) -> np.ndarray:
        """``exp(A dt) X``; ``X`` may be ``(p,)`` or ``(n, p)`` with ``dt`` scalar or ``(n,)``."""
        X = np.asarray(X, dtype=float)
        dt = np.asarray(dt, dtype=float)
        W = self.to_eigen(X)
        growth = np.exp(np.multiply.outer(dt, self.eigenvalues))
        return self.from_eigen(W * growth)

    def kernel(self, t) -> np.ndarray:
        """``h(t) = b' exp(A t) e`` for scalar or array ``t``."""
        t = np.asarray(t, dtype=float)
        terms = self.bS * self.Sinv_e * np.exp(np.multiply.outer(t, self.eigenvalues))
        return terms.sum(axis=-1).real

    def branching_ratio(self) -> float:
        """``-b' A^{-1} e``, the integral of the kernel."""
        if np.any(self.eigenvalues == 0):
            return float("inf")
        return float(-(self.bS * self.Sinv_e / self.eigenvalues).sum().real)


@dataclass(frozen=True)
class CarmaHawkesParams:
    """Baseline intensity, autoregressive ``a_1..a_p`` and moving-average ``b_0..b_q``."""

    mu: float
    a: tuple[float, ...]
    b_raw: tuple[float, ...]

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        b_raw = tuple(float(v) for v in np.atleast_1d(self.b_raw))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b_raw", b_raw)
        object.__setattr__(self, "mu", float(self.mu))
        if len(a) < 1:
            raise ValueError("p must be at least 1")
        if len(b_raw) < 1:
            raise ValueError("b_raw needs at least b_0")
        if len(b_raw) > len(a):
            raise ValueError(f"q = {len(b_raw) - 1} must be smaller than p = {len(a)}")
        if not np.isfinite(self.mu) or self.mu < 0:
            raise ValueError(f"baseline intensity must be non-negative, got {self.mu}")

    @property
    def p(self) -> int:
        return len(self.a)

    @property
    def q(self) -> int:
        return len(self.b_raw) - 1

    @property
    def b(self) -> np.ndarray:
        return pad_b(self.b_raw, self.p)

    @cached_property
    def system(self) -> CompanionSystem:
        return CompanionSystem.from_coefficients(self.a, self.b_raw)

    def replace(self, **changes) -> "CarmaHawkesParams":
        kw = {"mu": self.mu, "a": self.a, "b_raw": self.b_raw}
        kw.update(changes)
        return CarmaHawkesParams(**kw)


def kernel(params: CarmaHawkesParams, t):
    """Excitation kernel ``h(t) = b' exp(A t) e``; ``t`` must be non-negative."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("kernel is defined for t >= 0")
    h = params.system.kernel(t_arr)
    return float(h) if h.ndim == 0 else h


def intensity(params: CarmaHawkesParams, X) -> float:
    """``mu + b' X``.  A negative return value flags a positivity violation."""
    return float(params.mu + params.b @ np.asarray(X, dtype=float))


def propagate_state(params: CarmaHawkesParams, X, dt) -> np.ndarray:
    if np.any(np.asarray(dt) < 0):
        raise ValueError("dt must be non-negative")
    return params.system.propagate(X, dt)


def add_jump(X) -> np.ndarray:
    X = np.array(X, dtype=float)
    X[..., -1] += 1.0
    return X


@dataclass
class ValidationReport:
    passed: bool
    eigenvalue_real_parts: np.ndarray
    branching_ratio: float
    min_kernel: float
    horizon: float
    messages: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        lines = [
            f"validation: {status}",
            f"  eigenvalue real parts: {np.array2string(self.eigenvalue_real_parts, precision=6)}",
            f"  branching ratio: {self.branching_ratio:.6g}",
            f"  min kernel on [0, {self.horizon:.4g}]: {self.min_kernel:.6g}",
        ]
        lines += [f"  - {m}" for m in self.messages]
        return "\n".join(lines)


def validate(params: CarmaHawkesParams, horizon: float | None = None) -> ValidationReport:
    """Stationarity and kernel-sign diagnostics.  Never raises for bad parameters."""
    messages: list[str] = []
    try:
        system = params.system
    except NonDiagonalizableError as exc:
        return ValidationReport(False, np.full(params.p, np.nan), float("nan"), float("nan"),
                                float("nan"), [str(exc)])

    re = system.eigenvalues.real.copy()
    passed = True
    if np.any(re >= 0):
        passed = False
        messages.append("companion matrix has an eigenvalue with non-negative real part")
        br = float("inf")
    else:
        # independent of the eigen path: solve A x = e directly
        br = float(-params.b @ np.linalg.solve(system.A, system.e))
        if br >= 1.0:
            passed = False
            messages.append(f"branching ratio {br:.6g} >= 1")

    if horizon is None:
        lead = np.max(re)
        horizon = 10.0 / abs(lead) if lead < 0 else 10.0
    grid = np.linspace(0.0, horizon, KERNEL_GRID_POINTS)
    min_h = float(np.min(system.kernel(grid)))
    if min_h < -KERNEL_NEG_TOL:
        passed = False
        messages.append(f"kernel negative on the check grid (min {min_h:.3e})")
    return ValidationReport(passed, re, br, min_h, float(horizon), messages)
