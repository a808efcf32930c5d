"""Thinning simulation, integrated intensity and Monte Carlo pricing.

Arrivals are generated by thinning against the bound ``mu + c g_t`` where
``c = |b'S|_2 |S^{-1}e|_2`` and ``g_t`` is the count of past events decayed
at the slowest eigenvalue rate.  The batch simulator runs many paths in
lockstep and keeps the state in eigen coordinates ``W = S^{-1} X``, so a
time step is an elementwise multiplication.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .charfn import NumericalError, RiskNeutralModel, forward_price
from .jump_models import sample_jump_sums
from .model_core import CarmaHawkesParams

__all__ = [
    "ArrivalRecord",
    "BatchResult",
    "CandidateLog",
    "McResult",
    "TerminalSample",
    "ThinningBound",
    "bound_coeff",
    "chunk_generator",
    "compensator_increments",
    "integrated_intensity",
    "mc_price",
    "mc_price_strikes",
    "simulate_arrivals",
    "simulate_batch",
    "simulate_terminal",
    "simulate_terminal_paths",
]

log = logging.getLogger(__name__)

CHUNK_SIZE = 8192
PILOT_FRACTION = 0.05


@dataclass(frozen=True)
class ThinningBound:
    c: float
    decay: float


def bound_coeff(params: CarmaHawkesParams) -> ThinningBound:
    sys = params.system
    c = np.linalg.norm(sys.bS) * np.linalg.norm(sys.Sinv_e)
    return ThinningBound(float(c), sys.decay)


@dataclass
class CandidateLog:
    times: np.ndarray
    bound: np.ndarray  # mu + c g at the candidate time
    intensity: np.ndarray
    rate: np.ndarray  # proposal rate actually used
    accepted: np.ndarray


@dataclass
class ArrivalRecord:
    times: np.ndarray
    N_T: int
    X_T: np.ndarray
    T: float
    t0: float = 0.0
    candidates: CandidateLog | None = None


def _initial_eigen_state(params: CarmaHawkesParams, X0):
    sys = params.system
    if X0 is None:
        return np.zeros(params.p, dtype=complex), True
    X0 = np.asarray(X0, dtype=float)
    return sys.S_inv @ X0, not np.any(X0)


def simulate_arrivals(params: CarmaHawkesParams, T: float, rng: np.random.Generator,
                      t0: float = 0.0, X0=None, log_candidates: bool = False) -> ArrivalRecord:
    """One path of event times on ``(t0, T]`` by thinning."""
    sys = params.system
    bound = bound_coeff(params)
    c, decay, mu = bound.c, bound.decay, params.mu
    lam, bS, Sinv_e = sys.eigenvalues, sys.bS, sys.Sinv_e
    W, empty_start = _initial_eigen_state(params, X0)
    t = float(t0)
    times: list[float] = []
    logs: list[tuple] = []

    if empty_start:
        if mu == 0:
            return ArrivalRecord(np.zeros(0), 0, np.zeros(params.p), T, t0,
                                 CandidateLog(*[np.zeros(0)] * 5) if log_candidates else None)
        # intensity is exactly mu until the first event
        t += rng.exponential(1.0 / mu)
        if t > T:
            return ArrivalRecord(np.zeros(0), 0, np.zeros(params.p), T, t0,
                                 CandidateLog(*[np.zeros(0)] * 5) if log_candidates else None)
        times.append(t)
        W = W + Sinv_e
        g = 1.0
    else:
        g = float(np.linalg.norm(W) / np.linalg.norm(Sinv_e))

    while True:
        rate = mu + c * g + c
        dt = rng.exponential(1.0 / rate)
        if t + dt > T:
            W = W * np.exp(lam * (T - t))
            break
        t += dt
        W = W * np.exp(lam * dt)
        g *= np.exp(decay * dt)
        lam_t = mu + float((bS @ W).real)
        if not np.isfinite(lam_t):
            raise NumericalError("non-finite intensity during thinning")
        accept = rng.uniform() * rate <= lam_t
        if log_candidates:
            logs.append((t, mu + c * g, lam_t, rate, accept))
        if accept:
            times.append(t)
            W = W + Sinv_e
            g += 1.0

    cand = None
    if log_candidates:
        arr = np.array(logs, dtype=float).reshape(-1, 5)
        cand = CandidateLog(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4].astype(bool))
    X_T = (sys.S @ W).real
    return ArrivalRecord(np.asarray(times), len(times), X_T, T, t0, cand)


@dataclass
class BatchResult:
    N_T: np.ndarray
    compensator: np.ndarray
    X_T: np.ndarray
    candidates: CandidateLog | None = None


def simulate_batch(params: CarmaHawkesParams, T: float, n_paths: int, rng: np.random.Generator,
                   t0: float = 0.0, X0=None, log_candidates: bool = False) -> BatchResult:
    """Counts, integrated intensity and terminal state for ``n_paths`` independent paths.

    Same thinning scheme as :func:`simulate_arrivals`, run in lockstep over paths.
    """
    sys = params.system
    bound = bound_coeff(params)
    c, decay, mu = bound.c, bound.decay, params.mu
    lam, bS, Sinv_e = sys.eigenvalues, sys.bS, sys.Sinv_e
    W0, empty_start = _initial_eigen_state(params, X0)
    n = int(n_paths)
    W = np.tile(W0, (n, 1))
    t = np.full(n, float(t0))
    N = np.zeros(n, dtype=np.int64)
    comp = np.zeros(n)
    logs = []

    if empty_start:
        if mu == 0:
            return BatchResult(N, comp, np.zeros((n, params.p)),
                               CandidateLog(*[np.zeros(0)] * 5) if log_candidates else None)
        first = t0 + rng.exponential(1.0 / mu, n)
        hit = first <= T
        comp += mu * (np.minimum(first, T) - t0)
        t = np.where(hit, first, T)
        W[hit] += Sinv_e
        N[hit] = 1
        g = hit.astype(float)
        active = hit
    else:
        g = np.full(n, np.linalg.norm(W0) / np.linalg.norm(Sinv_e))
        active = np.ones(n, dtype=bool)

    with np.errstate(over="ignore"):
        while active.any():
            idx = np.flatnonzero(active)
            rate = mu + c * g[idx] + c
            dt = rng.exponential(1.0 / rate)
            over = t[idx] + dt > T
            step = np.where(over, T - t[idx], dt)
            growth = np.exp(np.multiply.outer(step, lam))
            Wi = W[idx]
            # int_0^step b'S e^{Lambda s} W ds, elementwise in eigen coordinates
            comp[idx] += mu * step + ((Wi * (growth - 1.0) / lam) @ bS).real
            Wi = Wi * growth
            g[idx] *= np.exp(decay * step)
            t[idx] += step
            lam_t = mu + (Wi @ bS).real
            if not np.all(np.isfinite(lam_t)):
                raise NumericalError("non-finite intensity during thinning")
            u = rng.uniform(size=idx.size)
            acc = ~over & (u * rate <= lam_t)
            if log_candidates:
                cm = ~over
                logs.append((t[idx][cm], mu + c * g[idx][cm], lam_t[cm], rate[cm], acc[cm]))
            Wi[acc] += Sinv_e
            W[idx] = Wi
            g[idx[acc]] += 1.0
            N[idx[acc]] += 1
            active[idx[over]] = False

    cand = None
    if log_candidates:
        cols = [np.concatenate([row[k] for row in logs]) if logs else np.zeros(0) for k in range(5)]
        cand = CandidateLog(cols[0], cols[1], cols[2], cols[3], cols[4].astype(bool))
    return BatchResult(N, comp, (W @ sys.S.T).real, cand)


def integrated_intensity(record, params: CarmaHawkesParams, T: float, t0: float = 0.0,
                         X_t0=None) -> float:
    """Closed-form ``int_{t0}^T lambda_t dt`` from the event times.

    ``record`` is an :class:`ArrivalRecord` or an array of event times.  Events
    at or before ``t0`` only enter through the state at ``t0``; when ``X_t0`` is
    omitted that state is rebuilt from them.
    """
    times = np.asarray(record.times if isinstance(record, ArrivalRecord) else record, dtype=float)
    times = np.sort(times)
    if times.size and times[-1] > T:
        raise ValueError("event times beyond the horizon")
    sys = params.system
    A, b, e = sys.A, params.b, sys.e
    tau = T - t0
    pre = times[times <= t0]
    k0, k = pre.size, times.size
    if X_t0 is None:
        X_t0 = np.zeros(params.p)
        for ti in pre:
            X_t0 = X_t0 + sys.expm(t0 - ti) @ e
    X_t0 = np.asarray(X_t0, dtype=float)

    bA = np.linalg.solve(A.T, b)  # A^{-T} b, i.e. the row b' A^{-1}
    out = params.mu * tau + bA @ (sys.expm(tau) @ X_t0 - X_t0) - (bA @ e) * (k - k0)
    if k > k0:
        # s_j = S(j) e with S(j) = e^{A(T_j - T_{j-1})} S(j-1) + I, S(1) = I
        s = e.copy()
        s_k0 = e.copy() if k0 == 1 else None
        for j in range(1, k):
            s = sys.expm(times[j] - times[j - 1]) @ s + e
            if j + 1 == k0:
                s_k0 = s.copy()
        tail = s
        if k0 > 0:
            tail = s - sys.expm(times[k - 1] - times[k0 - 1]) @ s_k0
        out += bA @ (sys.expm(T - times[k - 1]) @ tail)
    return float(out)


def compensator_increments(record: ArrivalRecord, params: CarmaHawkesParams, X0=None) -> np.ndarray:
    """``Lambda(T_i) - Lambda(T_{i-1})`` for consecutive events (``T_0 = t0``)."""
    sys = params.system
    lam, bS, Sinv_e = sys.eigenvalues, sys.bS, sys.Sinv_e
    W, _ = _initial_eigen_state(params, X0)
    prev = record.t0
    out = np.empty(record.times.size)
    for i, ti in enumerate(record.times):
        d = ti - prev
        growth = np.exp(lam * d)
        out[i] = params.mu * d + float(((W * (growth - 1.0) / lam) @ bS).real)
        W = W * growth + Sinv_e
        prev = ti
    return out


@dataclass
class TerminalSample:
    S_T: np.ndarray
    N_T: np.ndarray
    compensator: np.ndarray


def simulate_terminal(model: RiskNeutralModel, T: float, rng: np.random.Generator,
                      size: int = 1) -> TerminalSample:
    """Terminal prices under Q with the jump compensator driven by the integrated intensity."""
    tau = model.tau(T)
    batch = simulate_batch(model.hawkes, T, size, rng, t0=model.t0, X0=model.X0)
    z = rng.standard_normal(size)
    jumps = sample_jump_sums(model.jump_Q, batch.N_T, rng)
    em1 = model.jump_exp_moment - 1.0
    log_s = (np.log(model.S0) + (model.r - 0.5 * model.sigma**2) * tau
             + model.sigma * np.sqrt(tau) * z - em1 * batch.compensator + jumps)
    return TerminalSample(np.exp(log_s), batch.N_T, batch.compensator)


def chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    """Philox stream for one fixed-size block of paths."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk_index,))))


def simulate_terminal_paths(model: RiskNeutralModel, T: float, M: int, seed: int,
                            chunk_size: int = CHUNK_SIZE, workers: int = 1) -> TerminalSample:
    """``M`` terminal draws; identical for any ``workers`` because chunking is by path index."""
    sizes = [min(chunk_size, M - s) for s in range(0, M, chunk_size)]

    def run(i):
        return simulate_terminal(model, T, chunk_generator(seed, i), sizes[i])

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return TerminalSample(*(np.concatenate([getattr(p, f) for p in parts])
                            for f in ("S_T", "N_T", "compensator")))


@dataclass(frozen=True)
class McResult:
    estimate: float
    std_error: float
    ci95: tuple[float, float]
    n_paths: int
    seed: int
    cv_beta: float
    K: float = float("nan")
    payoff: str = "call"

    def __str__(self):
        lo, hi = self.ci95
        return (f"MC {self.payoff} K={self.K:g}: {self.estimate:.4f} "
                f"(se {self.std_error:.4f}, 95% CI [{lo:.4f}, {hi:.4f}], M={self.n_paths})")


def _estimate(y, control, control_mean, beta, M, seed, K, payoff):
    adj = y if control is None else y - beta * (control - control_mean)
    est = float(adj.mean())
    se = float(adj.std(ddof=1) / np.sqrt(M))
    return McResult(est, se, (est - 1.96 * se, est + 1.96 * se), M, seed,
                    float(beta) if control is not None else 0.0, float(K), payoff)


def mc_price_strikes(strikes, T: float, model: RiskNeutralModel, M: int, seed: int,
                     payoff: str = "call", use_cv: bool = True, cv_beta: float | None = None,
                     workers: int = 1, sample: TerminalSample | None = None) -> list[McResult]:
    """Monte Carlo prices for several strikes from one simulated sample.

    The control variate is ``e^{-r tau} S_T`` with known mean ``e^{-r tau} E^Q[S_T]``.
    Its coefficient is fitted on the first 5% of paths unless ``cv_beta`` is given.
    """
    if M < 100:
        raise ValueError("need at least 100 paths")
    if payoff not in ("call", "put"):
        raise ValueError("payoff must be 'call' or 'put'")
    tau = model.tau(T)
    disc = np.exp(-model.r * tau)
    if sample is None:
        sample = simulate_terminal_paths(model, T, M, seed, workers=workers)
    ST = sample.S_T
    control = control_mean = None
    if use_cv:
        try:
            control_mean = disc * forward_price(model, T)
            control = disc * ST
        except NumericalError:
            warnings.warn("forward price unavailable; control variate disabled", RuntimeWarning)
    pilot = max(int(PILOT_FRACTION * M), 2)
    out = []
    for K in np.atleast_1d(strikes):
        pay = np.maximum(ST - K, 0.0) if payoff == "call" else np.maximum(K - ST, 0.0)
        y = disc * pay
        beta = 0.0
        if control is not None:
            if cv_beta is not None:
                beta = cv_beta
            else:
                cc = np.cov(y[:pilot], control[:pilot])
                beta = cc[0, 1] / cc[1, 1] if cc[1, 1] > 0 else 0.0
        out.append(_estimate(y, control, control_mean, beta, M, seed, K, payoff))
    return out


def mc_price(K: float, T: float, model: RiskNeutralModel, M: int, seed: int,
             payoff: str = "call", use_cv: bool = True, cv_beta: float | None = None,
             workers: int = 1) -> McResult:
    return mc_price_strikes([K], T, model, M, seed, payoff, use_cv, cv_beta, workers)[0]
