"""Emulation of the quench-and-measure acquisition protocol.

One shot at time t: draw a z-product initial state j from a configurable
initial distribution Q0, evolve under U(t), projectively measure in the
z-basis to obtain i, and record the estimand

    r = m_i * m_j * P0(j) / Q0(j),       P0(j) = 2^-N,

whose mean over shots estimates the autocorrelation S(t).  The quantum
device is emulated by exact state-vector propagation; the measurement is a
categorical draw from the transition column |<z_i|U(t)|z_j>|^2, which
isolates sampling statistics from simulation error.

Schemes
-------
uniform       Q0 = 2^-N, r = m_i m_j.
importance    Q0 = (4/N) m_j^2 2^-N; zero-magnetization states are never
              drawn (their weight vanishes, and so does the estimand's
              numerator, so the estimator stays unbiased); r = (N/4) m_i/m_j.
              Zero variance at t = 0.
thermal       per-spin Bernoulli product with weight exp(beta*m_j); the
              small-beta estimator is S(t) ~ mean(m_i)/beta, biased at
              O(beta^2 N^2).
abs-magnetization
              Q0 proportional to |m_j|; the late-time-optimal comparison
              scheme, kept for variance studies only.

Seeding discipline
------------------
Every time point k uses its own child generator seeded by
(master_seed, k), so shot loops may be split across any number of workers
by partitioning time points and merging per-worker sufficient statistics;
the merged estimate depends only on the master seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .spincore import (
    EigenSystem,
    ResponseSeries,
    SpectralDensity,
    SpinSystemError,
)

TWO_PI = 2.0 * np.pi

SCHEME_KINDS = ("uniform", "thermal", "importance", "abs-magnetization")


class SamplingError(SpinSystemError):
    """Invalid sampling-scheme configuration."""


@dataclass(frozen=True)
class SamplingScheme:
    """Initial-state distribution selector; ``beta`` only applies to thermal."""

    kind: str
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise SamplingError(f"unknown scheme {self.kind!r}; choose from {SCHEME_KINDS}")
        if self.kind == "thermal":
            if self.beta is None or not np.isfinite(self.beta) or self.beta <= 0:
                raise SamplingError("thermal scheme requires beta > 0")
        elif self.beta is not None:
            raise SamplingError(f"beta is only meaningful for the thermal scheme, not {self.kind}")


@dataclass(frozen=True)
class ShotRecord:
    """Vectorized record of the shots taken at one time point."""

    time: float
    initial_state: np.ndarray
    final_state: np.ndarray
    initial_magnetization: np.ndarray
    final_magnetization: np.ndarray
    estimand: np.ndarray


@dataclass(frozen=True)
class ResponseEstimate:
    """Monte Carlo estimate of S(t): per-time mean of the estimand, shot
    counts, and the empirical per-shot variance (ddof=1)."""

    times: np.ndarray
    values: np.ndarray
    shots: np.ndarray
    variances: np.ndarray
    scheme: SamplingScheme
    records: list[ShotRecord] | None = field(default=None, repr=False)

    def as_series(self) -> ResponseSeries:
        return ResponseSeries(
            times=self.times, values=self.values, variances=self.variances / self.shots
        )


def transition_matrix(eig: EigenSystem, t: float) -> np.ndarray:
    """P_t(i|j) = |<z_i|U(t)|z_j>|^2; doubly stochastic and symmetric because
    the evolution is unitary and H is real in the z-product basis."""
    if t < 0:
        raise SamplingError("t must be >= 0")
    phases = np.exp(-1j * eig.energies * t)
    amp = (eig.basis * phases) @ eig.basis.T
    return amp.real**2 + amp.imag**2


def initial_distribution(scheme: SamplingScheme, magnetizations: np.ndarray) -> np.ndarray:
    """Exact Q0 over all 2^N z-product states."""
    m = magnetizations
    dim = m.size
    n = int(round(np.log2(dim)))
    if scheme.kind == "uniform":
        return np.full(dim, 1.0 / dim)
    if scheme.kind == "thermal":
        q = np.exp(scheme.beta * m)
        return q / q.sum()
    if scheme.kind == "importance":
        return (4.0 / n) * m**2 / dim
    q = np.abs(m)
    return q / q.sum()


def estimand_on_pairs(scheme: SamplingScheme, magnetizations: np.ndarray) -> np.ndarray:
    """r(i, j) on the full (final, initial) grid; zero where Q0(j) = 0."""
    m = magnetizations
    dim = m.size
    n = int(round(np.log2(dim)))
    if scheme.kind == "uniform":
        return np.outer(m, m)
    if scheme.kind == "thermal":
        return np.broadcast_to((m / scheme.beta)[:, None], (dim, dim)).copy()
    if scheme.kind == "importance":
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (n / 4.0) * np.outer(m, 1.0 / m)
        r[:, m == 0.0] = 0.0
        return r
    z = np.abs(m).sum()
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.outer(m, np.sign(m)) * (z / dim)
    r[:, m == 0.0] = 0.0
    return r


def sample_initial(
    scheme: SamplingScheme, n_spins: int, rng: np.random.Generator, size: int = 1
) -> np.ndarray:
    """Draw ``size`` initial-state indices from the scheme's Q0.

    Uniform draws bitstrings directly; thermal draws independent per-spin
    Bernoulli bits with p_up = e^{beta/2} / (2 cosh(beta/2)); the
    magnetization-weighted schemes draw a sector by its exact weight and then
    a uniform bitstring inside the sector.
    """
    dim = 1 << n_spins
    if scheme.kind == "uniform":
        return rng.integers(0, dim, size=size, dtype=np.int64)
    if scheme.kind == "thermal":
        p_up = 1.0 / (1.0 + np.exp(-scheme.beta))
        bits = rng.random((size, n_spins)) < p_up
        return (bits.astype(np.int64) << np.arange(n_spins, dtype=np.int64)).sum(axis=1)

    from math import comb

    ks = np.arange(n_spins + 1)
    ms = ks - n_spins / 2.0
    counts = np.array([comb(n_spins, int(k)) for k in ks], dtype=float)
    weight = (ms**2 if scheme.kind == "importance" else np.abs(ms)) * counts
    probs = weight / weight.sum()
    sectors = rng.choice(ks, size=size, p=probs)
    # Uniform bitstring within a sector: set the k lowest ranks of a random
    # permutation of the positions.
    ranks = np.argsort(rng.random((size, n_spins)), axis=1)
    chosen = ranks < sectors[:, None]
    return (chosen.astype(np.int64) << np.arange(n_spins, dtype=np.int64)).sum(axis=1)


def _draw_final_states(
    probs_columns: np.ndarray, j: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw i ~ P_t(.|j) for each shot, grouping shots by initial state."""
    dim = probs_columns.shape[0]
    out = np.empty(j.size, dtype=np.int64)
    for jj in np.unique(j):
        where = np.nonzero(j == jj)[0]
        p = probs_columns[:, jj].copy()
        p = np.clip(p, 0.0, None)
        p /= p.sum()
        out[where] = rng.choice(dim, size=where.size, p=p)
    return out


def run_shots(
    eig: EigenSystem,
    scheme: SamplingScheme,
    times: np.ndarray,
    shots_per_time: int,
    seed: int = 0,
    keep_records: bool = False,
    bias_guidance_epsilon: float = 0.1,
) -> ResponseEstimate:
    """Run the acquisition protocol over a time grid.

    For the thermal scheme the estimator is mean(m_i)/beta and a warning is
    raised when beta exceeds sqrt(eps)/N, past which the O(beta^2 N^2) bias
    term is no longer subleading at accuracy eps.
    """
    times = np.asarray(times, dtype=float)
    if shots_per_time < 1:
        raise SamplingError("shots_per_time must be >= 1")
    n = eig.n_spins
    if scheme.kind == "thermal" and scheme.beta > np.sqrt(bias_guidance_epsilon) / n:
        warnings.warn(
            f"thermal beta={scheme.beta:g} exceeds sqrt(eps)/N = "
            f"{np.sqrt(bias_guidance_epsilon) / n:g}; the estimator bias "
            f"~ (beta N)^2 is no longer subleading",
            RuntimeWarning,
            stacklevel=2,
        )
    m = eig.magnetizations
    values = np.empty(times.size)
    variances = np.empty(times.size)
    records: list[ShotRecord] | None = [] if keep_records else None
    for k, t in enumerate(times):
        rng = np.random.default_rng([int(seed), int(k)])
        j = sample_initial(scheme, n, rng, size=shots_per_time)
        probs = transition_matrix(eig, float(t))
        i = _draw_final_states(probs, j, rng)
        if scheme.kind == "uniform":
            r = m[i] * m[j]
        elif scheme.kind == "importance":
            r = (n / 4.0) * m[i] / m[j]
        elif scheme.kind == "thermal":
            r = m[i] / scheme.beta
        else:
            r = m[i] * np.sign(m[j]) * (np.abs(m).sum() / m.size)
        values[k] = r.mean()
        variances[k] = r.var(ddof=1) if r.size > 1 else 0.0
        if keep_records:
            records.append(
                ShotRecord(
                    time=float(t),
                    initial_state=j,
                    final_state=i,
                    initial_magnetization=m[j],
                    final_magnetization=m[i],
                    estimand=r,
                )
            )
    return ResponseEstimate(
        times=times,
        values=values,
        shots=np.full(times.size, shots_per_time),
        variances=variances,
        scheme=scheme,
        records=records,
    )


def estimand_distribution(
    eig: EigenSystem, scheme: SamplingScheme, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact joint distribution of the estimand: values r(i,j) and
    probabilities P_t(i|j) Q0(j), flattened over the (i, j) grid."""
    q0 = initial_distribution(scheme, eig.magnetizations)
    probs = transition_matrix(eig, t) * q0[None, :]
    r = estimand_on_pairs(scheme, eig.magnetizations)
    return r.ravel(), probs.ravel()


def estimand_moments(eig: EigenSystem, scheme: SamplingScheme, t: float) -> dict:
    """Mean, variance and excess-kurtosis-free 4th central moment of the
    estimand, by full enumeration (N <= 12)."""
    r, p = estimand_distribution(eig, scheme, t)
    mean = float(np.dot(p, r))
    c = r - mean
    var = float(np.dot(p, c**2))
    m4 = float(np.dot(p, c**4))
    return {"mean": mean, "var": var, "m4": m4}


def variance_oracle(eig: EigenSystem, scheme: SamplingScheme, t: float) -> float:
    """Exact per-shot variance of the scheme's estimand at time t."""
    return estimand_moments(eig, scheme, t)["var"]


def default_time_grid(
    eig: EigenSystem, gamma: float, oversample: float = 4.0, horizon: float = 8.0
) -> np.ndarray:
    """Uniform grid with dt = pi/(oversample * w_max) up to T = horizon/gamma,
    where w_max is the full spectral width of H (the largest transition)."""
    if gamma <= 0:
        raise SamplingError("gamma must be positive")
    w_max = float(eig.energies[-1] - eig.energies[0])
    t_max = horizon / gamma
    dt = np.pi / (oversample * w_max) if w_max > 0 else t_max / 256.0
    n_steps = max(int(np.ceil(t_max / dt)), 2)
    return dt * np.arange(n_steps + 1)


def spectrum_from_estimate(
    est: ResponseEstimate | ResponseSeries,
    gamma: float,
    omega_grid: np.ndarray | None = None,
    max_transition_frequency: float | None = None,
    clip_negative: bool = True,
) -> SpectralDensity:
    """Discrete damped Fourier transform of a sampled (or exact) S(t).

    Uses the even extension of the real series, A(w) = 2 * Re trapz_t
    exp(i w t - gamma t) S(t), matching the exact spectrum's full-axis
    convention and mass N/4. Shot noise can push values below zero; they are
    clipped by default so downstream probability machinery stays valid.
    """
    times = est.times
    if times.size < 2:
        raise SamplingError("need at least two time points")
    dt = float(times[1] - times[0])
    if max_transition_frequency is not None and dt > np.pi / max_transition_frequency:
        warnings.warn(
            f"time step {dt:g} violates the Nyquist bound pi/w_max = "
            f"{np.pi / max_transition_frequency:g}; spectrum will alias",
            RuntimeWarning,
            stacklevel=2,
        )
    if omega_grid is None:
        lim = np.pi / dt
        if max_transition_frequency is not None:
            lim = min(lim, max_transition_frequency + 1600.0 * gamma)
        step = gamma / 5.0
        n_half = int(np.ceil(lim / step))
        omega_grid = step * np.arange(-n_half, n_half + 1)
    omega_grid = np.asarray(omega_grid, dtype=float)
    if max(abs(omega_grid[0]), abs(omega_grid[-1])) > np.pi / dt * (1.0 + 1e-9):
        warnings.warn(
            "omega grid extends beyond the time-sampling Nyquist range "
            f"+-pi/dt = {np.pi / dt:g}; values out there alias",
            RuntimeWarning,
            stacklevel=2,
        )
    signal = np.real(np.asarray(est.values)) * np.exp(-gamma * times)
    values = np.empty(omega_grid.shape)
    chunk = max(1, int(4e6 // times.size))
    for start in range(0, omega_grid.size, chunk):
        sl = slice(start, start + chunk)
        kernel = np.cos(np.outer(omega_grid[sl], times))
        values[sl] = 2.0 * np.trapezoid(kernel * signal[None, :], times, axis=1)
    if clip_negative:
        np.clip(values, 0.0, None, out=values)
    return SpectralDensity(omega=omega_grid, values=values)
