"""Exact simulation of small spin-1/2 systems in liquid-state NMR.

Builds the isotropic-exchange Hamiltonian with unidirectional chemical
shifts, diagonalizes it exactly, and evaluates the total-magnetization
autocorrelation and the damped absorption spectrum in closed form.

Conventions
-----------
- File-facing parameters (shifts, couplings) are in Hz; everything internal
  is angular (rad/s), converted by 2*pi when the Hamiltonian is built.
- The decoherence rate ``gamma`` is in 1/s and equals the Lorentzian
  half-width at half-maximum on the angular frequency axis.
- Spectra are the damped Fourier transform of the (real, even)
  autocorrelation over the whole time axis, so the spectral mass satisfies
  integral(domega/2pi) A = N/4 for N spins.  Each ordered eigenpair (a, b)
  contributes ``2 gamma / (gamma^2 + (omega + E_a - E_b)^2)`` times its
  weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi

# Dense 2^N x 2^N matrices: 14 spins = 16384^2 doubles (~2 GB) is the hard stop.
MAX_SPINS = 14


class SpinSystemError(ValueError):
    """Invalid spin-system parameters or numerically unusable input."""


class DimensionError(SpinSystemError):
    """Requested Hilbert-space dimension exceeds the dense-solver cap."""


@dataclass(frozen=True)
class SpinParams:
    """Parameter set of one spin system: shifts h_i (Hz), symmetric coupling
    matrix J_ij (Hz, zero diagonal) and decoherence rate gamma (1/s)."""

    n_spins: int
    shifts: np.ndarray
    couplings: np.ndarray
    gamma: float

    def __post_init__(self):
        shifts = np.asarray(self.shifts, dtype=float)
        couplings = np.asarray(self.couplings, dtype=float)
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "couplings", couplings)
        n = self.n_spins
        if n < 1:
            raise SpinSystemError(f"n_spins must be >= 1, got {n}")
        if shifts.shape != (n,):
            raise SpinSystemError(f"shifts must have shape ({n},), got {shifts.shape}")
        if couplings.shape != (n, n):
            raise SpinSystemError(
                f"couplings must have shape ({n}, {n}), got {couplings.shape}"
            )
        if not (np.isfinite(shifts).all() and np.isfinite(couplings).all()):
            raise SpinSystemError("shifts and couplings must be finite")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise SpinSystemError(f"gamma must be positive, got {self.gamma}")
        if np.any(np.diag(couplings) != 0.0):
            raise SpinSystemError("coupling matrix must have zero diagonal")
        asym = np.max(np.abs(couplings - couplings.T)) if n > 1 else 0.0
        if asym > 0.0:
            raise SpinSystemError(
                f"coupling matrix must be symmetric (max |J - J^T| = {asym:g})"
            )

    @property
    def dim(self) -> int:
        return 1 << self.n_spins


@dataclass(frozen=True)
class EigenSystem:
    """Exact eigendecomposition of H plus the total-S^z operator expressed in
    the eigenbasis.  ``energies`` are angular (rad/s), ascending. ``basis``
    columns are eigenvectors in the z-product basis; ``magnetizations`` holds
    the total z-magnetization m of each z-product basis state."""

    energies: np.ndarray
    basis: np.ndarray
    sz_eigenbasis: np.ndarray
    magnetizations: np.ndarray

    @property
    def n_spins(self) -> int:
        return int(round(np.log2(self.energies.size)))

    @property
    def dim(self) -> int:
        return self.energies.size


@dataclass(frozen=True)
class SpectralDensity:
    """Spectrum A(omega) on a uniform angular-frequency grid."""

    omega: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "values", values)
        if omega.ndim != 1 or omega.size < 2 or omega.shape != values.shape:
            raise SpinSystemError("omega/values must be 1-d arrays of equal length >= 2")
        steps = np.diff(omega)
        if not np.all(steps > 0):
            raise SpinSystemError("omega grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise SpinSystemError("omega grid must be uniform")

    @property
    def grid_step(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def mass(self) -> float:
        """Spectral mass integral(domega / 2pi) A by trapezoid."""
        return float(np.trapezoid(self.values, self.omega) / TWO_PI)


@dataclass(frozen=True)
class ResponseSeries:
    """S(t) on a uniform time grid starting at 0.  ``values`` is complex for
    the exact trace and real for sampled estimates; ``variances`` holds
    per-point estimator variances when the series was sampled."""

    times: np.ndarray
    values: np.ndarray
    variances: np.ndarray | None = field(default=None)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", np.asarray(self.values))
        if times.ndim != 1 or times.size < 1:
            raise SpinSystemError("times must be a 1-d array")
        if abs(times[0]) > 1e-15:
            raise SpinSystemError("time grid must start at 0")
        if times.size > 1:
            steps = np.diff(times)
            if not np.all(steps > 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise SpinSystemError("time grid must be uniform and increasing")

    @property
    def dt(self) -> float:
        if self.times.size < 2:
            raise SpinSystemError("time grid has a single point, no step defined")
        return float(self.times[1] - self.times[0])


def _basis_magnetizations(n_spins: int) -> np.ndarray:
    """Total z-magnetization m_j of each z-product basis state (bit=1 -> +1/2)."""
    idx = np.arange(1 << n_spins, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n_spins)[None, :]) & 1
    return bits.sum(axis=1) - n_spins / 2.0


def build_hamiltonian(params: SpinParams) -> np.ndarray:
    """Assemble H = sum_{i<j} 2pi J_ij S_i.S_j + sum_i 2pi h_i S^x_i (rad/s).

    Real symmetric in the z-product basis: the isotropic exchange contributes
    a diagonal part S^z_i S^z_j plus a flip-flop term connecting |..01..> and
    |..10..> with amplitude pi*J_ij; the transverse field flips single bits
    with amplitude pi*h_i.
    """
    n = params.n_spins
    if n > MAX_SPINS:
        raise DimensionError(
            f"n_spins={n} exceeds the dense-diagonalization cap of {MAX_SPINS}"
        )
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    bits = ((idx[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    sz = bits - 0.5  # per-site S^z eigenvalues, shape (dim, n)

    H = np.zeros((dim, dim))
    jmat = TWO_PI * params.couplings
    # Diagonal: sum_{i<j} 2pi J_ij s_i s_j
    upper = np.triu(jmat, k=1)
    H[idx, idx] = np.einsum("ki,ij,kj->k", sz, upper, sz)
    # Flip-flop: amplitude 2pi J_ij * 1/2 between states with opposite bits i, j
    for i in range(n):
        for j in range(i + 1, n):
            if params.couplings[i, j] == 0.0:
                continue
            differ = (bits[:, i] != bits[:, j])
            src = idx[differ]
            dst = src ^ (1 << i) ^ (1 << j)
            H[dst, src] += 0.5 * jmat[i, j]
    # Transverse field: amplitude 2pi h_i * 1/2 on single bit flips
    for i in range(n):
        if params.shifts[i] == 0.0:
            continue
        dst = idx ^ (1 << i)
        H[dst, idx] += 0.5 * TWO_PI * params.shifts[i]
    return H


def total_sx(n_spins: int) -> np.ndarray:
    """Total S^x operator in the z-product basis (for symmetry checks)."""
    dim = 1 << n_spins
    idx = np.arange(dim, dtype=np.int64)
    op = np.zeros((dim, dim))
    for i in range(n_spins):
        op[idx ^ (1 << i), idx] += 0.5
    return op


def diagonalize(H: np.ndarray) -> EigenSystem:
    """Dense symmetric eigendecomposition plus S^z_tot rotated to the eigenbasis."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise SpinSystemError("H must be square")
    herm_res = np.max(np.abs(H - H.conj().T))
    scale = max(np.max(np.abs(H)), 1.0)
    if herm_res > 1e-10 * scale:
        raise SpinSystemError(f"H is not Hermitian (residual {herm_res:g})")
    Hs = 0.5 * (H + H.conj().T)
    if np.iscomplexobj(Hs):
        if np.max(np.abs(Hs.imag)) > 1e-12 * scale:
            raise SpinSystemError("H has a genuinely complex part; expected real symmetric")
        Hs = Hs.real
    try:
        energies, basis = np.linalg.eigh(Hs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise SpinSystemError(
            f"eigen-solver failed to converge: {exc}; "
            f"cond-ish scale max|H|={scale:g}, dim={Hs.shape[0]}"
        ) from exc
    n = int(round(np.log2(energies.size)))
    if (1 << n) != energies.size:
        raise SpinSystemError("H dimension is not a power of two")
    m = _basis_magnetizations(n)
    sz_eig = basis.T @ (m[:, None] * basis)
    return EigenSystem(
        energies=energies, basis=basis, sz_eigenbasis=sz_eig, magnetizations=m
    )


def eigensystem(params: SpinParams) -> EigenSystem:
    """Convenience: build and diagonalize in one call."""
    return diagonalize(build_hamiltonian(params))


def _transition_weights(eig: EigenSystem) -> tuple[np.ndarray, np.ndarray]:
    """Flattened transition weights 2^-N |<a|Sz|b>|^2 and frequencies E_a - E_b."""
    dim = eig.dim
    w = (eig.sz_eigenbasis ** 2).ravel() / dim
    freq = (eig.energies[:, None] - eig.energies[None, :]).ravel()
    keep = w > 1e-18 * max(w.max(), 1e-300)
    return w[keep], freq[keep]


def response_exact(eig: EigenSystem, times: np.ndarray) -> ResponseSeries:
    """Exact autocorrelation S(t) = 2^-N sum_ab |<a|Sz|b>|^2 exp(i (E_a - E_b) t).

    Returns the (numerically complex) series; the imaginary part vanishes by
    the a<->b symmetry and is kept only as a residual diagnostic.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise SpinSystemError("times must be >= 0")
    w, freq = _transition_weights(eig)
    # S(t_k) = sum_p w_p exp(i freq_p t_k); chunk over transitions to bound memory
    out = np.zeros(times.shape, dtype=complex)
    chunk = max(1, int(4e6 // max(times.size, 1)))
    for start in range(0, w.size, chunk):
        sl = slice(start, start + chunk)
        phase = np.exp(1j * np.outer(times, freq[sl]))
        out += phase @ w[sl]
    return ResponseSeries(times=times, values=out)


def default_omega_grid(
    eig: EigenSystem, gamma: float, step_factor: float = 5.0, pad_factor: float = 1600.0
) -> np.ndarray:
    """Uniform grid with step gamma/step_factor extending pad_factor*gamma past
    the extreme transition frequencies.

    The pad covers Lorentzian tails: a pad of L*gamma leaves ~2/(pi*L) of each
    line's mass outside the window, so 1600*gamma keeps all but ~4e-4 of it.
    """
    if gamma <= 0:
        raise SpinSystemError("gamma must be positive")
    w_max = float(eig.energies[-1] - eig.energies[0])
    lim = w_max + pad_factor * gamma
    step = gamma / step_factor
    n_half = int(np.ceil(lim / step))
    return step * np.arange(-n_half, n_half + 1)


def spectrum_exact(
    eig: EigenSystem,
    gamma: float,
    omega_grid: np.ndarray | None = None,
    mass_warn_fraction: float = 0.99,
) -> SpectralDensity:
    """Closed-form Lorentzian spectrum of the damped autocorrelation.

    A(omega) = 2^-N sum_ab |<a|Sz|b>|^2 * 2 gamma / (gamma^2 + (omega + E_a - E_b)^2),
    the full-axis Fourier transform of S(t) e^{-gamma |t|}, so that
    integral(domega/2pi) A = S(0) = N/4 up to window truncation.
    """
    if gamma <= 0:
        raise SpinSystemError("gamma must be positive")
    if omega_grid is None:
        omega_grid = default_omega_grid(eig, gamma)
    omega_grid = np.asarray(omega_grid, dtype=float)
    w, freq = _transition_weights(eig)
    values = np.zeros(omega_grid.shape)
    chunk = max(1, int(8e6 // max(omega_grid.size, 1)))
    for start in range(0, w.size, chunk):
        sl = slice(start, start + chunk)
        dev = omega_grid[:, None] + freq[None, sl]
        values += (2.0 * gamma / (gamma**2 + dev**2)) @ w[sl]
    spec = SpectralDensity(omega=omega_grid, values=values)
    n = eig.n_spins
    captured = spec.mass() / (n / 4.0)
    if captured < mass_warn_fraction:
        warnings.warn(
            f"omega grid too narrow: captured spectral mass is {captured:.4f} "
            f"of the sum-rule value N/4",
            RuntimeWarning,
            stacklevel=2,
        )
    return spec


def ipr(spec: SpectralDensity) -> float:
    """Inverse participation ratio integral(domega) A / integral(domega) A^2.

    Scales inversely with the number of lines sharing the mass: a single
    unit-mass Lorentzian of half-width gamma gives 2*pi*gamma, and splitting
    the same mass across k disjoint identical lines multiplies it by k.
    Compare spectra only after normalizing them to a common mass convention.
    """
    total = np.trapezoid(spec.values, spec.omega)
    if total <= 0:
        raise SpinSystemError("IPR undefined for a zero spectrum")
    second = np.trapezoid(spec.values**2, spec.omega)
    return float(total / second)
