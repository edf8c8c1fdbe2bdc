"""Spectrum normalization and probability distances.

Spectra from different molecules live on different frequency windows, so all
comparisons go through a common standardized frame: unit mass under the
domega/2pi measure, zero first moment, unit second central moment, resampled
onto one shared grid.  Distances (Hellinger, Euclidean, Jensen-Shannon,
total variation) are then plain trapezoid quadratures on that grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spincore import SpectralDensity, SpinSystemError

TWO_PI = 2.0 * np.pi

# Standard frame: 2048 points spanning [-10, 10] standardized frequency units.
STANDARD_GRID = np.linspace(-10.0, 10.0, 2048)

_LOG2 = float(np.log(2.0))


class MetricError(SpinSystemError):
    """Invalid input to a normalization or distance computation."""


@dataclass(frozen=True)
class Provenance:
    """Affine frame the spectrum was standardized out of."""

    center: float
    bandwidth: float
    mass: float


@dataclass(frozen=True)
class NormalizedSpectrum:
    """Probability density p on the standard grid: trapz(p, omega)/2pi = 1,
    zero mean and unit variance under p(omega) domega/2pi."""

    omega: np.ndarray
    values: np.ndarray
    provenance: Provenance

    def moments(self) -> tuple[float, float, float]:
        """(mass, mean, central second moment) by trapezoid on the own grid."""
        mass = np.trapezoid(self.values, self.omega) / TWO_PI
        mean = np.trapezoid(self.omega * self.values, self.omega) / TWO_PI / mass
        var = np.trapezoid((self.omega - mean) ** 2 * self.values, self.omega) / TWO_PI / mass
        return float(mass), float(mean), float(var)


def _windowed_moments(omega, values, lo, hi):
    inside = (omega >= lo) & (omega <= hi)
    om, va = omega[inside], values[inside]
    mass = np.trapezoid(va, om)
    if mass <= 0:
        raise MetricError("spectrum has no mass inside the standardization window")
    mean = np.trapezoid(om * va, om) / mass
    var = np.trapezoid((om - mean) ** 2 * va, om) / mass
    return mass, mean, var


def normalize(
    spec: SpectralDensity, grid: np.ndarray | None = None, max_iter: int = 12
) -> NormalizedSpectrum:
    """Standardize a spectrum: divide by mass, shift by the first moment,
    scale by the bandwidth (central second moment^(1/2)), resample linearly.

    The affine map (center, scale) is solved by fixed-point iteration so the
    moments measured on the *standard window* itself come out exactly (0, 1);
    a single pass would leave window-truncation residue because Lorentzian
    tails carry second-moment weight.
    """
    if grid is None:
        grid = STANDARD_GRID
    omega = spec.omega
    values = np.asarray(spec.values, dtype=float)
    if np.any(values < 0):
        raise MetricError("spectrum has negative values; clip before normalizing")
    raw_mass = np.trapezoid(values, omega) / TWO_PI
    if raw_mass <= 0:
        raise MetricError("spectrum has non-positive total mass")

    _, center, var = _windowed_moments(omega, values, omega[0], omega[-1])
    scale = np.sqrt(var)
    if scale < 2.0 * spec.grid_step:
        raise MetricError(
            f"bandwidth {scale:g} narrower than two grid steps "
            f"({spec.grid_step:g}); delta-like spectrum has no usable frame"
        )
    resampled = None
    mass_grid = mean = 0.0
    for _ in range(max_iter):
        resampled = np.interp(grid, (omega - center) / scale, values, left=0.0, right=0.0)
        mass_grid = np.trapezoid(resampled, grid) / TWO_PI
        if mass_grid <= 0:
            raise MetricError("no spectral mass falls inside the standard window")
        mean = np.trapezoid(grid * resampled, grid) / TWO_PI / mass_grid
        var = np.trapezoid((grid - mean) ** 2 * resampled, grid) / TWO_PI / mass_grid
        if abs(mean) < 1e-10 and abs(var - 1.0) < 1e-10:
            break
        center = center + scale * mean
        scale = scale * np.sqrt(var)
    return NormalizedSpectrum(
        omega=grid,
        values=resampled / mass_grid,
        provenance=Provenance(center=float(center), bandwidth=float(scale), mass=float(raw_mass)),
    )


def _check_pair(p: NormalizedSpectrum, q: NormalizedSpectrum) -> None:
    if p.omega.shape != q.omega.shape or not np.array_equal(p.omega, q.omega):
        raise MetricError("spectra live on different grids")
    if np.any(p.values < 0) or np.any(q.values < 0):
        raise MetricError("normalized spectra must be nonnegative")


def bhattacharyya(p: NormalizedSpectrum, q: NormalizedSpectrum) -> float:
    """Overlap coefficient integral(domega/2pi) sqrt(p q)."""
    _check_pair(p, q)
    return float(np.trapezoid(np.sqrt(p.values * q.values), p.omega) / TWO_PI)


def hellinger(p: NormalizedSpectrum, q: NormalizedSpectrum) -> float:
    """Hellinger distance sqrt(1/2 integral(domega/2pi) (sqrt p - sqrt q)^2),
    equal to sqrt(1 - BC); in [0, 1]."""
    _check_pair(p, q)
    sq = 0.5 * np.trapezoid((np.sqrt(p.values) - np.sqrt(q.values)) ** 2, p.omega) / TWO_PI
    return float(np.sqrt(max(sq, 0.0)))


def euclidean(p: NormalizedSpectrum, q: NormalizedSpectrum) -> float:
    """L2 distance sqrt(integral(domega/2pi) (p - q)^2)."""
    _check_pair(p, q)
    sq = np.trapezoid((p.values - q.values) ** 2, p.omega) / TWO_PI
    return float(np.sqrt(max(sq, 0.0)))


def jensen_shannon(p: NormalizedSpectrum, q: NormalizedSpectrum) -> float:
    """Jensen-Shannon distance: sqrt of
    1/2 integral(domega/2pi) [p log p + q log q - (p+q) log((p+q)/2)],
    with the 0 log 0 = 0 convention; squared value bounded by log 2."""
    _check_pair(p, q)
    pv, qv = p.values, q.values
    m = 0.5 * (pv + qv)

    def xlogx(x):
        out = np.zeros_like(x)
        mask = x > 0
        out[mask] = x[mask] * np.log(x[mask])
        return out

    integrand = 0.5 * (xlogx(pv) + xlogx(qv)) - xlogx(m)
    sq = np.trapezoid(integrand, p.omega) / TWO_PI
    return float(np.sqrt(max(sq, 0.0)))


def total_variation(p: NormalizedSpectrum, q: NormalizedSpectrum) -> float:
    """Total variation 1/2 integral(domega/2pi) |p - q|; in [0, 1]."""
    _check_pair(p, q)
    return float(0.5 * np.trapezoid(np.abs(p.values - q.values), p.omega) / TWO_PI)


METRICS = {
    "hellinger": hellinger,
    "euclidean": euclidean,
    "jensen-shannon": jensen_shannon,
    "total-variation": total_variation,
}


def get_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise MetricError(
            f"unknown metric {name!r}; choose from {sorted(METRICS)}"
        ) from None
