"""Spin-system NMR spectra: exact simulation, sampled acquisition, spectral
metrics and clustering, information geometry, and likelihood-free inference."""

from .spincore import (
    EigenSystem,
    ResponseSeries,
    SpectralDensity,
    SpinParams,
    SpinSystemError,
    build_hamiltonian,
    diagonalize,
    eigensystem,
    ipr,
    response_exact,
    spectrum_exact,
)

__version__ = "0.1.0"

__all__ = [
    "EigenSystem",
    "ResponseSeries",
    "SpectralDensity",
    "SpinParams",
    "SpinSystemError",
    "build_hamiltonian",
    "diagonalize",
    "eigensystem",
    "ipr",
    "response_exact",
    "spectrum_exact",
    "__version__",
]
