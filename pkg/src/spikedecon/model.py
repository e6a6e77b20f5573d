"""Observation model: sampling grid, PSF spectra, Vandermonde matrices and
synthesis of noisy Fourier-domain measurements.

Measurements follow ``Y = G V_tau A + Z`` where ``G`` is the diagonal of PSF
Fourier samples on the grid ``(1/T) * [-n, ..., n]`` and ``V_tau`` has entries
``exp(-2i*pi*f_u*tau_j)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SamplingGrid",
    "Psf",
    "GroundTruth",
    "Measurements",
    "canonical",
    "vandermonde",
    "psf_diagonal",
    "synthesize",
    "add_noise",
]

_INVERTIBLE_RTOL = 1e-12


def canonical(tau, T):
    """Map locations into the fundamental domain [0, T)."""
    tau = np.mod(np.asarray(tau, dtype=float), T)
    # np.mod can return exactly T for tiny negative inputs
    return np.where(tau >= T, 0.0, tau)


@dataclass(frozen=True)
class SamplingGrid:
    """Uniform frequency grid ``f_u = u / T`` for ``u`` in ``[-n, n]``."""

    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"n must be a nonnegative integer, got {self.n!r}")
        if not self.T > 0:
            raise ValueError(f"period T must be positive, got {self.T!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def N(self) -> int:
        return 2 * self.n + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    @property
    def frequencies(self) -> np.ndarray:
        return self.indices / self.T

    @property
    def band(self) -> tuple[float, float]:
        """Observation band ``J_N = [-N/(2T), N/(2T)]``."""
        half = self.N / (2.0 * self.T)
        return (-half, half)


@dataclass(frozen=True, eq=False)
class Psf:
    """Point spread function described by its Fourier transform.

    Use the ``dirac``, ``gaussian``, ``truncated_sinc`` and ``custom``
    constructors rather than instantiating directly.
    """

    family: str
    sigma: float | None = None
    bandwidth: float | None = None
    table_freqs: np.ndarray | None = field(default=None, repr=False)
    table_values: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def dirac(cls) -> "Psf":
        return cls("dirac")

    @classmethod
    def gaussian(cls, sigma: float) -> "Psf":
        """Gaussian ``g(t) = exp(-t^2 / (2 sigma^2))``."""
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma!r}")
        return cls("gaussian", sigma=float(sigma))

    @classmethod
    def truncated_sinc(cls, bandwidth: float) -> "Psf":
        """Ideal low-pass kernel ``g(t) = B sinc(B t)``.

        Its spectrum is the indicator of ``|f| <= B/2``.
        """
        if not bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
        return cls("truncated_sinc", bandwidth=float(bandwidth))

    @classmethod
    def custom(cls, freqs, values) -> "Psf":
        """Tabulated spectrum, linearly interpolated (clamped outside the table)."""
        freqs = np.asarray(freqs, dtype=float)
        values = np.asarray(values, dtype=complex)
        if freqs.ndim != 1 or freqs.shape != values.shape or freqs.size < 2:
            raise ValueError("custom PSF needs matching 1-D frequency and value tables (>= 2 points)")
        if np.any(np.diff(freqs) <= 0):
            raise ValueError("custom PSF frequencies must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("custom PSF values must be finite")
        freqs.setflags(write=False)
        values.setflags(write=False)
        return cls("custom", table_freqs=freqs, table_values=values)

    def spectrum(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self.family == "dirac":
            return np.ones(f.shape, dtype=complex)
        if self.family == "gaussian":
            s = self.sigma
            return (s * np.sqrt(2 * np.pi) * np.exp(-2 * np.pi**2 * s**2 * f**2)).astype(complex)
        if self.family == "truncated_sinc":
            return (np.abs(f) <= self.bandwidth / 2).astype(complex)
        if self.family == "custom":
            re = np.interp(f, self.table_freqs, self.table_values.real)
            im = np.interp(f, self.table_freqs, self.table_values.imag)
            return re + 1j * im
        raise ValueError(f"unknown PSF family {self.family!r}")

    def spectrum_derivative(self, f) -> np.ndarray:
        """d/df of the spectrum; central differences for tabulated spectra."""
        f = np.asarray(f, dtype=float)
        if self.family in ("dirac", "truncated_sinc"):
            return np.zeros(f.shape, dtype=complex)
        if self.family == "gaussian":
            return -4 * np.pi**2 * self.sigma**2 * f * self.spectrum(f)
        h = 1e-6 * (self.table_freqs[-1] - self.table_freqs[0])
        return (self.spectrum(f + h) - self.spectrum(f - h)) / (2 * h)

    @property
    def breakpoints(self) -> np.ndarray:
        """Frequencies where the spectrum is not continuously differentiable."""
        if self.family == "truncated_sinc":
            return np.array([-self.bandwidth / 2, self.bandwidth / 2])
        if self.family == "custom":
            return np.asarray(self.table_freqs)
        return np.empty(0)

    @property
    def smooth(self) -> bool:
        return self.family in ("dirac", "gaussian")

    def to_dict(self) -> dict:
        out = {"family": self.family}
        if self.family == "gaussian":
            out["sigma"] = self.sigma
        elif self.family == "truncated_sinc":
            out["bandwidth"] = self.bandwidth
        elif self.family == "custom":
            out["freqs"] = self.table_freqs.tolist()
            out["values"] = [[v.real, v.imag] for v in self.table_values]
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> "Psf":
        family = str(spec.get("family", "")).lower().replace("-", "_")
        if family == "dirac":
            return cls.dirac()
        if family == "gaussian":
            return cls.gaussian(spec["sigma"])
        if family in ("truncated_sinc", "sinc"):
            return cls.truncated_sinc(spec["bandwidth"])
        if family == "custom":
            values = [complex(re, im) for re, im in spec["values"]]
            return cls.custom(spec["freqs"], values)
        raise ValueError(f"unknown PSF family {spec.get('family')!r}")

    def __eq__(self, other):
        if not isinstance(other, Psf):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.family, self.sigma, self.bandwidth))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Spike locations ``tau`` (length r, in [0, T)) and amplitudes (r x L)."""

    tau: np.ndarray
    amplitudes: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        tau = canonical(np.atleast_1d(np.asarray(self.tau, dtype=float)), self.T)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim == 1:
            amps = amps[:, None]
        if tau.ndim != 1 or tau.size < 1:
            raise ValueError("need at least one spike location")
        if amps.shape[0] != tau.size or amps.shape[1] < 1:
            raise ValueError(f"amplitudes shape {amps.shape} inconsistent with r={tau.size}")
        if np.any(np.linalg.norm(amps, axis=1) == 0):
            raise ValueError("every spike needs a nonzero amplitude row")
        d = np.abs(tau[:, None] - tau[None, :])
        d = np.minimum(d, self.T - d)
        np.fill_diagonal(d, np.inf)
        if np.any(d == 0):
            raise ValueError("spike locations must be distinct modulo T")
        tau.setflags(write=False)
        amps.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "T", float(self.T))

    @property
    def r(self) -> int:
        return self.tau.size

    @property
    def L(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.amplitudes, axis=1)


@dataclass(frozen=True, eq=False)
class Measurements:
    Y: np.ndarray
    grid: SamplingGrid
    Z: np.ndarray | None = None

    @property
    def L(self) -> int:
        return self.Y.shape[1]


def vandermonde(tau, grid: SamplingGrid) -> np.ndarray:
    """N x r matrix with entries ``exp(-2i*pi*f_u*tau_j)``, rows ascending in f."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    # (u * tau / T) keeps the exponent exact for tau shifted by multiples of T
    phase = np.outer(grid.indices, tau / grid.T)
    phase -= np.round(phase)
    return np.exp(-2j * np.pi * phase)


def psf_diagonal(psf: Psf, grid: SamplingGrid) -> tuple[np.ndarray, bool]:
    """Diagonal PSF matrix G on the grid and whether it is numerically invertible."""
    g = psf.spectrum(grid.frequencies)
    if not np.all(np.isfinite(g)):
        raise ValueError("PSF spectrum is not finite on the sampling grid")
    mag = np.abs(g)
    invertible = bool(mag.max() > 0 and mag.min() > _INVERTIBLE_RTOL * mag.max())
    return np.diag(g), invertible


def synthesize(truth: GroundTruth, psf: Psf, grid: SamplingGrid, noise=None) -> Measurements:
    """Measurements ``Y = G V_tau A + Z`` (Z = 0 when ``noise`` is None)."""
    g = psf.spectrum(grid.frequencies)
    clean = g[:, None] * (vandermonde(truth.tau, grid) @ truth.amplitudes)
    if noise is None:
        return Measurements(clean, grid, None)
    Z = np.asarray(noise, dtype=complex)
    if Z.shape != clean.shape:
        raise ValueError(f"noise shape {Z.shape} does not match (N, L) = {clean.shape}")
    return Measurements(clean + Z, grid, Z)


def add_noise(Y_clean, snr_db: float, seed: int):
    """Add circular complex Gaussian noise at a Frobenius-norm SNR.

    The per-entry variance is ``||Y_clean||_F^2 / (N L 10^(snr_db/10))``.
    ``snr_db = inf`` returns ``Z = 0``. Returns ``(Y, Z)``.
    """
    Y_clean = np.asarray(Y_clean, dtype=complex)
    if np.isposinf(snr_db):
        return Y_clean.copy(), np.zeros_like(Y_clean)
    energy = np.linalg.norm(Y_clean) ** 2
    if energy == 0:
        raise ValueError("cannot set a finite SNR for an all-zero signal")
    var = energy / (Y_clean.size * 10 ** (snr_db / 10))
    rng = np.random.default_rng(seed)
    Z = np.sqrt(var / 2) * (rng.standard_normal(Y_clean.shape) + 1j * rng.standard_normal(Y_clean.shape))
    return Y_clean + Z, Z
