"""ESPRIT with a known PSF, and least-squares amplitudes given locations.

With ``U_hat`` an orthonormal basis of the estimated signal subspace (rows in
ascending frequency order), ``U1``/``U2`` drop its last/first row and the
locations are read off the eigenvalues of ``U1^+ G1 G2^-1 U2`` where
``G1 G2^-1`` is the diagonal of consecutive PSF ratios
``g_hat(f_m) / g_hat(f_{m+1})``. For a Dirac PSF this is classical ESPRIT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EspritError, RankDeficiencyError
from .model import GroundTruth, Measurements, Psf, SamplingGrid, canonical, vandermonde

__all__ = [
    "EspritResult",
    "signal_subspace",
    "esprit_locations",
    "esprit",
    "ls_amplitudes",
    "subspace_distance",
    "exact_subspace",
]

_ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EspritResult:
    tau_hat: np.ndarray
    eigenvalues: np.ndarray
    U_hat: np.ndarray
    singular_values: np.ndarray | None = None
    subspace_gap: float | None = None

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat.tolist(),
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "singular_values": None if self.singular_values is None else self.singular_values.tolist(),
            "subspace_gap": self.subspace_gap,
        }


def _fix_phase(U: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    idx = np.argmax(np.abs(U), axis=0)
    pivot = U[idx, np.arange(U.shape[1])]
    return U * (np.abs(pivot) / pivot)[None, :]


def signal_subspace(Y, r: int):
    """Top-``r`` left singular vectors of ``Y`` and all singular values (descending)."""
    Y = Y.Y if isinstance(Y, Measurements) else np.asarray(Y, dtype=complex)
    N, L = Y.shape
    if N < r + 1:
        raise ValueError(f"need N >= r + 1 samples, got N={N}, r={r}")
    if r > L:
        raise RankDeficiencyError(f"{L} snapshots cannot span an r={r} dimensional signal subspace")
    U, s, _ = np.linalg.svd(Y, full_matrices=False)
    if s[r - 1] <= max(N, L) * np.finfo(float).eps * s[0]:
        raise RankDeficiencyError(f"observations have numerical rank below r={r}")
    return _fix_phase(U[:, :r]), s


def _consecutive_ratios(psf: Psf, grid: SamplingGrid) -> np.ndarray:
    g = psf.spectrum(grid.frequencies)
    if np.any(g[1:] == 0):
        raise EspritError("PSF spectrum vanishes on the grid; G2 is singular")
    with np.errstate(over="ignore", invalid="ignore"):
        ratios = g[:-1] / g[1:]
    if not np.all(np.isfinite(ratios)):
        raise EspritError("PSF gain ratios overflow; G2 is numerically singular")
    return ratios


def esprit_locations(U_hat, psf: Psf, grid: SamplingGrid, singular_values=None) -> EspritResult:
    U_hat = np.asarray(U_hat, dtype=complex)
    r = U_hat.shape[1]
    ratios = _consecutive_ratios(psf, grid)
    U1, U2 = U_hat[:-1], U_hat[1:]
    rhs = ratios[:, None] * U2
    Psi, _, rank, _ = np.linalg.lstsq(U1, rhs, rcond=None)
    if rank < r:
        raise EspritError("shifted subspace basis is rank deficient")
    lam = np.linalg.eigvals(Psi)
    tau_hat = canonical(-grid.T / (2 * np.pi) * np.angle(lam), grid.T)
    gap = None
    if singular_values is not None:
        s = np.asarray(singular_values)
        gap = float(s[r - 1] - (s[r] if s.size > r else 0.0))
    return EspritResult(tau_hat, lam, U_hat, None if singular_values is None else np.asarray(singular_values), gap)


def esprit(Y, r: int, psf: Psf, grid: SamplingGrid) -> EspritResult:
    U_hat, s = signal_subspace(Y, r)
    return esprit_locations(U_hat, psf, grid, s)


def ls_amplitudes(tau_hat, Y, psf: Psf, grid: SamplingGrid) -> np.ndarray:
    """``argmin_A ||G V_tau_hat A - Y||_F``."""
    Y = Y.Y if isinstance(Y, Measurements) else np.asarray(Y, dtype=complex)
    GV = psf.spectrum(grid.frequencies)[:, None] * vandermonde(tau_hat, grid)
    A, _, rank, _ = np.linalg.lstsq(GV, Y, rcond=None)
    if rank < GV.shape[1]:
        raise RankDeficiencyError("G V is rank deficient; estimated locations may coincide")
    return A


def _check_orthonormal(U, name):
    r = U.shape[1]
    if np.linalg.norm(U.conj().T @ U - np.eye(r), 2) > _ORTHONORMAL_TOL:
        raise ValueError(f"{name} does not have orthonormal columns")


def subspace_distance(U_a, U_b) -> float:
    """Spectral norm of the projector difference (sine of the largest principal angle)."""
    U_a = np.asarray(U_a, dtype=complex)
    U_b = np.asarray(U_b, dtype=complex)
    _check_orthonormal(U_a, "U_a")
    _check_orthonormal(U_b, "U_b")
    diff = U_a @ U_a.conj().T - U_b @ U_b.conj().T
    return float(min(np.linalg.norm(diff, 2), 1.0))


def exact_subspace(truth: GroundTruth, psf: Psf, grid: SamplingGrid) -> np.ndarray:
    """Orthonormal basis of the column space of ``G V_tau_star``."""
    GV = psf.spectrum(grid.frequencies)[:, None] * vandermonde(truth.tau, grid)
    U, s, _ = np.linalg.svd(GV, full_matrices=False)
    if s[-1] <= max(GV.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficiencyError("G V_tau_star is rank deficient")
    return _fix_phase(U)
