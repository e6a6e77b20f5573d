"""Closed-form convergence and error certificates.

* ``theorem1_certificate``: local PGD convergence constants (alpha, beta),
  the noise condition, the basin radius and the limit error ``gamma_inf``;
  these are the two fixed points of the contraction map ``f1_map``.
* ``theorem2_certificate``: ESPRIT perturbation quantities.
* ``davis_kahan_bound``: subspace error bound from the realized noise.
* ``amplitude_error_bound``: propagation of a location error to the
  least-squares amplitudes.

Hypothesis failures produce certificates flagged ``applicable=False`` with
NaN sentinels instead of raising.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .metrics import PsfMetrics, min_separation
from .model import GroundTruth, Psf, SamplingGrid, vandermonde

__all__ = [
    "Theorem1Certificate",
    "Theorem2Certificate",
    "theorem1_certificate",
    "f1_map",
    "theorem2_quantities",
    "theorem2_certificate",
    "davis_kahan_bound",
    "amplitude_error_bound",
    "lower_frame_bound",
]


@dataclass(frozen=True)
class Theorem1Certificate:
    alpha: float
    beta: float
    noise_condition_lhs: float
    basin_radius: float
    gamma_inf: float
    separation_ok: bool
    applicable: bool
    u_min: float
    u_max: float
    Z_norm: float
    Delta: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Theorem2Certificate:
    denom: float
    dist_threshold: float
    md_bound_factor: float
    dk_bound: float
    applicable: bool
    G_norm: float
    Delta: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["md_bound_note"] = "bound up to absolute constant"
        return d


def theorem1_certificate(truth: GroundTruth, metrics: PsfMetrics, Z_norm: float, T: float | None = None
                         ) -> Theorem1Certificate:
    T = truth.T if T is None else T
    u = truth.row_norms
    u_min, u_max = float(u.min()), float(u.max())
    if u_min <= 0:
        raise ValueError("the convergence certificate needs strictly positive amplitude row norms")
    Delta = min_separation(truth.tau, T)
    shrink = 1 - (2 / 3) * metrics.rho_g1 / Delta
    separation_ok = bool(shrink > 0)
    nan = float("nan")
    if not separation_ok:
        return Theorem1Certificate(nan, nan, nan, nan, nan, False, False, u_min, u_max, float(Z_norm), Delta)
    alpha = 1 + (u_max / u_min) * (math.sqrt(metrics.E_g2) / metrics.E_g1) * math.sqrt(
        (1 + 0.5 * metrics.rho_g2 / Delta) / shrink)
    beta = 1 / math.sqrt(T * metrics.E_g1 * shrink)
    lhs = 4 * (alpha + 1) * beta * Z_norm / u_min
    if lhs <= 1:
        root = math.sqrt(1 - lhs)
        basin = (1 + root) / (2 * (alpha + 1))
        gamma = (1 - root) / (2 * (alpha + 1))
    else:
        basin = gamma = nan
    return Theorem1Certificate(alpha, beta, lhs, basin, gamma, True, bool(lhs <= 1),
                               u_min, u_max, float(Z_norm), Delta)


def f1_map(eta, cert: Theorem1Certificate, Z_norm: float | None = None, u_min: float | None = None):
    """``(alpha eta^2 + beta ||Z||_F / u_min) / (1 - eta)``."""
    Z_norm = cert.Z_norm if Z_norm is None else Z_norm
    u_min = cert.u_min if u_min is None else u_min
    eta = np.asarray(eta, dtype=float)
    if np.any(eta >= 1):
        raise ValueError("f1 is only defined for eta < 1")
    out = (cert.alpha * eta**2 + cert.beta * Z_norm / u_min) / (1 - eta)
    return float(out) if out.ndim == 0 else out


def theorem2_quantities(r: int, G_norm: float, T: float, E_g: float, rho_g: float, Delta: float,
                        varrho_g: float) -> tuple[float, float, float, bool]:
    """``(denom, dist_threshold, md_bound_factor, applicable)`` from scalar inputs."""
    flat = 1 - 0.5 * rho_g / Delta if np.isfinite(Delta) else 1.0
    if flat <= 0:
        nan = float("nan")
        return nan, nan, nan, False
    denom = 1 - G_norm**2 * r / (T * E_g * flat)
    if denom > 0:
        return denom, math.sqrt(denom) / (2 * math.sqrt(2)), T * varrho_g / denom, True
    return denom, 0.0, math.inf, False


def lower_frame_bound(psf_metrics: PsfMetrics, Delta: float, T: float) -> float:
    """``T E_g (1 - rho_g / (2 Delta))``, the implied lower bound on sigma_min(G V)^2."""
    flat = 1 - 0.5 * psf_metrics.rho_g / Delta if np.isfinite(Delta) else 1.0
    return T * psf_metrics.E_g * flat


def davis_kahan_bound(truth: GroundTruth, psf: Psf, grid: SamplingGrid, Z, metrics: PsfMetrics) -> float:
    """Subspace-distance bound ``2 min_c ||E - cI|| / (sigma_min(A)^2 T E_g (1 - rho_g / (2 Delta)))``.

    ``E = G V A Z^H + Z A^H V^H G^H + Z Z^H`` is the perturbation of ``Y Y^H``.
    The minimum over ``c`` is half the spread of the eigenvalues of ``E``.
    """
    Z = np.asarray(Z, dtype=complex)
    Delta = min_separation(truth.tau, grid.T)
    if np.isfinite(Delta) and metrics.rho_g / Delta >= 2:
        raise ValueError("Davis-Kahan denominator is not positive (rho_g / Delta >= 2)")
    if not np.any(Z):
        return 0.0
    S = psf.spectrum(grid.frequencies)[:, None] * vandermonde(truth.tau, grid) @ truth.amplitudes
    cross = S @ Z.conj().T
    E = cross + cross.conj().T + Z @ Z.conj().T
    eig = np.linalg.eigvalsh(0.5 * (E + E.conj().T))
    spread = 0.5 * (eig[-1] - eig[0])
    s_min = np.linalg.svd(truth.amplitudes, compute_uv=False)
    amp_gain = s_min[truth.r - 1] ** 2 if s_min.size >= truth.r else 0.0
    denom = amp_gain * lower_frame_bound(metrics, Delta, grid.T)
    if denom <= 0:
        raise ValueError("Davis-Kahan denominator is not positive (amplitudes lack full row rank)")
    return float(2 * spread / denom)


def theorem2_certificate(truth: GroundTruth, psf: Psf, metrics: PsfMetrics, grid: SamplingGrid, Z=None
                         ) -> Theorem2Certificate:
    if grid.N < truth.r + 1:
        raise ValueError(f"need N >= r + 1, got N={grid.N}, r={truth.r}")
    Delta = min_separation(truth.tau, grid.T)
    G_norm = float(np.max(np.abs(psf.spectrum(grid.frequencies))))
    denom, thresh, factor, applicable = theorem2_quantities(
        truth.r, G_norm, grid.T, metrics.E_g, metrics.rho_g, Delta, metrics.varrho_g)
    dk = float("nan")
    if Z is not None and np.isfinite(denom):
        try:
            dk = davis_kahan_bound(truth, psf, grid, Z, metrics)
        except ValueError:
            pass
    return Theorem2Certificate(denom, thresh, factor, dk, applicable, G_norm, Delta)


def amplitude_error_bound(delta: float, metrics: PsfMetrics, Delta: float) -> float:
    """Bound on ``||A* - A_hat||_F / ||A*||_F`` given a location error ``delta``.

    Returns NaN when ``Delta - 2 delta <= 0`` or the flatness factor is not positive.
    """
    if delta == 0:
        return 0.0
    gap = Delta - 2 * delta
    if not gap > 0:
        return float("nan")
    low = 1 - 0.5 * metrics.rho_g / gap
    if not low > 0:
        return float("nan")
    high = 1 + (2 / 3) * metrics.rho_g1 / gap
    return float(delta * math.sqrt(metrics.E_g1 / metrics.E_g * high / low))
