"""Conditioning quantities of a deconvolution instance and error metrics.

Band energies and flatness measures are computed for ``order`` 0, 1, 2,
i.e. for the PSF ``g`` and its derivatives ``g'``, ``g''``, through the
identity ``F(g^(k))(f) = (2i*pi*f)^k F(g)(f)``.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import NumericalError
from .model import GroundTruth, Psf, SamplingGrid, canonical

__all__ = [
    "QuadratureError",
    "PsfMetrics",
    "torus_distance",
    "min_separation",
    "gauss_legendre",
    "band_energy",
    "spectral_flatness",
    "gain_ratio",
    "psf_metrics",
    "matching_permutation",
    "matching_distance",
    "weighted_error",
    "snr_db",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_QUAD_RTOL = 1e-10
_MAX_PANELS = 2**14
_CRIT_SAMPLES = 4097
_BRUTE_FORCE_MAX_R = 8


class QuadratureError(NumericalError):
    """Adaptive quadrature exhausted its panel budget."""

    def __init__(self, message, estimate, residual):
        super().__init__(f"{message} (estimate={estimate:.6g}, residual={residual:.3g})")
        self.estimate = estimate
        self.residual = residual


@dataclass(frozen=True)
class PsfMetrics:
    E_g: float
    E_g1: float
    E_g2: float
    rho_g: float
    rho_g1: float
    rho_g2: float
    varrho_g: float
    tv_fallback: bool = False

    FIELDS = ("E_g", "E_g1", "E_g2", "rho_g", "rho_g1", "rho_g2", "varrho_g")

    def to_dict(self) -> dict:
        return asdict(self)


def torus_distance(x, y, T):
    d = np.abs(np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), T))
    return np.minimum(d, T - d)


def min_separation(tau, T: float) -> float:
    """Smallest pairwise torus distance; ``inf`` for a single spike."""
    tau = canonical(np.atleast_1d(tau), T)
    if tau.size < 2:
        return np.inf
    s = np.sort(tau)
    gaps = np.diff(np.append(s, s[0] + T))
    return float(gaps.min())


def gauss_legendre(func, a: float, b: float, rtol: float = _QUAD_RTOL, max_panels: int = _MAX_PANELS) -> float:
    """Globally adaptive 15-point Gauss-Legendre quadrature of a real function."""

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        x = lo + half * (_GL_NODES + 1.0)
        return half * float(np.dot(_GL_WEIGHTS, func(x)))

    def refine(lo, hi, whole):
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        return left, right, abs(left + right - whole)

    if a == b:
        return 0.0
    whole = panel(a, b)
    left, right, err = refine(a, b, whole)
    # max-heap on error estimate: (-err, lo, hi, left, right)
    heap = [(-err, a, b, left, right)]
    total, total_err, panels = left + right, err, 2
    while total_err > rtol * abs(total) and total_err > 1e-300:
        if panels >= max_panels:
            raise QuadratureError("quadrature did not converge", total, total_err)
        neg_err, lo, hi, left, right = heapq.heappop(heap)
        total_err += neg_err
        total -= left + right
        mid = 0.5 * (lo + hi)
        for sub_lo, sub_hi, sub_val in ((lo, mid, left), (mid, hi, right)):
            l2, r2, e2 = refine(sub_lo, sub_hi, sub_val)
            heapq.heappush(heap, (-e2, sub_lo, sub_hi, l2, r2))
            total += l2 + r2
            total_err += e2
        panels += 2
    return total


def _weighted_density(psf: Psf, order: int):
    def density(f):
        return (2 * np.pi * f) ** (2 * order) * np.abs(psf.spectrum(f)) ** 2

    def density_derivative(f):
        g = psf.spectrum(f)
        dg = psf.spectrum_derivative(f)
        w = (2 * np.pi * f) ** (2 * order)
        dw = 2 * order * (2 * np.pi) ** (2 * order) * f ** (2 * order - 1) if order else 0.0
        return dw * np.abs(g) ** 2 + w * 2 * np.real(np.conj(g) * dg)

    return density, density_derivative


def _band_pieces(psf: Psf, grid: SamplingGrid) -> list[float]:
    lo, hi = grid.band
    inner = [b for b in psf.breakpoints if lo < b < hi]
    return [lo, *sorted(inner), hi]


def band_energy(psf: Psf, grid: SamplingGrid, order: int = 0) -> float:
    """Integral of ``(2*pi*f)^(2 order) |g_hat(f)|^2`` over the band ``J_N``."""
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order!r}")
    density, _ = _weighted_density(psf, order)
    edges = _band_pieces(psf, grid)
    return float(sum(gauss_legendre(density, a, b) for a, b in zip(edges[:-1], edges[1:])))


def _smooth_variation(density, derivative, a: float, b: float) -> float:
    """Total variation of a C^1 function on [a, b] via its monotone pieces."""
    x = np.linspace(a, b, _CRIT_SAMPLES)
    d = derivative(x)
    crit = [a]
    for i in range(x.size - 1):
        if d[i] == 0.0:
            crit.append(x[i])
        elif d[i] * d[i + 1] < 0:
            crit.append(brentq(derivative, x[i], x[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps))
    crit.append(b)
    vals = density(np.array(crit))
    return float(np.sum(np.abs(np.diff(vals))))


def spectral_flatness(psf: Psf, grid: SamplingGrid, order: int = 0, energy: float | None = None,
                      return_fallback: bool = False, edge_jumps: bool = False):
    """Flatness ``rho = E^-1 * TV(density)`` of the weighted power spectral density.

    The variation is taken pointwise over the open band, so the jumps of the
    band indicator at the edges do not count; interior jumps (truncated sinc)
    do. Tabulated spectra use summed absolute increments between table knots,
    which is reported through ``return_fallback``. ``edge_jumps=True`` adds
    the two band-edge jumps, i.e. the variation of the truncated density as a
    function on the whole real line.
    """
    if energy is None:
        energy = band_energy(psf, grid, order)
    density, derivative = _weighted_density(psf, order)
    lo, hi = grid.band
    fallback = False
    if psf.family == "custom":
        knots = np.unique(np.concatenate([[lo, hi], psf.breakpoints[(psf.breakpoints > lo) & (psf.breakpoints < hi)]]))
        if order:
            knots = np.unique(np.concatenate([knots, [0.0]]))
        tv = float(np.sum(np.abs(np.diff(density(knots)))))
        fallback = True
    else:
        pieces = _band_pieces(psf, grid)
        tv = 0.0
        eps = 1e-12 * (hi - lo)
        last = len(pieces) - 2
        for i, (a, b) in enumerate(zip(pieces[:-1], pieces[1:])):
            # one-sided limits at interior breakpoints; the jumps are added below
            tv += _smooth_variation(density, derivative, a + eps if i > 0 else a, b - eps if i < last else b)
        for bp in pieces[1:-1]:
            tv += float(abs(density(bp + eps) - density(bp - eps)))
    if edge_jumps:
        tv += float(density(lo) + density(hi))
    rho = float(tv / energy)
    return (rho, fallback) if return_fallback else rho


def gain_ratio(psf: Psf, grid: SamplingGrid) -> float:
    """Largest ratio ``|g_hat(f_{m+1})| / |g_hat(f_m)|`` of consecutive grid samples."""
    mag = np.abs(psf.spectrum(grid.frequencies))
    if np.any(mag[:-1] == 0):
        raise ZeroDivisionError("PSF spectrum vanishes on the grid; gain ratio undefined")
    return float(np.max(mag[1:] / mag[:-1]))


def psf_metrics(psf: Psf, grid: SamplingGrid, edge_jumps: bool = False) -> PsfMetrics:
    energies = [band_energy(psf, grid, k) for k in (0, 1, 2)]
    flat = [spectral_flatness(psf, grid, k, energy=e, return_fallback=True, edge_jumps=edge_jumps)
            for k, e in enumerate(energies)]
    try:
        varrho = gain_ratio(psf, grid)
    except ZeroDivisionError:
        varrho = np.inf
    return PsfMetrics(
        E_g=energies[0], E_g1=energies[1], E_g2=energies[2],
        rho_g=flat[0][0], rho_g1=flat[1][0], rho_g2=flat[2][0],
        varrho_g=varrho,
        tv_fallback=any(fb for _, fb in flat),
    )


def _distance_matrix(tau_hat, tau_star, T):
    return torus_distance(np.asarray(tau_star)[:, None], np.asarray(tau_hat)[None, :], T)


def _bottleneck(D: np.ndarray) -> tuple[float, np.ndarray]:
    values = np.unique(D)
    lo, hi = 0, values.size - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        allowed = D <= values[mid]
        rows, cols = linear_sum_assignment((~allowed).astype(float))
        if allowed[rows, cols].all():
            best, hi = mid, mid - 1
        else:
            lo = mid + 1
    threshold = values[best]
    # among bottleneck-optimal assignments take the one with the least total distance
    cost = np.where(D <= threshold, D, D.max() * D.size + 1.0)
    _, perm = linear_sum_assignment(cost)
    return float(threshold), perm


def _brute_force(D: np.ndarray) -> tuple[float, np.ndarray]:
    r = D.shape[0]
    best, best_perm = np.inf, None
    rows = np.arange(r)
    for perm in itertools.permutations(range(r)):
        worst = D[rows, perm].max()
        if worst < best:
            best, best_perm = worst, perm
    return float(best), np.array(best_perm)


def matching_permutation(tau_hat, tau_star, T: float, method: str = "auto"):
    """Return ``(md, perm)`` where ``tau_hat[perm[k]]`` is matched to ``tau_star[k]``."""
    tau_hat = np.atleast_1d(np.asarray(tau_hat, dtype=float))
    tau_star = np.atleast_1d(np.asarray(tau_star, dtype=float))
    if tau_hat.shape != tau_star.shape:
        raise ValueError(f"length mismatch: {tau_hat.size} estimates vs {tau_star.size} true locations")
    D = _distance_matrix(tau_hat, tau_star, T)
    if method == "auto":
        method = "brute" if tau_star.size <= _BRUTE_FORCE_MAX_R else "bottleneck"
    if method == "brute":
        return _brute_force(D)
    if method == "bottleneck":
        return _bottleneck(D)
    raise ValueError(f"unknown matching method {method!r}")


def matching_distance(tau_hat, tau_star, T: float, method: str = "auto") -> float:
    """``min over permutations pi of max_k |tau_star_k - tau_hat_pi(k)|`` on the torus."""
    return matching_permutation(tau_hat, tau_star, T, method)[0]


def weighted_error(A, tau, truth: GroundTruth, metrics: PsfMetrics) -> float:
    """Weighted amplitude/location error against ``truth``.

    The estimate is first aligned to the truth by the bottleneck-optimal
    permutation of its locations.
    """
    A = np.asarray(A, dtype=complex)
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    u = truth.row_norms
    if np.any(u == 0):
        raise ValueError("weighted error undefined when a true amplitude row vanishes")
    _, perm = _bottleneck(_distance_matrix(tau, truth.tau, truth.T))
    A, tau = A[perm], tau[perm]
    a_star = truth.amplitudes
    w = np.abs(a_star) ** 2 / u[:, None] ** 4
    amp = np.sum(w * np.abs(A - a_star) ** 2)
    loc = np.sum(torus_distance(tau, truth.tau, truth.T) ** 2)
    return float(np.sqrt(metrics.E_g * amp + metrics.E_g1 * loc))


def snr_db(Y_clean, Z) -> float:
    z = np.linalg.norm(Z)
    if z == 0:
        return np.inf
    return float(10 * np.log10(np.linalg.norm(Y_clean) ** 2 / z**2))
