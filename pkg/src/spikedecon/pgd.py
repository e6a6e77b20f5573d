"""Non-linear least squares refinement by preconditioned gradient descent.

The loss is ``0.5 * ||G V_tau A - Y||_F^2`` over complex amplitudes ``A``
(r x L) and real locations ``tau`` (r). Parameters are stacked as
``theta = [a_1; ...; a_L; tau]``.

Amplitudes are handled with Wirtinger calculus: the amplitude block of the
gradient is ``dL/dRe(a) + i dL/dIm(a)``. The location block is the real part
of the same complex chain-rule expression. The preconditioner
``(M^H W^H W M)^-1`` is applied as a Gauss-Newton metric over the real
parameter space, i.e. the location rows of the normal equations are taken in
real part so that the location step stays real.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, PreconditionerError
from .metrics import PsfMetrics, psf_metrics, weighted_error
from .model import GroundTruth, Measurements, Psf, SamplingGrid, canonical, vandermonde

__all__ = [
    "ParamVector",
    "PgdOptions",
    "PgdRecord",
    "PgdTrace",
    "build_M",
    "build_W",
    "loss",
    "gradient",
    "gauss_newton_matrix",
    "apply_metric",
    "preconditioner_apply",
    "pgd_run",
]


@dataclass(frozen=True, eq=False)
class ParamVector:
    amplitudes: np.ndarray
    tau: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        A = np.asarray(self.amplitudes, dtype=complex)
        if A.ndim == 1:
            A = A[:, None]
        tau = canonical(np.atleast_1d(np.asarray(self.tau, dtype=float)), self.T)
        if A.shape[0] != tau.size:
            raise ValueError(f"amplitudes shape {A.shape} inconsistent with {tau.size} locations")
        object.__setattr__(self, "amplitudes", A)
        object.__setattr__(self, "tau", tau)

    @property
    def r(self) -> int:
        return self.tau.size

    @property
    def L(self) -> int:
        return self.amplitudes.shape[1]

    def stack(self) -> np.ndarray:
        """``[vec(A); tau]`` with ``vec`` stacking columns (snapshots)."""
        return np.concatenate([self.amplitudes.reshape(-1, order="F"), self.tau.astype(complex)])

    @classmethod
    def unstack(cls, theta, r: int, L: int, T: float = 1.0) -> "ParamVector":
        theta = np.asarray(theta)
        if theta.size != r * (L + 1):
            raise ValueError(f"stacked vector has length {theta.size}, expected {r * (L + 1)}")
        A = theta[: r * L].reshape((r, L), order="F")
        return cls(A, np.real(theta[r * L:]), T)

    @classmethod
    def from_truth(cls, truth: GroundTruth) -> "ParamVector":
        return cls(truth.amplitudes.copy(), truth.tau.copy(), truth.T)


@dataclass
class PgdOptions:
    max_iters: int = 50
    grad_tol: float = 1e-12
    param_tol: float = 1e-14
    eps_reg: float = 1e-12
    safeguard: bool = True
    max_halvings: int = 10

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("grad_tol", "param_tol", "eps_reg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "PgdOptions":
        return cls(**(d or {}))


@dataclass
class PgdRecord:
    k: int
    loss: float
    grad_norm: float
    eta: float
    precond_cond: float
    halvings: int
    accepted: bool


@dataclass
class PgdTrace:
    records: list[PgdRecord] = field(default_factory=list)
    stop_reason: str = ""

    COLUMNS = ("k", "loss", "grad_norm", "eta", "precond_cond", "halvings")

    @property
    def eta(self) -> np.ndarray:
        return np.array([rec.eta for rec in self.records])

    @property
    def losses(self) -> np.ndarray:
        return np.array([rec.loss for rec in self.records])

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for rec in self.records:
                writer.writerow([rec.k, repr(rec.loss), repr(rec.grad_norm), repr(rec.eta),
                                 repr(rec.precond_cond), rec.halvings])


def _data(Y) -> np.ndarray:
    return Y.Y if isinstance(Y, Measurements) else np.asarray(Y, dtype=complex)


def _gv(tau, psf: Psf, grid: SamplingGrid):
    g = psf.spectrum(grid.frequencies)
    V = vandermonde(tau, grid)
    GV = g[:, None] * V
    GLV = (-2j * np.pi * grid.frequencies)[:, None] * GV
    return GV, GLV


def build_M(A) -> np.ndarray:
    """``[[I_Lr, 0], [0, diag(a_1)], ..., [0, diag(a_L)]]`` of shape 2Lr x (L+1)r."""
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    r, L = A.shape
    M = np.zeros((2 * L * r, (L + 1) * r), dtype=complex)
    M[: L * r, : L * r] = np.eye(L * r)
    for ell in range(L):
        M[L * r + ell * r: L * r + (ell + 1) * r, L * r:] = np.diag(A[:, ell])
    return M


def build_W(tau, psf: Psf, grid: SamplingGrid, L: int = 1) -> np.ndarray:
    """``[I_L kron G V_tau | I_L kron G Lambda V_tau]`` with ``Lambda = diag(-2i*pi*f_u)``."""
    GV, GLV = _gv(tau, psf, grid)
    eye = np.eye(L)
    return np.hstack([np.kron(eye, GV), np.kron(eye, GLV)])


def loss(theta: ParamVector, Y, psf: Psf, grid: SamplingGrid) -> float:
    GV, _ = _gv(theta.tau, psf, grid)
    R = GV @ theta.amplitudes - _data(Y)
    return 0.5 * float(np.vdot(R, R).real)


def gradient(theta: ParamVector, Y, psf: Psf, grid: SamplingGrid) -> np.ndarray:
    """Stacked gradient ``M_A^H W_tau^H vec(G V_tau A - Y)`` with real location block."""
    GV, _ = _gv(theta.tau, psf, grid)
    R = GV @ theta.amplitudes - _data(Y)
    W = build_W(theta.tau, psf, grid, theta.L)
    M = build_M(theta.amplitudes)
    g = M.conj().T @ (W.conj().T @ R.reshape(-1, order="F"))
    g[theta.r * theta.L:] = g[theta.r * theta.L:].real
    return g


def gauss_newton_matrix(theta: ParamVector, psf: Psf, grid: SamplingGrid) -> np.ndarray:
    """``M_A^H W_tau^H W_tau M_A`` (Hermitian, (L+1)r square)."""
    WM = build_W(theta.tau, psf, grid, theta.L) @ build_M(theta.amplitudes)
    H = WM.conj().T @ WM
    return 0.5 * (H + H.conj().T)


def _realify(H: np.ndarray, n_amp: int) -> np.ndarray:
    Haa, Hat, Htt = H[:n_amp, :n_amp], H[:n_amp, n_amp:], H[n_amp:, n_amp:]
    return np.block([
        [Haa.real, -Haa.imag, Hat.real],
        [Haa.imag, Haa.real, Hat.imag],
        [Hat.real.T, Hat.imag.T, Htt.real],
    ])


def apply_metric(H: np.ndarray, x: np.ndarray, n_amp: int) -> np.ndarray:
    """Metric as a real-linear map: amplitude rows complex, location rows in real part."""
    y = H @ x
    y[n_amp:] = y[n_amp:].real
    return y


def preconditioner_apply(theta: ParamVector, grad, psf: Psf, grid: SamplingGrid, eps_reg: float = 1e-12):
    """Solve ``(M^H W^H W M + eps I) x = grad`` over (complex amplitudes, real locations).

    ``eps = eps_reg * trace / ((L+1) r)``. Returns ``(x, condition_estimate)``.
    """
    grad = np.asarray(grad, dtype=complex)
    n_amp = theta.r * theta.L
    H = gauss_newton_matrix(theta, psf, grid)
    Hr = _realify(H, n_amp)
    eps = eps_reg * np.trace(H).real / H.shape[0]
    Hr[np.diag_indices_from(Hr)] += eps
    eig = np.linalg.eigvalsh(Hr)
    cond = float(eig[-1] / eig[0]) if eig[0] > 0 else np.inf
    rhs = np.concatenate([grad[:n_amp].real, grad[:n_amp].imag, grad[n_amp:].real])
    if not np.any(rhs):
        return np.zeros_like(grad), cond
    try:
        factor = scipy.linalg.cho_factor(Hr, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise PreconditionerError("preconditioner factorization failed; spikes may have collapsed", cond) from exc
    sol = scipy.linalg.cho_solve(factor, rhs)
    x = np.concatenate([sol[:n_amp] + 1j * sol[n_amp:2 * n_amp], sol[2 * n_amp:].astype(complex)])
    return x, cond


def _step(theta: ParamVector, x: np.ndarray, t: float) -> ParamVector:
    new = theta.stack() - t * x
    return ParamVector.unstack(new, theta.r, theta.L, theta.T)


def pgd_run(theta0: ParamVector, Y, psf: Psf, grid: SamplingGrid, opts: PgdOptions | None = None,
            truth: GroundTruth | None = None, metrics: PsfMetrics | None = None):
    """Run ``theta <- theta - P_k grad L(theta)`` from ``theta0``.

    Returns the final ``ParamVector`` and a ``PgdTrace`` with one record per
    iterate (``eta`` is NaN without ``truth``).
    """
    opts = opts or PgdOptions()
    if truth is not None and metrics is None:
        metrics = psf_metrics(psf, grid)
    theta = theta0
    trace = PgdTrace()
    current = loss(theta, Y, psf, grid)
    k = 0
    pending = ""
    while True:
        if not np.isfinite(current):
            raise NumericalError(f"non-finite loss at iteration {k}")
        g = gradient(theta, Y, psf, grid)
        x, cond = preconditioner_apply(theta, g, psf, grid, opts.eps_reg)
        eta = weighted_error(theta.amplitudes, theta.tau, truth, metrics) if truth is not None else np.nan
        rec = PgdRecord(k, current, float(np.linalg.norm(g)), eta, cond, 0, True)
        trace.records.append(rec)
        if pending:
            trace.stop_reason = pending
            break
        if np.linalg.norm(x) < opts.grad_tol:
            trace.stop_reason = "step_tol"
            break
        if k >= opts.max_iters:
            trace.stop_reason = "max_iters"
            break
        t = 1.0
        candidate = _step(theta, x, t)
        cand_loss = loss(candidate, Y, psf, grid)
        if opts.safeguard:
            while not cand_loss <= current and rec.halvings < opts.max_halvings:
                t *= 0.5
                rec.halvings += 1
                candidate = _step(theta, x, t)
                cand_loss = loss(candidate, Y, psf, grid)
            if not cand_loss <= current:
                rec.accepted = False
                trace.stop_reason = "no_descent"
                break
        change = np.linalg.norm(t * x) / max(np.linalg.norm(theta.stack()), 1e-300)
        theta, current = candidate, cand_loss
        k += 1
        if change < opts.param_tol:
            pending = "param_tol"
    return theta, trace
