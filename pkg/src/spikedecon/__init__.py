"""Spike deconvolution with a known point spread function.

ESPRIT adapted to a known PSF gives initial locations, least squares gives
amplitudes, and preconditioned gradient descent refines both.
"""
from .bench import ConfigError, ExperimentConfig, run_trial, run_trials, sweep
from .certificates import (amplitude_error_bound, davis_kahan_bound, f1_map, theorem1_certificate,
                           theorem2_certificate, theorem2_quantities)
from .errors import EspritError, NumericalError, PreconditionerError, RankDeficiencyError
from .esprit import EspritResult, esprit, exact_subspace, ls_amplitudes, signal_subspace, subspace_distance
from .metrics import (PsfMetrics, QuadratureError, band_energy, gain_ratio, matching_distance,
                      matching_permutation, min_separation, psf_metrics, spectral_flatness, weighted_error)
from .model import GroundTruth, Measurements, Psf, SamplingGrid, add_noise, synthesize, vandermonde
from .pgd import ParamVector, PgdOptions, PgdTrace, gradient, loss, pgd_run, preconditioner_apply

__version__ = "0.1.0"
