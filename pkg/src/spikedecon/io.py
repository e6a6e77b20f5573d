"""JSON and CSV serialization.

Complex numbers are written as ``[re, im]`` pairs and matrices as row-major
nested lists.
"""
from __future__ import annotations

import csv
import json

import numpy as np

from .model import GroundTruth, Measurements, SamplingGrid

__all__ = [
    "encode_complex",
    "decode_complex",
    "truth_to_dict",
    "truth_from_dict",
    "measurements_to_dict",
    "measurements_from_dict",
    "write_measurements_csv",
    "read_measurements_csv",
    "dump_json",
]


def encode_complex(a):
    """Nested ``[re, im]`` lists for a complex scalar, vector or matrix."""
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(obj) -> np.ndarray:
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError("complex values must be encoded as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def truth_to_dict(truth: GroundTruth, grid: SamplingGrid | None = None) -> dict:
    return {
        "T": truth.T,
        "n": None if grid is None else grid.n,
        "tau": truth.tau.tolist(),
        "amplitudes": encode_complex(truth.amplitudes),
    }


def truth_from_dict(d: dict) -> GroundTruth:
    return GroundTruth(np.asarray(d["tau"], dtype=float), decode_complex(d["amplitudes"]), float(d.get("T", 1.0)))


def measurements_to_dict(meas: Measurements) -> dict:
    return {
        "T": meas.grid.T,
        "n": meas.grid.n,
        "Y": encode_complex(meas.Y),
        "Z": None if meas.Z is None else encode_complex(meas.Z),
    }


def measurements_from_dict(d: dict) -> Measurements:
    grid = SamplingGrid(int(d["n"]), float(d.get("T", 1.0)))
    Y = decode_complex(d["Y"])
    if Y.ndim == 1:
        Y = Y[:, None]
    Z = None if d.get("Z") is None else decode_complex(d["Z"]).reshape(Y.shape)
    if Y.shape[0] != grid.N:
        raise ValueError(f"Y has {Y.shape[0]} rows but the grid has N={grid.N}")
    return Measurements(Y, grid, Z)


def write_measurements_csv(meas: Measurements, path) -> None:
    """One row per entry: ``freq_index, snapshot, re, im``.

    ``freq_index`` is the signed grid index ``u`` in ``[-n, n]``.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_index", "snapshot", "re", "im"])
        for i, u in enumerate(meas.grid.indices):
            for ell in range(meas.L):
                z = meas.Y[i, ell]
                writer.writerow([int(u), ell, repr(float(z.real)), repr(float(z.imag))])


def read_measurements_csv(path, T: float = 1.0) -> Measurements:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    u = np.array([int(row["freq_index"]) for row in rows])
    ell = np.array([int(row["snapshot"]) for row in rows])
    n = int(u.max())
    Y = np.zeros((2 * n + 1, ell.max() + 1), dtype=complex)
    Y[u + n, ell] = [float(row["re"]) + 1j * float(row["im"]) for row in rows]
    return Measurements(Y, SamplingGrid(n, T))


def _default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def dump_json(obj, fh=None, **kwargs):
    """``json.dump``/``json.dumps`` that understands numpy scalars and arrays.

    Non-finite floats are emitted as ``null``.
    """
    clean = _finite(obj)
    if fh is None:
        return json.dumps(clean, default=_default, **kwargs)
    json.dump(clean, fh, default=_default, **kwargs)
    return None


def _finite(obj):
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (float, np.floating)) and not np.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
