"""Exit-criteria suite.

Each test prints one ``PASS``/``FAIL`` line (collected and repeated in the
terminal summary) and asserts the criterion at its stated tolerance.

    pytest -v tests/test_acceptance.py
"""
import sys

import numpy as np
import pytest

from spikedecon.bench import ExperimentConfig, gen_instance, sweep
from spikedecon.certificates import amplitude_error_bound, davis_kahan_bound, f1_map, theorem1_certificate
from spikedecon.esprit import esprit, exact_subspace, ls_amplitudes, subspace_distance
from spikedecon.metrics import matching_distance, matching_permutation, min_separation, psf_metrics, weighted_error
from spikedecon.model import Psf
from spikedecon.pgd import ParamVector, PgdOptions, gradient, loss, pgd_run

pytestmark = pytest.mark.acceptance

RESULTS = []


def report(number, title, ok, detail):
    line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def instance(psf_spec, idx, snr_db=None, seed=0, r=3, L=5):
    config = ExperimentConfig(psf=psf_spec, r=r, L=L, snr_db=snr_db, seed=seed)
    truth, meas = gen_instance(config, idx)
    return truth, meas, config.psf_object(), config.grid


def perturb_to(truth, metrics, eta_target, rng):
    """Random perturbation of the truth with weighted error exactly ``eta_target``.

    The weighted error is 1-homogeneous in the perturbation while no location
    wraps around the torus, so one rescaling suffices.
    """
    dA = rng.standard_normal(truth.amplitudes.shape) + 1j * rng.standard_normal(truth.amplitudes.shape)
    dtau = rng.standard_normal(truth.r)
    unit = ParamVector(truth.amplitudes + 1e-6 * dA, truth.tau + 1e-6 * dtau, truth.T)
    s = 1e-6 * eta_target / weighted_error(unit.amplitudes, unit.tau, truth, metrics)
    return ParamVector(truth.amplitudes + s * dA, truth.tau + s * dtau, truth.T)


def fd_components(theta, Y, psf, grid):
    """Central differences of the loss for Re(A), Im(A) (h = 1e-5) and tau (5-point, h = 1e-6)."""
    r, L = theta.r, theta.L
    A, tau = theta.amplitudes, theta.tau

    def f(A_, tau_):
        return loss(ParamVector(A_, tau_, theta.T), Y, psf, grid)

    h = 1e-5
    d_re = np.zeros((r, L))
    d_im = np.zeros((r, L))
    for j in range(r):
        for ell in range(L):
            E = np.zeros((r, L))
            E[j, ell] = h
            d_re[j, ell] = (f(A + E, tau) - f(A - E, tau)) / (2 * h)
            d_im[j, ell] = (f(A + 1j * E, tau) - f(A - 1j * E, tau)) / (2 * h)
    h = 1e-6
    d_tau = np.zeros(r)
    for j in range(r):
        e = np.zeros(r)
        e[j] = h
        d_tau[j] = (-f(A, tau + 2 * e) + 8 * f(A, tau + e) - 8 * f(A, tau - e) + f(A, tau - 2 * e)) / (12 * h)
    return d_re.reshape(-1, order="F"), d_im.reshape(-1, order="F"), d_tau


def test_c01_gradient_matches_finite_differences():
    rng = np.random.default_rng(101)
    worst = {"Re(A)": 0.0, "Im(A)": 0.0, "tau": 0.0}
    for idx in range(20):
        spec = {"family": "dirac"} if idx % 2 else {"family": "gaussian", "sigma": 0.1}
        truth, meas, psf, grid = instance(spec, idx, snr_db=20.0, L=3)
        theta = perturb_to(truth, psf_metrics(psf, grid), 0.5, rng)
        g = gradient(theta, meas.Y, psf, grid)
        n = theta.r * theta.L
        fd_re, fd_im, fd_tau = fd_components(theta, meas.Y, psf, grid)
        for key, ours, ref in (("Re(A)", g[:n].real, fd_re), ("Im(A)", g[:n].imag, fd_im),
                               ("tau", g[n:].real, fd_tau)):
            worst[key] = max(worst[key], float(np.max(np.abs(ours - ref) / np.abs(ref))))
    ok = all(v <= 1e-6 for v in worst.values())
    detail = ", ".join(f"max rel err {k} = {v:.2e}" for k, v in worst.items()) + " (tol 1e-6, 20 instances)"
    assert report(1, "gradient vs central differences", ok, detail)


def test_c02_noiseless_esprit_exact():
    worst = {}
    for name, spec in (("dirac", {"family": "dirac"}), ("gaussian 0.15", {"family": "gaussian", "sigma": 0.15})):
        mds = []
        for idx in range(50):
            truth, meas, psf, grid = instance(spec, idx, snr_db=None, seed=2)
            mds.append(matching_distance(esprit(meas.Y, truth.r, psf, grid).tau_hat, truth.tau, grid.T))
        worst[name] = max(mds)
    ok = all(v <= 1e-8 for v in worst.values())
    detail = ", ".join(f"{k}: max md = {v:.1e}" for k, v in worst.items()) + " (tol 1e-8 T, 50 instances each)"
    assert report(2, "noiseless ESPRIT exactness", ok, detail)


def test_c03_noiseless_pgd_superlinear():
    rng = np.random.default_rng(303)
    psf_spec = {"family": "dirac"}
    iters_needed, ratios, misses = [], [], 0
    for idx in range(20):
        truth, meas, psf, grid = instance(psf_spec, idx, snr_db=None, seed=3)
        metrics = psf_metrics(psf, grid)
        cert = theorem1_certificate(truth, metrics, 0.0, grid.T)
        theta0 = perturb_to(truth, metrics, 0.1 * cert.basin_radius, rng)
        _, trace = pgd_run(theta0, meas.Y, psf, grid, PgdOptions(max_iters=8), truth=truth, metrics=metrics)
        eta = trace.eta
        hit = np.flatnonzero(eta <= 1e-10)
        if hit.size == 0:
            misses += 1
            continue
        iters_needed.append(int(hit[0]))
        for k in range(eta.size - 1):
            if eta[k] > 1e-12:
                ratios.append(eta[k + 1] / eta[k] ** 2)
    ok = misses == 0 and max(iters_needed) <= 8
    detail = (f"eta <= 1e-10 after at most {max(iters_needed) if iters_needed else 'n/a'} iterations "
              f"({misses} of 20 missed), max eta_(k+1)/eta_k^2 = {max(ratios):.3g}")
    assert report(3, "noiseless PGD super-linear convergence", ok, detail)


def test_c04_contraction_domination():
    rng = np.random.default_rng(404)
    cases = [("dirac", {"family": "dirac"}), ("gaussian 0.02", {"family": "gaussian", "sigma": 0.02})]
    snrs = [None, 35.0, 25.0, 15.0]
    admissible, steps_bad, limit_bad, breakdown = 0, 0, 0, []
    worst_ratio = 0.0
    for name, spec in cases:
        for snr in snrs:
            n_adm = n_bad = 0
            for idx in range(10):
                truth, meas, psf, grid = instance(spec, idx, snr_db=snr, seed=4)
                metrics = psf_metrics(psf, grid)
                Z = meas.Z if meas.Z is not None else np.zeros_like(meas.Y)
                cert = theorem1_certificate(truth, metrics, float(np.linalg.norm(Z)), grid.T)
                if not cert.applicable:
                    continue
                starts = [perturb_to(truth, metrics, 0.5 * cert.basin_radius, rng)]
                try:
                    est = esprit(meas.Y, truth.r, psf, grid)
                    A0 = ls_amplitudes(est.tau_hat, meas.Y, psf, grid)
                    if weighted_error(A0, est.tau_hat, truth, metrics) < cert.basin_radius:
                        starts.append(ParamVector(A0, est.tau_hat, grid.T))
                except ArithmeticError:
                    pass
                for theta0 in starts:
                    admissible += 1
                    n_adm += 1
                    _, trace = pgd_run(theta0, meas.Y, psf, grid, truth=truth, metrics=metrics)
                    eta = trace.eta
                    bad = sum(eta[k + 1] > f1_map(eta[k], cert) + 1e-9 for k in range(eta.size - 1))
                    final_bad = eta[-1] > cert.gamma_inf + 1e-9
                    steps_bad += bad
                    limit_bad += int(final_bad)
                    n_bad += int(bad > 0 or final_bad)
                    if cert.gamma_inf > 0:
                        worst_ratio = max(worst_ratio, eta[-1] / cert.gamma_inf)
            label = "noiseless" if snr is None else f"{snr:g} dB"
            breakdown.append(f"{name}/{label}: {n_bad}/{n_adm}")
    ok = admissible > 0 and steps_bad == 0 and limit_bad == 0
    detail = (f"{admissible} admissible runs, {steps_bad} step violations, {limit_bad} final-eta violations, "
              f"max final eta/gamma_inf = {worst_ratio:.3g}; runs violating per case: " + "; ".join(breakdown))
    assert report(4, "contraction domination", ok, detail)


def test_c05_davis_kahan_domination():
    counted, violations, skipped, worst = 0, 0, 0, 0.0
    for spec in ({"family": "dirac"}, {"family": "gaussian", "sigma": 0.02}):
        for snr in (15.0, 25.0, 35.0):
            for idx in range(100):
                truth, meas, psf, grid = instance(spec, idx, snr_db=snr, seed=5)
                metrics = psf_metrics(psf, grid)
                try:
                    bound = davis_kahan_bound(truth, psf, grid, meas.Z, metrics)
                except ValueError:
                    skipped += 1
                    continue
                measured = subspace_distance(esprit(meas.Y, truth.r, psf, grid).U_hat,
                                             exact_subspace(truth, psf, grid))
                counted += 1
                violations += int(measured > bound)
                worst = max(worst, measured / bound)
    ok = counted > 0 and violations == 0
    detail = (f"{violations} violations over {counted} trials (Dirac and Gaussian 0.02 at 15/25/35 dB, "
              f"{skipped} skipped for non-positive denominator), max measured/bound = {worst:.3g}")
    assert report(5, "Davis-Kahan domination", ok, detail)


def test_c06_amplitude_bound_domination():
    counted, violations, worst = 0, 0, 0.0
    specs = [{"family": "dirac"}, {"family": "gaussian", "sigma": 0.02}]
    idx = 0
    while counted < 100 and idx < 1000:
        spec = specs[idx % 2]
        snr = (15.0, 25.0, 35.0)[(idx // 2) % 3]
        truth, meas, psf, grid = instance(spec, idx, snr_db=snr, seed=6)
        idx += 1
        metrics = psf_metrics(psf, grid)
        tau_hat = esprit(meas.Y, truth.r, psf, grid).tau_hat
        md, perm = matching_permutation(tau_hat, truth.tau, grid.T)
        bound = amplitude_error_bound(md, metrics, min_separation(truth.tau, grid.T))
        if not np.isfinite(bound):
            continue
        A_hat = ls_amplitudes(tau_hat, meas.Y - meas.Z, psf, grid)[perm]
        rel = np.linalg.norm(truth.amplitudes - A_hat) / np.linalg.norm(truth.amplitudes)
        counted += 1
        violations += int(rel > bound)
        worst = max(worst, rel / bound)
    ok = counted >= 100 and violations == 0
    detail = f"{violations} violations over {counted} admissible trials, max measured/bound = {worst:.3g}"
    assert report(6, "amplitude error bound domination", ok, detail)


def _sigma_crossing(rows, settle=0.9):
    """Index of the first sweep point after which PGD's worst case stays within
    ``settle`` of ESPRIT's, together with the ratio of worst cases per point."""
    ratio = np.array([r["md_pgd_max"] / r["md_esprit_max"] for r in rows])
    finite = np.isfinite(ratio)
    idx = np.flatnonzero(finite)
    crossing = idx[-1] + 1
    for i in reversed(idx):
        if ratio[i] >= settle:
            crossing = i
        else:
            break
    return int(crossing), ratio


def test_c07_sigma_sweep_shape(tmp_path):
    config = ExperimentConfig(snr_db=25.0, trials=50, seed=7, sweep_axis="sigma")
    rows, _ = sweep(config, tmp_path, workers=4)
    crossing, ratio = _sigma_crossing(rows)
    finite = np.isfinite(ratio)
    below = ratio[:crossing][finite[:crossing]]
    ok = crossing > 0 and crossing < np.flatnonzero(finite)[-1] + 1 and bool(np.all(below <= 1))
    sigmas = [r["sweep_value"] for r in rows]
    sigma_c = sigmas[crossing] if crossing < len(sigmas) else float("nan")
    skipped = [f"{r['sweep_value']:g}" for r, f in zip(rows, finite) if not f]
    detail = (f"PGD worst case <= ESPRIT worst case for sigma < {sigma_c:g} "
              f"(max ratio there {below.max():.3g}); ratio >= 0.9 from sigma = {sigma_c:g} on "
              f"(ratios {', '.join(f'{x:.2f}' for x in ratio[finite])}); "
              f"points with every trial failed: {', '.join(skipped) or 'none'}")
    assert report(7, "sigma sweep: PGD improves narrow pulses only", ok, detail)


def _inversions(values):
    v = np.asarray(values)
    return int(np.sum(v[1:] > v[:-1]))


def _snr_sweep(sigma, seed):
    config = ExperimentConfig(psf={"family": "gaussian", "sigma": sigma}, trials=50, seed=seed, sweep_axis="snr")
    rows, _ = sweep(config, None, workers=4, plot=False)
    snr = np.array([r["sweep_value"] for r in rows])
    esp = np.array([r["md_esprit_median"] for r in rows])
    pgd = np.array([r["md_pgd_median"] for r in rows])
    inv_e, inv_p = _inversions(esp), _inversions(pgd)
    high = snr >= 15
    ok = inv_e <= 1 and inv_p <= 1 and bool(np.all(pgd[high] <= esp[high]))
    detail = (f"sigma = {sigma:g}: inversions ESPRIT {inv_e}, ESPRIT+PGD {inv_p}; "
              f"PGD <= ESPRIT at all SNR >= 15 dB: {bool(np.all(pgd[high] <= esp[high]))}; "
              f"median md ESPRIT {esp[0]:.2e} -> {esp[-1]:.2e}, PGD {pgd[0]:.2e} -> {pgd[-1]:.2e}")
    return ok, detail


def test_c08_snr_sweep_shape():
    ok, detail = _snr_sweep(0.075, seed=8)
    # informational only: at sigma = 0.15 the gain ratio on this grid is about 4e5,
    # so the outer samples are noise dominated at every SNR in the sweep
    _, info = _snr_sweep(0.15, seed=8)
    assert report(8, "SNR sweep: medians decrease, PGD refines", ok, detail + " | not asserted, " + info)


def test_c09_matching_oracle():
    rng = np.random.default_rng(909)
    mismatches = 0
    for k in range(200):
        r = 1 + k % 7
        a, b = rng.random(r), rng.random(r)
        fast = matching_distance(a, b, 1.0, method="bottleneck")
        brute = matching_distance(a, b, 1.0, method="brute")
        mismatches += int(fast != brute)
    assert report(9, "bottleneck matching equals exhaustive search", mismatches == 0,
                  f"{mismatches} mismatches over 200 random pairs (r = 1..7), exact equality")


def test_c10_determinism(tmp_path):
    config = ExperimentConfig(trials=8, seed=10, sweep_axis="snr", sweep_values=[10.0, 25.0])
    outputs = {}
    for tag, workers in (("w1", 1), ("w1_repeat", 1), ("w2", 2), ("w8", 8)):
        out = tmp_path / tag
        sweep(config, out, workers=workers, plot=False)
        outputs[tag] = ((out / "sweep.csv").read_bytes(), (out / "findings.csv").read_bytes())
    ok = len(set(outputs.values())) == 1
    assert report(10, "determinism across worker counts", ok,
                  "sweep.csv and findings.csv byte-identical for 1 (twice), 2 and 8 workers" if ok
                  else "outputs differ between runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
