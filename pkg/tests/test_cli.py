import json

import pytest

from spikedecon.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write_config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kw))
    return str(path)


def test_synthesize_then_solve(tmp_path, capsys):
    inst = tmp_path / "inst"
    code, out, _ = run(capsys, "synthesize", "--out", str(inst), "--seed", "4", "--json")
    assert code == 0
    meta = json.loads(out)
    assert meta["N"] == 31 and meta["r"] == 3
    for name in ("truth.json", "measurements.json", "measurements.csv"):
        assert (inst / name).exists()

    code, out, _ = run(capsys, "solve", "--instance", str(inst), "--out", str(tmp_path / "run"), "--json")
    assert code == 0
    res = json.loads(out)
    assert {"tau_hat", "A_hat", "md", "eta", "trace_path"} <= set(res)
    assert len(res["tau_hat"]) == 3 and res["md"] <= res["md_esprit"] + 1e-12
    assert (tmp_path / "run" / "trace.csv").read_text().startswith("k,loss,grad_norm,eta,precond_cond,halvings")


def test_solve_without_truth(tmp_path, capsys):
    inst = tmp_path / "inst"
    run(capsys, "synthesize", "--out", str(inst))
    (inst / "truth.json").unlink()
    code, out, _ = run(capsys, "solve", "--instance", str(inst), "--out", str(tmp_path), "--json")
    assert code == 0 and json.loads(out)["md"] is None


def test_esprit_and_pgd_commands(tmp_path, capsys):
    cfg = write_config(tmp_path, psf={"family": "dirac"}, noiseless=True)
    code, out, _ = run(capsys, "esprit", "--config", cfg, "--json")
    est = json.loads(out)
    assert code == 0 and est["md"] < 1e-10
    theta0 = tmp_path / "theta0.json"
    amps = [[[1.0, 0.0]] * 5] * 3
    theta0.write_text(json.dumps({"tau": [t + 1e-3 for t in est["tau_hat"]], "amplitudes": amps}))
    code, out, _ = run(capsys, "pgd", "--config", cfg, "--theta0", str(theta0), "--out", str(tmp_path), "--json")
    assert code == 0
    assert json.loads(out)["md"] < 1e-10


def test_certify_table(tmp_path, capsys):
    cfg = write_config(tmp_path, psf={"family": "dirac"})
    code, out, _ = run(capsys, "certify", "--config", cfg)
    assert code == 0
    names = [line.split()[0] for line in out.splitlines()[1:10]]
    assert names == ["E_g", "E_g1", "E_g2", "rho_g", "rho_g1", "rho_g2", "varrho_g", "T*E_g", "N"]
    code, out, _ = run(capsys, "certify", "--config", cfg, "--json")
    d = json.loads(out)
    assert d["T_E_g"] == pytest.approx(d["N"])
    assert d["theorem2"]["md_bound_note"] == "bound up to absolute constant"


def test_sweep_command(tmp_path, capsys):
    cfg = write_config(tmp_path, sweep={"axis": "sigma", "values": [0.05, 0.1]}, trials=2)
    code, out, _ = run(capsys, "sweep", "--config", cfg, "--out", str(tmp_path / "s"), "--workers", "2")
    assert code == 0
    for name in ("sweep.csv", "sweep.svg", "findings.csv"):
        assert (tmp_path / "s" / name).exists()


def test_exit_codes(tmp_path, capsys):
    assert run(capsys, "solve", "--no-such-flag")[0] == 1
    assert run(capsys)[0] == 1
    assert run(capsys, "solve", "--config", str(tmp_path / "missing.json"))[0] == 1
    bad = write_config(tmp_path, r=0)
    code, _, err = run(capsys, "solve", "--config", bad)
    assert code == 1 and "configuration error" in err
    assert run(capsys, "sweep", "--config", write_config(tmp_path, trials=1))[0] == 1
    wide = write_config(tmp_path, psf={"family": "gaussian", "sigma": 0.4})
    code, _, err = run(capsys, "solve", "--config", wide, "--out", str(tmp_path))
    assert code == 2 and "numerical failure" in err
    assert run(capsys, "--help")[0] == 0


def test_shipped_configs_parse_and_sweep(tmp_path, capsys):
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    code, _, _ = run(capsys, "sweep", "--config", str(root / "fig2a.json"), "--trials", "1",
                     "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "sweep.csv").read_text().splitlines()[0] == (
        "sweep_value,trials,failed,md_esprit_max,md_esprit_median,md_pgd_max,md_pgd_median,"
        "eta_final_median,gamma_inf_median")
    assert 'viewBox="0 0 800 600"' in (tmp_path / "sweep.svg").read_text()
    code, _, _ = run(capsys, "certify", "--config", str(root / "fig2b.json"))
    assert code == 0
