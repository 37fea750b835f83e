import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from qisim import __version__
from qisim.cli import OUTPUT_ENV, main
from qisim.io import read_qmap, write_pgm
from qisim.sim import FrameStack


@pytest.fixture(autouse=True)
def no_env_dir(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--format", "json")
    assert code == 0, err
    return json.loads(out)


def csv_rows(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def comments(text):
    return [l for l in text.splitlines() if l.startswith("#")]


# design calculators

def test_optimal_table(capsys):
    code, out, _ = run(capsys, "optimal", "--table1")
    assert code == 0
    rows = {float(r["sigma"]): r for r in csv_rows(out)}
    assert rows[0.0]["frame_constant"] == "unbounded"
    expected = {0.1: 1321, 0.15: 34.5, 0.2: 9.30, 0.25: 5.01, 0.3: 3.56}
    for s, k in expected.items():
        assert float(rows[s]["frame_constant"]) == pytest.approx(k, rel=0.01)
    assert float(rows[0.2]["delta"]) == pytest.approx(0.0062, abs=1e-4)


def test_optimal_frames(capsys):
    doc = run_json(capsys, "optimal", "--theta", "20", "--sigma", "0.2")
    assert doc["summary"]["n_star_rounded"] == 186
    row = dict(zip(doc["tables"]["main"]["columns"], doc["tables"]["main"]["rows"][0]))
    assert (row["n_floor"], row["n_ceil"]) == (186, 187)


def test_optimal_unbounded(capsys):
    doc = run_json(capsys, "optimal", "--theta", "5", "--sigma", "0")
    assert doc["summary"]["n_star"] == "unbounded"


def test_optimal_exposure(capsys):
    doc = run_json(capsys, "optimal", "--n", "1,100", "--sigma", "0")
    rows = doc["tables"]["main"]["rows"]
    assert rows[0][2] == pytest.approx(1.5936, abs=1e-4)
    assert rows[1][2] == pytest.approx(159.36, abs=0.01)


def test_dr_values(capsys):
    assert run_json(capsys, "dr")["summary"]["dr_db"] == pytest.approx(73.07, abs=0.05)
    assert run_json(capsys, "dr", "--n", "5000")["summary"]["dr_db"] == pytest.approx(82.51, abs=0.05)
    doc = run_json(capsys, "dr", "--cis", "--sigma", "2", "--fwc", "5000")
    assert doc["summary"]["dr_db"] == pytest.approx(67.96, abs=0.05)


def test_dr_sweep(capsys):
    code, out, _ = run(capsys, "dr", "--sweep-n", "1:10000:9", "--sigma", "0.3")
    assert code == 0
    rows = csv_rows(out)
    assert [int(r["n_frames"]) for r in rows][0] == 1
    assert rows[0]["qis_dr_db"] == ""  # N=1 never reaches unity SNR at sigma=0.3
    assert float(rows[-1]["qis_dr_db"]) > float(rows[-2]["qis_dr_db"])


def test_bracket_summary(capsys):
    doc = run_json(capsys, "bracket", "--theta-log", "1e-2:1e6:50")
    s = doc["summary"]
    assert s["dr_db"] == pytest.approx(121.24, abs=0.05)
    assert s["bracket_term_db"] == pytest.approx(48.16, abs=0.05)
    assert s["qis_kn_dr_db"] == pytest.approx(82.51, abs=0.05)
    assert s["cis_1_dr_db"] == pytest.approx(67.96, abs=0.05)
    assert s["linear_gain_over_cis_1"] == pytest.approx(461.32, rel=0.01)
    assert abs(s["envelope_dr_db"] - s["dr_db"]) < 0.05
    assert s["taus"] == ["4", "1", "1/4", "1/16", "1/64"]
    assert len(doc["tables"]["main"]["rows"]) == 50


def test_bracket_custom_taus(capsys):
    doc = run_json(capsys, "bracket", "--taus", "2,1/2", "--n", "100", "--theta-log", "1e-1:1e4:20")
    assert doc["summary"]["bracket_term_db"] == pytest.approx(20 * np.log10(4), abs=1e-12)


def test_snr_curve_presets(capsys):
    doc = run_json(capsys, "snr-curve", "--figure", "4", "--theta-log", "1e-2:1e4:30")
    assert doc["summary"]["series"] == 3
    doc = run_json(capsys, "snr-curve", "--figure", "5", "--theta-log", "1e-2:1e4:30")
    assert doc["summary"]["series"] == 5
    sensors = {r[0] for r in doc["tables"]["main"]["rows"]}
    assert sensors == {"qis", "cis"}


def test_snr_curve_values(capsys):
    code, out, _ = run(capsys, "snr-curve", "--n", "1", "--sigma", "0", "--theta-log", "1:1:1")
    rows = csv_rows(out)
    assert float(rows[0]["snr"]) == pytest.approx(1 / np.sqrt(np.e - 1), rel=1e-6)


def test_snr_vs_n_peak(capsys):
    doc = run_json(capsys, "snr-vs-n", "--theta", "10", "--sigma", "0.2", "--n-range", "1:1000:1000",
                   "--approx")
    peak = doc["tables"]["peaks"]["rows"][0]
    assert abs(peak[2] - 93) <= 1
    assert peak[-1] == "ok"
    doc = run_json(capsys, "snr-vs-n", "--theta", "10", "--sigma", "0", "--n-range", "1:1000:50")
    assert doc["tables"]["peaks"]["rows"][0][-1] == "monotone"


# simulation

def test_simulate_outputs_deterministic(capsys, tmp_path):
    for d in ("a", "b"):
        code, _, err = run(capsys, "simulate", "--size", "16", "--n", "8", "--sigma", "0.2",
                           "--seed", "5", "--out", str(tmp_path / d))
        assert code == 0, err
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "sim_qis_sigma0.2_n8.qbf" in names and "simulate_sim_metrics.json" in names
    for name in names:
        if name.endswith(".csv"):
            continue  # argv differs in the provenance header
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    st = FrameStack.load(tmp_path / "a" / "sim_qis_sigma0.2_n8.qbf")
    assert (st.width, st.n_frames, st.seed) == (16, 8, 5)
    assert read_qmap(tmp_path / "a" / "sim_qis_sigma0.2_n8.qmap").shape == (16, 16)


def test_simulate_seed_changes_data(capsys, tmp_path):
    for seed in ("1", "2"):
        run(capsys, "simulate", "--size", "8", "--n", "4", "--seed", seed, "--out", str(tmp_path / seed))
    a = (tmp_path / "1" / "sim_qis_sigma0.19_n4.qbf").read_bytes()
    b = (tmp_path / "2" / "sim_qis_sigma0.19_n4.qbf").read_bytes()
    assert a != b


def test_simulate_fig8_sweep(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--figure", "8", "--size", "32", "--out", str(tmp_path),
                       "--format", "json")
    assert code == 0, err
    doc = json.loads((tmp_path / "simulate_fig8.json").read_text())
    rows = doc["tables"]["main"]["rows"]
    assert [r[2] for r in rows] == [4, 8, 256, 512, 1024, 4096]
    assert doc["summary"]["best_n_by_psnr_all"] in (4, 8, 256, 512, 1024)


def test_simulate_cis_and_image(capsys, tmp_path):
    img = (np.arange(64).reshape(8, 8) * 4).astype(np.uint8)
    write_pgm(tmp_path / "in.pgm", img)
    code, _, err = run(capsys, "simulate", "--sensor", "cis", "--sigma", "2", "--adc-bits", "8",
                       "--fwc", "4000", "--image", str(tmp_path / "in.pgm"), "--out", str(tmp_path))
    assert code == 0, err
    assert (tmp_path / "sim_cis_sigma2.pgm").exists()
    code, _, err = run(capsys, "simulate", "--figure", "7", "--size", "16", "--out", str(tmp_path))
    assert code == 0, err
    assert (tmp_path / "fig7_cis_sigma2.qmap").exists()


def test_simulate_missing_image(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--image", str(tmp_path / "none.pgm"), "--out", str(tmp_path))
    assert code == 1 and "input error" in err


# validation

def test_validate_pass(capsys):
    code, out, err = run(capsys, "validate", "--quick", "--only", "1,3,5")
    assert code == 0
    assert err.count("[PASS]") == 3
    assert [r["passed"] for r in csv_rows(out)] == ["True"] * 3


def test_validate_detects_perturbation(capsys):
    code, _, err = run(capsys, "validate", "--quick", "--only", "1,2", "--perturb-omega", "0.001")
    assert code == 3
    assert "[FAIL]" in err


# exit codes, config, output

@pytest.mark.parametrize("argv", [
    ["nonsense"], [], ["dr", "--n", "0"], ["snr-curve", "--sigma", ""],
    ["snr-curve", "--theta-log", "5:1:10"], ["bracket", "--taus", "1,-2"],
    ["simulate", "--seed", "-1"], ["dr", "--cis", "--sigma", "2", "--fwc", "1"],
    ["snr-curve", "--approx", "--sigma", "0.5"], ["optimal", "--format", "xml"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err


@pytest.mark.parametrize("argv", [["dr", "--n", "1", "--sigma", "0.3"],
                                  ["bracket", "--n", "1", "--sigma", "0.3"]])
def test_domain_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "domain" in err


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_config_precedence(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma": 0.19, "dr": {"n": [5000]}}))
    doc = run_json(capsys, "dr", "--config", str(cfg))
    assert doc["summary"]["dr_db"] == pytest.approx(82.51, abs=0.05)
    doc = run_json(capsys, "dr", "--config", str(cfg), "--n", "1000")
    assert doc["summary"]["dr_db"] == pytest.approx(73.07, abs=0.05)


def test_config_beats_preset(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"snr-curve": {"sigma": [0.1]}}))
    doc = run_json(capsys, "snr-curve", "--figure", "4", "--config", str(cfg), "--theta-log", "1:10:3")
    assert doc["summary"]["series"] == 1


@pytest.mark.parametrize("content", ['{"bogus": 1}', "[1, 2]", "{not json", '{"dr": {"taus": "1"}}',
                                     '{"dr": {"cis": "yes"}}'])
def test_config_errors(capsys, tmp_path, content):
    cfg = tmp_path / "c.json"
    cfg.write_text(content)
    code, _, _ = run(capsys, "dr", "--config", str(cfg))
    assert code == 1


def test_env_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    code, out, _ = run(capsys, "dr")
    assert code == 0
    text = (tmp_path / "env" / "dr.csv").read_text()
    assert "wrote" in out and "dr_db" in out
    assert float(csv_rows(text)[0]["dr_db"]) == pytest.approx(73.07, abs=0.05)
    code, _, _ = run(capsys, "dr", "--out", str(tmp_path / "flag"))
    assert (tmp_path / "flag" / "dr.csv").exists()


def test_provenance(capsys, tmp_path):
    code, out, _ = run(capsys, "dr", "--n", "1000")
    head = comments(out)
    assert head[0] == f"# qisim {__version__}"
    assert head[1] == "# argv: qisim dr --n 1000"
    run(capsys, "simulate", "--size", "4", "--n", "2", "--seed", "9", "--out", str(tmp_path),
        "--format", "json")
    doc = json.loads((tmp_path / "simulate_sim.json").read_text())
    assert doc["provenance"]["seed"] == 9 and doc["provenance"]["version"] == __version__


def test_json_is_strict(capsys):
    _, out, _ = run(capsys, "snr-curve", "--n", "1", "--sigma", "0", "--theta-log", "1e-3:1e4:20",
                    "--format", "json")
    json.loads(out, parse_constant=lambda c: pytest.fail(f"non-standard JSON constant {c}"))


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "qisim", "dr", "--format", "json"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["summary"]["dr_db"] == pytest.approx(73.07, abs=0.05)
