import csv
import os

import pytest
import yaml

from radwave.cli import main


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _summary(out):
    with open(os.path.join(out, "summary.txt")) as fh:
        return dict(line.split(" = ", 1) for line in fh.read().splitlines() if " = " in line)


def test_simulate_zero_data(tmp_path):
    out = str(tmp_path / "sim")
    assert main(["simulate", "--eps", "0", "--out", out]) == 0
    s = _summary(out)
    assert float(s["energy_initial"]) == 0.0 and float(s["z_sum_max"]) == 0.0
    assert s["blowup"].startswith("none")
    for name in ("manifest.txt", "summary.txt", "series.csv", "final_state.csv"):
        assert os.path.exists(os.path.join(out, name))


def test_simulate_blowup_reported(tmp_path):
    cfg = _write(tmp_path, "c.yaml", "f: gaussian:3,0.5\neps: 2.0\nT: 3.0\ndr: 0.02\n")
    out = str(tmp_path / "sim")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    assert _summary(out)["blowup"].startswith("threshold")


@pytest.mark.parametrize("text", [
    "colour: red\n",
    "T: {a: 1}\n",
    "dr: -1\n",
    "f: sinc:1,2\n",
    "[1, 2]\n",
    "T: [unclosed\n",
])
def test_bad_configs_exit_2(tmp_path, text, capsys):
    cfg = _write(tmp_path, "bad.yaml", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "invalid configuration" in capsys.readouterr().err


def test_flag_not_applicable(tmp_path):
    assert main(["decay", "--eps", "0.1", "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--threads", "0", "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml"),
                 "--out", str(tmp_path / "o")]) == 2


def test_memory_cap(tmp_path, monkeypatch):
    monkeypatch.setenv("RADWAVE_MEMORY_CAP_MB", "0.01")
    assert main(["simulate", "--dr", "0.001", "--out", str(tmp_path / "o")]) == 2


def test_manifest_is_a_replayable_config(tmp_path):
    cfg = _write(tmp_path, "c.yaml", "T: 4.0\ndr: 0.1\neps: 0.05\n")
    a = str(tmp_path / "a")
    assert main(["simulate", "--config", cfg, "--out", a]) == 0
    with open(os.path.join(a, "manifest.txt")) as fh:
        manifest = fh.read()
    loaded = yaml.safe_load(manifest)
    assert loaded["subcommand"] == "simulate" and loaded["T"] == 4.0
    b = str(tmp_path / "b")
    assert main(["simulate", "--config", os.path.join(a, "manifest.txt"), "--out", b]) == 0
    for name in ("series.csv", "final_state.csv", "manifest.txt", "summary.txt"):
        with open(os.path.join(a, name), "rb") as fa, open(os.path.join(b, name), "rb") as fb:
            assert fa.read() == fb.read()


def test_verify_table(tmp_path):
    cfg = _write(tmp_path, "v.yaml", "n_seeds: 2\nT: 20.0\ndr: 0.2\nids: [E2.1, E4.3]\n")
    out = str(tmp_path / "v")
    assert main(["verify-estimates", "--config", cfg, "--out", out]) == 0
    rows = _rows(os.path.join(out, "battery.csv"))
    assert rows[0][:2] == ["estimate_id", "seed"] and "max_ratio" in rows[0]
    assert "tail_slope" in rows[0]
    assert len(rows) == 1 + 4


def test_picard_csv(tmp_path):
    cfg = _write(tmp_path, "p.yaml", "T: 10.0\ndr: 0.1\n")
    out = str(tmp_path / "p")
    assert main(["picard", "--config", cfg, "--out", out]) == 0
    rows = _rows(os.path.join(out, "picard.csv"))
    assert rows[0][0] == "k" and len(rows) >= 3
    s = _summary(out)
    assert s["converged"] == "True"
    assert float(s["max_diff_direct"]) <= 1e-11


def test_lifespan_sweep_and_fit_block(tmp_path):
    cfg = _write(tmp_path, "l.yaml",
                 "eps_list: [0.5, 0.4, 0.3, 0.25, 0.2]\ndr: 0.05\nrefine: false\n")
    out = str(tmp_path / "l")
    assert main(["lifespan", "--config", cfg, "--out", out]) == 0
    rows = _rows(os.path.join(out, "lifespan.csv"))
    assert len(rows) >= 1 + 5
    s = _summary(out)
    assert "c_hat" in s and "r_squared" in s
    assert float(s["c_hat"]) > 0


def test_decay_outputs(tmp_path):
    cfg = _write(tmp_path, "d.yaml", "dr: 0.05\nT: 12.0\nn_seeds: 2\nbound_T: 10.0\nbound_dr: 0.1\n")
    out = str(tmp_path / "d")
    assert main(["decay", "--config", cfg, "--out", out]) == 0
    assert len(_rows(os.path.join(out, "local_bound.csv"))) == 3
    assert len(_rows(os.path.join(out, "decay_series.csv"))) > 16
