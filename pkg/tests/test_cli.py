import json
import subprocess
import sys

import pytest

from oppaoi import io
from oppaoi.cli import ExperimentSpec, build_parser, fig3_checks, fig4_grid, main


def _run(*args, env=None):
    return main(list(args))


def test_parser_subcommands():
    ap = build_parser()
    for kind in ("fig3", "fig4", "validate", "optimize", "simulate", "moments"):
        ns = ap.parse_args([kind, "--seed", "5", "--out", "x", "--strict", "--no-pathloss",
                            "--grid", "7", "--cycles", "10", "--config", "c.cfg"])
        assert ns.kind == kind and ns.seed == 5 and ns.grid == 7 and ns.strict


def test_spec_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentSpec("fig3", tmp_path, ptx=[])
    with pytest.raises(ValueError):
        ExperimentSpec("fig9", tmp_path)
    with pytest.raises(ValueError):
        ExperimentSpec("fig3", tmp_path, seed=-1)
    assert ExperimentSpec("fig3", tmp_path / "new").out.is_dir()


def test_table_round_trip(tmp_path):
    rows = [{"N": 3, "x": 0.1 + 0.2, "ok": True, "tag": "a"},
            {"N": 4, "x": 1e-300, "ok": False, "tag": "b"}]
    io.write_table(tmp_path / "t.csv", ["N", "x", "ok", "tag"], rows,
                   units={"N": "-", "x": "s", "ok": "flag", "tag": "-"},
                   meta={"seed": 3, "params": {"a": 1.5}}, title="demo")
    meta, back = io.read_table(tmp_path / "t.csv")
    assert back == rows
    assert meta == {"seed": 3, "params": {"a": 1.5}}


def test_json_is_canonical():
    assert io.dumps({"b": float("nan"), "a": [1, 2.5]}) == io.dumps({"a": [1, 2.5], "b": None})


def test_moments_command(tmp_path):
    assert _run("moments", "--out", str(tmp_path), "--grid", "12") == 0
    meta, rows = io.read_table(tmp_path / "moments.csv")
    assert len(rows) == 12 and meta["command"] == "moments" and meta["seed"] == 0
    assert all(a["E_T"] > b["E_T"] for a, b in zip(rows, rows[1:]))


def test_simulate_and_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("AOI_N_DEVICES", "4")
    assert _run("simulate", "--out", str(tmp_path), "--cycles", "2000", "--seed", "9") == 0
    rep = json.loads((tmp_path / "simulate.json").read_text())
    assert rep["n_devices"] == 4 and rep["params"]["n_devices"] == 4 and rep["seed"] == 9
    assert (tmp_path / "simulate_cycles.csv").exists()


def test_config_file_and_no_pathloss(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("tx_power = 0.5\n")
    assert _run("moments", "--config", str(cfg), "--no-pathloss", "--out", str(tmp_path),
                "--grid", "3") == 0
    meta, _ = io.read_table(tmp_path / "moments.csv")
    assert meta["params"]["tx_power"] == 0.5 and meta["params"]["path_loss"] is False


def test_determinism_optimize_and_simulate(tmp_path):
    for d in ("a", "b"):
        assert _run("optimize", "--out", str(tmp_path / d)) == 0
        assert _run("simulate", "--out", str(tmp_path / d), "--cycles", "3000", "--seed", "4") == 0
    for name in ("optimize.json", "simulate.json", "simulate_cycles.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fig3_small_and_replot(tmp_path):
    out = tmp_path / "f3"
    assert _run("fig3", "--out", str(out), "--ptx", "0.5,1", "--n-list", "3,4", "--strict") == 0
    meta, rows = io.read_table(out / "fig3.csv")
    assert [(r["N"], r["p_T_watts"]) for r in rows] == [(3, 0.5), (3, 1.0), (4, 0.5), (4, 1.0)]
    assert set(rows[0]) == {"N", "p_T_watts", "p_star", "r_star", "delta_star_seconds", "converged"}
    svg = (out / "fig3.svg").read_bytes()
    (out / "fig3.svg").unlink()
    assert _run("fig3", "--out", str(out), "--from-csv") == 0
    assert (out / "fig3.svg").read_bytes() == svg
    report = json.loads((out / "fig3.json").read_text())
    assert report["passed"] and report["seed"] == 0


def test_fig3_trend_failure_is_strict_only():
    rows = [{"N": 3, "p_T_watts": 1.0, "delta_star_seconds": 0.02, "converged": True},
            {"N": 4, "p_T_watts": 1.0, "delta_star_seconds": 0.01, "converged": False}]
    checks = {c["name"]: c for c in fig3_checks(rows)}
    assert not checks["increasing_in_N_p_T1.0"]["passed"]
    assert checks["all_cells_converged"]["flagged"] == [[4, 1.0]]


def test_fig4_small(tmp_path):
    out = tmp_path / "f4"
    assert _run("fig4", "--out", str(out), "--grid", "25", "--n-list", "3", "--strict") == 0
    _, curves = io.read_table(out / "fig4_curves.csv")
    assert [r["p"] for r in curves] == pytest.approx(list(fig4_grid(25)))
    report = json.loads((out / "fig4.json").read_text())
    assert report["passed"]
    svg = (out / "fig4.svg").read_bytes()
    assert _run("fig4", "--out", str(out), "--from-csv") == 0
    assert (out / "fig4.svg").read_bytes() == svg


def test_validate_and_mutation(tmp_path):
    assert _run("validate", "--out", str(tmp_path / "ok"), "--grid", "30", "--n-list", "3",
                "--cycles", "20000") == 0
    rep = json.loads((tmp_path / "ok" / "validate.json").read_text())
    assert rep["passed"] and all("tolerance" in c for c in rep["checks"])
    assert _run("validate", "--out", str(tmp_path / "bad"), "--grid", "30", "--n-list", "3",
                "--cycles", "20000", "--corrupt-q", "0.01") == 1
    rep = json.loads((tmp_path / "bad" / "validate.json").read_text())
    assert not rep["passed"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "oppaoi", "moments", "--out", str(tmp_path),
                          "--grid", "3"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
