import csv
import json

import pytest

from hmot.cli import EXIT_FAIL, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, EXIT_SCALE, main
from conftest import CONFIGS, DATA


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(text):
    return json.loads(text)


def strip_timing(d):
    d = dict(d)
    d.pop("timing", None)
    return d


def test_bounds_toy(capsys, tmp_path):
    code, out, _ = run(capsys, "bounds", "--config", CONFIGS / "toy_t2.json", "--out", tmp_path / "r.json",
                       "--couplings", tmp_path / "q")
    assert code == EXIT_OK
    rep = report(out)
    assert rep["values"] == {"inf": 0.75, "sup": 0.75}
    assert rep["schema_version"] == "1.0" and rep["warnings"] == []
    assert report((tmp_path / "r.json").read_text())["values"] == rep["values"]
    assert (tmp_path / "q_sup.csv").read_text().startswith("x1,x2,weight")


def test_bounds_is_deterministic(capsys):
    a = report(run(capsys, "bounds", "--config", CONFIGS / "uniform_sweep.json", "--sense", "sup")[1])
    b = report(run(capsys, "bounds", "--config", CONFIGS / "uniform_sweep.json", "--sense", "sup")[1])
    assert strip_timing(a) == strip_timing(b)


def test_flag_overrides(capsys):
    code, out, _ = run(capsys, "bounds", "--config", CONFIGS / "toy_t2.json", "--mode", "ot", "--sense", "sup")
    rep = report(out)
    assert code == EXIT_OK and rep["mode"] == "ot" and list(rep["values"]) == ["sup"]


def test_usage_and_config_errors(capsys, tmp_path):
    assert run(capsys, "bounds")[0] == EXIT_INPUT
    assert run(capsys, "bounds", "--config", tmp_path / "missing.json")[0] == EXIT_INPUT
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"marginals": [{"atoms": [[0, 1]]}, {"atoms": [[0, 1]]}], "payoff": "pos(S2 - )"}))
    code, _, err = run(capsys, "bounds", "--config", bad)
    assert code == EXIT_INPUT and "payoff" in err and "offset 9" in err


def test_infeasible_reports_diagnosis(capsys):
    code, out, _ = run(capsys, "bounds", "--config", CONFIGS / "dirac_jump.json")
    assert code == EXIT_INFEASIBLE
    rep = report(out)
    assert rep["diagnosis"]["culprit"] in ("homogeneity", "martingale")
    assert any(w["code"] == "W002" for w in rep["warnings"])


def test_scale_cap_env(capsys, monkeypatch):
    monkeypatch.setenv("HMOT_MAX_VARS", "10")
    code, out, _ = run(capsys, "bounds", "--config", CONFIGS / "uniform_sweep.json")
    assert code == EXIT_SCALE and report(out)["status"] == "scale_limit"


def test_sweep_csv(capsys, tmp_path):
    out_csv = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "sweep", "--config", CONFIGS / "uniform_sweep.json", "--steps", "2,3",
                       "--out", out_csv, "--report", tmp_path / "rep.json")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out_csv.open()))
    assert [r["k"] for r in rows] == ["2", "3"]
    assert rows[0]["hmot_sup"] == rows[0]["mot_sup"]
    rep = report((tmp_path / "rep.json").read_text())
    assert any(w["code"] == "W001" for w in rep["warnings"])


def test_sweep_over_cap_exports(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("HMOT_MAX_VARS", "100")
    code, _, _ = run(capsys, "sweep", "--config", CONFIGS / "uniform_sweep.json", "--steps", "2,3",
                     "--out", tmp_path / "s.csv")
    assert code == EXIT_SCALE
    assert (tmp_path / "sweep_k3_mot.mps").exists() and (tmp_path / "sweep_k3_hmot.mps").exists()
    rows = list(csv.DictReader((tmp_path / "s.csv").open()))
    assert rows[0]["mot_sup"] != "" and rows[1]["mot_sup"] == ""


def test_check_hom_exit_codes(capsys):
    code, out, _ = run(capsys, "check-hom", "--config", CONFIGS / "mixture_switching.json",
                       "--coupling", CONFIGS / "mixture_switching.csv")
    assert code == EXIT_FAIL
    v = [x for x in report(out)["violations"] if x["state"] == 0.0][0]
    assert v["kernel_s"] == [0.5, 0.5] and v["kernel_t"] == [0.75, 0.25]
    code, _, _ = run(capsys, "check-hom", "--config", CONFIGS / "mixture_homogeneous.json",
                     "--coupling", CONFIGS / "mixture_homogeneous.csv")
    assert code == EXIT_OK


def test_check_hom_grid_mismatch(capsys, tmp_path):
    bad = tmp_path / "q.csv"
    bad.write_text("x1,x2,weight\n0,1,1\n")
    code, _, err = run(capsys, "check-hom", "--config", CONFIGS / "mixture_homogeneous.json", "--coupling", bad)
    assert code == EXIT_INPUT and "grid mismatch" in err


def test_hedge(capsys):
    code, out, _ = run(capsys, "hedge", "--config", CONFIGS / "toy_t2.json", "--sense", "sup")
    rep = report(out)
    assert code == EXIT_OK
    assert rep["dual_gaps"]["sup"] <= 1e-7
    assert rep["verification"]["sup"]["min_slack"] >= -1e-7


def test_export_matches_golden(capsys, tmp_path):
    code, out, _ = run(capsys, "export", "--config", CONFIGS / "toy_t2.json", "--out", tmp_path / "toy.mps")
    assert code == EXIT_OK
    assert out.splitlines()[:3] == ["variables 4", "rows 6", "nonzeros 12"]
    assert (tmp_path / "toy.mps").read_text().replace("toy", "mot") == (DATA / "toy_mot.mps").read_text()


def test_export_lp_text(capsys, tmp_path):
    code, _, _ = run(capsys, "export", "--config", CONFIGS / "toy_t2.json", "--export-format", "lp",
                     "--out", tmp_path / "toy.lp")
    assert code == EXIT_OK and "Subject To" in (tmp_path / "toy.lp").read_text()


def test_pen_command(capsys, tmp_path):
    out_csv = tmp_path / "pen.csv"
    code, _, _ = run(capsys, "pen", "--config", CONFIGS / "mixture_homogeneous.json", "--r", "0.5,2",
                     "--sense", "sup", "--out", out_csv, "--max-iter", "50")
    assert code == EXIT_OK
    rows = list(csv.DictReader(out_csv.open()))
    assert [r["r"] for r in rows] == ["0.5", "2.0"]
    assert (tmp_path / "pen_trace_sup_0.csv").exists() and (tmp_path / "pen_trace_sup_1.csv").exists()


def test_feasibility(capsys):
    code, out, _ = run(capsys, "feasibility", "--config", CONFIGS / "dirac_jump.json")
    assert code == EXIT_INFEASIBLE and report(out)["feasible"] is False
    code, out, _ = run(capsys, "feasibility", "--config", CONFIGS / "bs_chain_g30.json", "--martingale")
    assert code == EXIT_OK and report(out)["feasible"] is True


@pytest.mark.parametrize("name", ["uniform_sweep", "bs_chain", "bs_chain_g30", "bs_independent",
                                  "bs_chain_mu3x4", "toy_t2", "mixture_switching", "mixture_homogeneous",
                                  "dirac_jump"])
def test_shipped_configs_load(name):
    from hmot.config import load_config

    assert load_config(CONFIGS / f"{name}.json").spec is not None
