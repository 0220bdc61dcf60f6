from __future__ import annotations

import logging

import pytest
import yaml

from rwwis.cli import EXIT_BUDGET, EXIT_FAIL, EXIT_INPUT, EXIT_OK, main

DRIFT = "dimension: 1\nstates: 1\nsteps:\n  - {offset: [1], matrix: [[0.6]]}\n  - {offset: [-1], matrix: [[0.4]]}\n"


def _config(tmp_path, **sections):
    cfg = {"walk": "w2-antipersistent", "out": str(tmp_path / "out")}
    cfg.update(sections)
    p = tmp_path / "run.yaml"
    p.write_text(yaml.safe_dump(cfg))
    return str(p)


def test_validate_pass_and_drift(tmp_path, capsys):
    assert main(["validate", "--walk", "ssrw2d"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out
    w = tmp_path / "drift.yaml"
    w.write_text(DRIFT)
    assert main(["validate", "--walk", str(w)]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "assumption (iii)" in out and "(iv)" not in out.split("FAIL:")[-1]


def test_malformed_walk_is_input_error(tmp_path, capsys):
    w = tmp_path / "bad.yaml"
    w.write_text("dimension: 1\nstates: 1\nsteps:\n  - {offset: [1], matrix: [[0.5]]}\n")
    assert main(["validate", "--walk", str(w)]) == EXIT_INPUT
    assert "sums to 0.5" in capsys.readouterr().err


def test_missing_config_and_walk(tmp_path, capsys):
    assert main(["validate", "--config", str(tmp_path / "none.yaml")]) == EXIT_INPUT
    assert main(["validate"]) == EXIT_INPUT


def test_analyze_writes_table(tmp_path, capsys):
    cfg = _config(tmp_path, analyze={"llt_n_grid": [16, 32]})
    assert main(["analyze", "--config", cfg]) == EXIT_OK
    out = capsys.readouterr().out
    assert "det sigma = 0.666666666667" in out and "index (periodicity) = 2" in out
    assert (tmp_path / "out" / "llt_profile.csv").exists()


def test_exact_outputs_identical_on_rerun_with_cache_hit(tmp_path, capsys, caplog):
    cfg = _config(tmp_path, exact={"N": 200, "method": "torus"})
    assert main(["exact", "--config", cfg]) == EXIT_OK
    out = tmp_path / "out"
    first = {f: (out / f).read_bytes() for f in ("ledger.csv", "ledger_reversed.csv", "first_return.csv")}
    with caplog.at_level(logging.INFO, logger="rwwis"):
        assert main(["exact", "--config", cfg]) == EXIT_OK
    assert any("cache hit" in r.message for r in caplog.records)
    for f, data in first.items():
        assert (out / f).read_bytes() == data


def test_exact_budget_error(tmp_path, capsys):
    assert main(["exact", "--walk", "ssrw3d", "-N", "100000", "--method", "dp",
                 "--out", str(tmp_path)]) == EXIT_BUDGET
    assert "required" in capsys.readouterr().err


def test_exact_rejects_drift(tmp_path, capsys):
    w = tmp_path / "drift.yaml"
    w.write_text(DRIFT)
    assert main(["exact", "--walk", str(w), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "(iii)" in capsys.readouterr().err


def test_simulate_requires_seed(tmp_path, capsys):
    cfg = _config(tmp_path, simulate={"trials": 100, "checkpoints": [2, 8]})
    assert main(["simulate", "--config", cfg]) == EXIT_INPUT
    assert "seed" in capsys.readouterr().err


def test_simulate_deterministic_across_workers(tmp_path, capsys):
    cfg = _config(tmp_path, simulate={"trials": 3000, "checkpoints": [2, 64], "histograms": [64]})
    assert main(["simulate", "--config", cfg, "--seed", "99"]) == EXIT_OK
    a = (tmp_path / "out" / "range_stats.csv").read_bytes()
    assert main(["simulate", "--config", cfg, "--seed", "99", "--workers", "4"]) == EXIT_OK
    assert (tmp_path / "out" / "range_stats.csv").read_bytes() == a
    assert (tmp_path / "out" / "histogram_n64.csv").exists()


def test_report_pass(tmp_path, capsys):
    cfg = _config(tmp_path, report={"N": 4096, "n_grid": [256, 512, 1024, 2048, 4096],
                                    "laws": [[1, 0], [0, 1], [0.5, 0.5]], "law_n_grid": [2, 5, 10, 20],
                                    "llt_n_grid": [64, 128, 256, 512]})
    assert main(["report", "--config", cfg]) == EXIT_OK
    text = (tmp_path / "out" / "verdicts.txt").read_text()
    assert "overall=PASS" in text and "note.scope=" in text
    for t in ("gamma1_sqrt_n", "E1_over_sqrt_n", "initial_law_spread", "llt_max_err_n32"):
        assert f"{t}=PASS" in text


def test_report_fail_exit_code(tmp_path, capsys):
    cfg = _config(tmp_path, report={"N": 256, "n_grid": [16, 32, 64, 128, 256],
                                    "constants": {"C_GAMMA1": 1e-6, "C_E1": 1e-6}})
    assert main(["report", "--config", cfg]) == EXIT_FAIL
    assert "overall=FAIL" in (tmp_path / "out" / "verdicts.txt").read_text()


@pytest.mark.parametrize("report, fragment", [
    ({"targets": [], "n_grid": [16]}, "empty target list"),
    ({"targets": ["Ed_over_n"], "n_grid": [16]}, "Ed_over_n"),
    ({"targets": ["gamma1_sqrt_n"]}, "n_grid"),
])
def test_report_input_errors(tmp_path, capsys, report, fragment):
    cfg = _config(tmp_path, report=report)
    assert main(["report", "--config", cfg]) == EXIT_INPUT
    assert fragment in capsys.readouterr().err


def test_shipped_configs_parse():
    from pathlib import Path

    for p in sorted((Path(__file__).parents[1] / "configs").glob("*.yaml")):
        cfg = yaml.safe_load(p.read_text())
        assert "walk" in cfg, p
