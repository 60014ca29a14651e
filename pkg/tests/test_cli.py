import json
import math
import os

import pytest

from resonance import cli


def _write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "model": {"family": "cubic_band", "T": 2 * math.pi, "N": 2,
                  "params": {"forcing": 0.5}},
        "theorem": "main",
        "grids": {"tau_points": 32},
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


# --------------------------------------------------------------------------
# config validation


def test_config_requires_period():
    with pytest.raises(cli.ConfigError, match="model.T"):
        cli.validate_config({"model": {"N": 2, "family": "cubic_band"}})


def test_config_rejects_unknown_keys():
    with pytest.raises(cli.ConfigError, match="unknown keys"):
        cli.validate_config({"model": {"T": 1.0, "N": 1, "family": "cubic_band",
                                       "bogus": 1}})
    with pytest.raises(cli.ConfigError, match="unknown keys"):
        cli.validate_config({"model": {"T": 1.0, "N": 1, "family": "cubic_band"},
                             "extra_section": {}})


def test_config_requires_exactly_one_model_source():
    base = {"T": 1.0, "N": 1}
    with pytest.raises(cli.ConfigError, match="exactly one"):
        cli.validate_config({"model": dict(base)})
    with pytest.raises(cli.ConfigError, match="exactly one"):
        cli.validate_config({"model": dict(base, f="x", family="cubic_band")})


def test_config_rejects_unknown_theorem():
    with pytest.raises(cli.ConfigError, match="theorem"):
        cli.validate_config({"model": {"T": 1.0, "N": 1, "f": "x"},
                             "theorem": "nope"})


def test_missing_period_exits_with_config_code(tmp_path):
    cfg = {"model": {"family": "cubic_band", "N": 2}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    code = cli.main(["verify", "--config", str(path)])
    assert code == cli.EXIT_CONFIG


def test_tol_override_parsing(tmp_path):
    cfg = cli.validate_config({"model": {"T": 1.0, "N": 1, "f": "x"}})
    out = cli.apply_tol_overrides(cfg, ["rtol=1e-9"])
    assert out["tolerances"]["rtol"] == 1e-9
    with pytest.raises(cli.ConfigError):
        cli.apply_tol_overrides(cfg, ["nonsense=1"])


def test_expression_model_roundtrip():
    cfg = cli.validate_config({
        "model": {"f": "(1+sin(t)^2)*x^5 + x^3", "T": 2 * math.pi, "N": 2}})
    model = cli.build_model(cfg)
    assert model.f(0.0, -2.0) == pytest.approx(-40.0)


def test_piecewise_model_split():
    cfg = cli.validate_config({
        "model": {"f_left": "x^3", "f_right": "2*x", "T": 2 * math.pi, "N": 1}})
    model = cli.build_model(cfg)
    assert model.f(0.0, -2.0) == -8.0
    assert model.f(0.0, 3.0) == 6.0


# --------------------------------------------------------------------------
# subcommands


def test_spectrum_command_writes_curves(tmp_path):
    code = cli.main(["spectrum", "--T", "6.283185307179586", "--jmax", "3",
                     "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "j,mu,nu"
    assert len(lines) > 100


def test_verify_command_passes_band_model(tmp_path):
    cfg = _write_config(tmp_path)
    out = tmp_path / "out"
    code = cli.main(["verify", "--config", cfg, "--out", str(out)])
    assert code == 0
    report = (out / "report.txt").read_text()
    assert "sign.lower.verdict = pass" in report
    assert "sign.upper.verdict = pass" in report
    assert (out / "ll_lower.csv").exists()
    assert (out / "ll_upper.csv").exists()


def test_verify_gate_failure_names_window_check(tmp_path):
    # this nonlinearity mixes orders across t, so the window-ratio check
    # must fail under the abs-profile pipeline
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "model": {"f_left": "x^3 + sin(t)^2*x^5",
                  "f_right": "1.625*x + x^2/(1+x^2)",
                  "T": 2 * math.pi, "N": 2},
        "theorem": "main2",
        "grids": {"tau_points": 32},
    }))
    out = tmp_path / "out"
    code = cli.main(["verify", "--config", str(cfg_path), "--out", str(out)])
    report = (out / "report.txt").read_text()
    assert "window_ratio.passed = False" in report


def test_find_pipeline_stops_at_hypothesis_gate(tmp_path):
    cfg_path = tmp_path / "lin.json"
    cfg_path.write_text(json.dumps({
        "model": {"f": "x", "T": 2 * math.pi, "N": 1},
        "theorem": "main",
    }))
    out = tmp_path / "out"
    code = cli.main(["find", "--config", str(cfg_path), "--out", str(out)])
    assert code == cli.EXIT_HYPOTHESIS
    report = (out / "report.txt").read_text()
    assert "stage.hypotheses.verdict = fail" in report
    # no later stage ran
    assert "stage.solve" not in report


def test_sign_gate_failure_exit_code(tmp_path):
    cfg_path = tmp_path / "edge.json"
    cfg_path.write_text(json.dumps({
        "model": {"family": "resonant_edge", "T": 2 * math.pi, "N": 2},
        "theorem": "main",
        "grids": {"tau_points": 32},
    }))
    out = tmp_path / "out"
    code = cli.main(["find", "--config", str(cfg_path), "--out", str(out)])
    assert code == cli.EXIT_SIGN_CONDITION
    report = (out / "report.txt").read_text()
    assert "stage.sign_conditions.verdict = fail" in report
    assert "stage.solve" not in report


def test_full_pipeline_on_quintic_expression_model(tmp_path):
    # the uniform-order quintic left side with a midband linear tail walks
    # through every stage of the rectified-profile pipeline
    cfg_path = tmp_path / "quintic.json"
    cfg_path.write_text(json.dumps({
        "model": {"f_left": "(1+sin(t)^2)*x^5 + x^3",
                  "f_right": "1.625*x + x^2/(1+x^2)",
                  "T": 2 * math.pi, "N": 2},
        "theorem": "main2",
        "grids": {"tau_points": 32, "lambda_points": 17},
    }))
    out = tmp_path / "out"
    code = cli.main(["find", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    report = (out / "report.txt").read_text()
    assert "stage.hypotheses.verdict = pass" in report
    assert "stage.sign_conditions.verdict = pass" in report
    assert "stage.apriori.verdict = pass" in report
    assert "stage.solve.verdict = pass" in report
    assert "certificate.status = converged" in report
    for name in ("solution.csv", "events.csv", "path.csv",
                 "envelopes.csv", "maps.csv"):
        assert (out / name).exists()
    header = (out / "solution.csv").read_text().splitlines()[0]
    assert header == "t,x,y,rho,theta"
    assert (out / "events.csv").read_text().splitlines()[0] == "kind,t,x,y"


def test_sweep_aggregates_pass_and_fail_cells(tmp_path):
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps({
        "model": {"family": "cubic_band", "T": 2 * math.pi, "N": 2,
                  "params": {"forcing": 0.5}},
        "theorem": "main",
        "grids": {"tau_points": 32, "lambda_points": 17},
        "sweep": {"param": "model.params.forcing", "values": [0.5, 6.0]},
    }))
    out = tmp_path / "atlas_out"
    code = cli.main(["sweep", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0
    rows = (out / "atlas.csv").read_text().splitlines()
    assert rows[0].startswith("model.params.forcing")
    verdicts = [r.split(",")[1] for r in rows[1:]]
    assert verdicts[0] == "pass"
    assert verdicts[1].startswith("fail")


def test_parallel_map_respects_thread_env(monkeypatch):
    from resonance.util import parallel_map
    monkeypatch.setenv("RESONANCE_THREADS", "4")
    out = parallel_map(lambda v: v * v, range(25))
    assert out == [v * v for v in range(25)]
    monkeypatch.setenv("RESONANCE_THREADS", "1")
    assert parallel_map(lambda v: v * v, range(25)) == out


def test_floats_serialized_with_17_digits(tmp_path):
    from resonance.util import fmt_float
    v = 1.0 / 3.0
    assert fmt_float(v) == format(v, ".17g")
    assert float(fmt_float(v)) == v
