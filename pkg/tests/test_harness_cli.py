import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowrate import harness_cli as H
from slowrate.harness_cli import (
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    TrialRecord,
    aggregate,
    emit_report,
    fit_loglog_slope,
    main,
    parse_report_csv,
    run_dalalyan_experiment,
    run_descent_study,
    run_landscape_diagnostic,
    run_scaling_experiment,
    trial_seed,
    tune_nonconvex_c,
)
from slowrate.penalties import SeparablePenalty


# --- seeds ------------------------------------------------------------------

def test_trial_seeds_distinct_over_a_million_pairs():
    ns = (16, 32, 64, 128, 256, 512, 1024, 2048)
    seeds = {trial_seed(42, n, t) for n in ns for t in range(125_000)}
    assert len(seeds) == 1_000_000
    assert all(0 <= s < 2 ** 63 for s in list(seeds)[:1000])


def test_pilot_seeds_disjoint_and_deterministic():
    main_ = {trial_seed(0, n, t) for n in (16, 32) for t in range(1000)}
    pilot = {trial_seed(0, n, t, "pilot") for n in (16, 32) for t in range(1000)}
    assert not main_ & pilot
    assert trial_seed(7, 16, 3) == trial_seed(7, 16, 3)
    assert trial_seed(7, 16, 3) != trial_seed(8, 16, 3)


# --- slopes -----------------------------------------------------------------

def test_slope_of_exact_power_laws():
    ns = [16, 32, 64, 128]
    assert fit_loglog_slope([(n, n ** -0.5) for n in ns])[0] == pytest.approx(0.5, abs=1e-12)
    s, se = fit_loglog_slope([(n, 7.3 / n) for n in ns])
    assert s == pytest.approx(1.0, abs=1e-12) and se == pytest.approx(0.0, abs=1e-12)


def test_slope_of_log_n_over_n():
    ns = [8, 16, 32, 64, 128, 256, 512]
    s, _ = fit_loglog_slope([(n, math.log(n) / n) for n in ns])
    oracle = -np.polyfit(np.log(ns), np.log([math.log(n) / n for n in ns]), 1)[0]
    # the local exponent is 1 - 1/log n, so the fit lands near 0.74 on this range
    assert s == pytest.approx(oracle, rel=1e-12)
    assert 0.7 < s < 0.8


def test_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_loglog_slope([(16, 0.1), (32, 0.05)])
    with pytest.raises(ValueError):
        fit_loglog_slope([(16, 0.1), (32, 0.0), (64, 0.01)])


# --- aggregation ------------------------------------------------------------

def welford(xs):
    n, mean, m2 = 0, 0.0, 0.0
    for x in xs:
        n += 1
        d = x - mean
        mean += d / n
        m2 += d * (x - mean)
    return mean, math.sqrt(m2 / (n - 1)) / math.sqrt(n)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=60),
       st.lists(st.booleans(), min_size=60, max_size=60))
def test_aggregation_matches_streaming_oracle(errs, fail):
    recs = [TrialRecord(16, i, i, "lasso", e if not fail[i] else math.nan, fail[i])
            for i, e in enumerate(errs)]
    ok = [e for e, f in zip(errs, fail) if not f]
    rep = aggregate(recs, ["lasso"], [16])
    row = rep.rows[0]
    assert row.trials == len(ok)
    assert rep.failures == [(16, "lasso", len(errs) - len(ok))]
    if len(ok) >= 2:
        mean, se = welford(ok)
        assert row.mean_error == pytest.approx(mean, rel=1e-12)
        assert row.std_error == pytest.approx(se, rel=1e-9, abs=1e-12 * mean)
    assert rep.slopes == {}


# --- config -----------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(trials=0),
    dict(n_values=(32, 16, 64)),
    dict(n_values=(16, 33, 64)),
    dict(estimators=("rwlasso",)),
    dict(estimators=("lasso", "lasso")),
    dict(nonconvex_selection="cv"),
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_json_roundtrip(tmp_path):
    cfg = ExperimentConfig(experiment="dalalyan", n_values=(8, 16, 32), trials=3, master_seed=5)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(p) == cfg
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"trials": 3, "bogus": 1})


# --- experiments ------------------------------------------------------------

SMALL = dict(n_values=(16, 32, 64), trials=3, master_seed=1, c_grid=(0.4, 3.2), pilot_trials=2)


def test_scaling_report_is_reproducible_and_roundtrips(tmp_path):
    a = run_scaling_experiment(ExperimentConfig(**SMALL, csv_path=str(tmp_path / "a.csv"),
                                                svg_path=str(tmp_path / "a.svg")))
    b = run_scaling_experiment(ExperimentConfig(**SMALL))
    assert emit_report(a) == emit_report(b)
    assert (tmp_path / "a.csv").read_bytes() == emit_report(b).encode()
    assert parse_report_csv(tmp_path / "a.csv") == a
    assert emit_report(a, "svg") == emit_report(b, "svg")
    svg = (tmp_path / "a.svg").read_text()
    assert svg.count("<polyline") == 4 and "log scale" in svg
    assert set(a.slopes) == {"l0", "lasso", "scad", "mcp"}
    assert a.meta["scad_C"] in (0.4, 3.2)
    assert all(r.trials == 3 for r in a.rows)


def test_report_roundtrip_17_digits():
    rows = [ReportRow(16, "x", 0.1 + 1e-17, 1 / 3, 5), ReportRow(32, "x", math.pi / 7, 2e-300, 5)]
    rep = ExperimentReport(rows, {"x": (0.123456789012345678, 1e-5)}, [(16, "x", 0), (32, "x", 2)])
    assert parse_report_csv(emit_report(rep)) == rep


def test_emit_errors(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ExperimentReport([], {}), "csv")
    rep = ExperimentReport([ReportRow(16, "x", 0.1, 0.01, 2)], {})
    with pytest.raises(OSError, match="missing"):
        emit_report(rep, "csv", tmp_path / "missing" / "r.csv")
    with pytest.raises(ValueError):
        emit_report(rep, "png")


def test_failed_trials_are_excluded_and_counted(monkeypatch):
    calls = {"k": 0}
    real = H.solve_l0

    def flaky(*a, **kw):
        calls["k"] += 1
        if calls["k"] % 2 == 0:
            raise np.linalg.LinAlgError("boom")
        return real(*a, **kw)

    monkeypatch.setattr(H, "solve_l0", flaky)
    rep = run_scaling_experiment(ExperimentConfig(n_values=(16,), trials=4, estimators=("l0",)))
    assert rep.rows[0].trials == 2
    assert rep.failures == [(16, "l0", 2)]
    assert sum(r.failed for r in rep.records) == 2


def test_tuned_c_minimizes_pilot_score():
    C, scores = tune_nonconvex_c(SeparablePenalty.scad(), (16, 32), 1.0, (0.1, 1.0, 3.2), 3, 0)
    assert C == min(scores, key=scores.get)
    assert set(scores) == {0.1, 1.0, 3.2}


def test_dalalyan_exact_fit():
    rep = run_dalalyan_experiment(ExperimentConfig(experiment="dalalyan", n_values=(8, 16, 32),
                                                   trials=4, master_seed=3))
    fits = [r.extras["exact_fit_residual"] for r in rep.trial_records(estimator="rwlasso")]
    assert len(fits) == 12 and max(fits) <= 1e-8
    # the unweighted Lasso has no exactly fitted coordinates
    other = [r.extras["exact_fit_residual"] for r in rep.trial_records(estimator="lasso")]
    assert max(other) > 1e-3


def test_descent_and_landscape_studies():
    d = run_descent_study(ExperimentConfig(experiment="descent", n_values=(16,), trials=2,
                                           lambda_grid=(0.0, 0.3)))
    assert all(r.extras["terminated"] for r in d.records)
    assert d.rows[0].mean_error > 0
    ls = run_landscape_diagnostic(ExperimentConfig(experiment="landscape", n_values=(16,), trials=2,
                                                   lambda_grid=(0.01, 0.3, 3.0)))
    assert all(r.extras["min_gap"] >= -1e-6 for r in ls.records)


# --- command line -----------------------------------------------------------

def test_cli_no_subcommand_is_usage_error(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_unknown_flag(capsys):
    assert main(["experiment", "scaling", "--bogus", "1"]) == 1
    assert "usage" in capsys.readouterr().err


def test_cli_bad_config_is_usage_error(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "scaling", "trials": 0}))
    assert main(["experiment", "scaling", "--config", str(p)]) == 1


def test_cli_experiment_writes_csv(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"c_grid": [3.2], "pilot_trials": 1}))
    out = tmp_path / "r.csv"
    code = main(["experiment", "scaling", "--n", "16,32,64", "--trials", "2", "--seed", "42",
                 "--estimators", "lasso,scad", "--out", str(out), "--config", str(cfg)])
    assert code == 0
    rep = parse_report_csv(out)
    assert [r.estimator for r in rep.rows[:2]] == ["lasso", "scad"]
    assert "tuned scad_C = 3.2" in capsys.readouterr().out


def test_cli_design_certify_corollary(capsys):
    code = main(["design", "certify", "--provenance", "corollary", "--n", "64", "--k", "2",
                 "--gamma", "0.25"])
    assert code == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["re_lower_bound"] >= 0.25 * (1 - 1e-9)


def test_cli_design_build_roundtrip(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["design", "build", "--provenance", "theorem2", "--n", "16", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["design", "certify", "--design", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["max_col_norm_ratio"] == pytest.approx(1.0)


def test_cli_runtime_failure_exit_code(capsys):
    # Theorem-1 builds need R >= 8 sigma / sqrt(n)
    assert main(["design", "build", "--provenance", "theorem1", "--n", "16", "--R", "0.1"]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["solve", "--estimator", "lasso", "--n", "32"],
    ["solve", "--estimator", "scad", "--n", "32", "--C", "3.2"],
    ["solve", "--estimator", "l0", "--n", "16"],
    ["solve", "--estimator", "rwlasso", "--n", "16"],
    ["descend", "--n", "16", "--lam", "0.3"],
    ["landscape", "--n", "16", "--lam", "0.1,1"],
])
def test_cli_commands_succeed(argv, tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(argv + ["--out", str(out)]) == 0
    json.loads(capsys.readouterr().out)
    assert any(tmp_path.iterdir())
