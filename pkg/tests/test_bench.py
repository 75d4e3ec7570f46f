"""Harness tests: metrics, trial pipeline, sweep aggregation, CSV round-trips."""

import numpy as np
import pytest

import pcnmf.bench as bench
from pcnmf import (
    ExperimentConfig,
    NumericFailureError,
    ScenarioConfig,
    SolverConfig,
    UndefinedMetricError,
    read_trials_csv,
    rmse_missing,
    rmse_missing_pooled,
    run_sweep,
    run_trial,
    scale_rows_to_reference,
    transition_count,
    write_summary_csv,
    write_trials_csv,
)


def tiny_experiment(**overrides):
    base = dict(
        scenario=ScenarioConfig(seed=42, n_pu=2, n_su=6, t_slots=30, noise_var=1e-8),
        solver=SolverConfig(beta=5e-3, rank=2, max_iters=60, rel_tol=0.0),
        trials=3,
        gamma_window=20,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


# -------------------------------------------------------------------- metrics

def test_rmse_zero_for_perfect_reconstruction():
    rng = np.random.default_rng(0)
    truth = rng.uniform(0, 1, (3, 5))
    mask = (rng.random((3, 5)) < 0.5).astype(float)
    assert rmse_missing(truth, truth, mask) == 0.0


def test_rmse_constant_error_single_sensor():
    truth = np.zeros((1, 6))
    rec = np.full((1, 6), 2.5)
    mask = np.array([[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]])
    assert rmse_missing(rec, truth, mask) == pytest.approx(2.5, abs=1e-15)


def test_rmse_matches_two_pass_oracle():
    rng = np.random.default_rng(1)
    truth = rng.uniform(0, 2, (4, 6))
    rec = rng.uniform(0, 2, (4, 6))
    mask = (rng.random((4, 6)) < 0.6).astype(float)
    per_sensor = []
    for r in range(4):
        errs = [
            (rec[r, t] - truth[r, t]) ** 2 for t in range(6) if mask[r, t] == 0
        ]
        if errs:
            per_sensor.append(np.sqrt(np.mean(errs)))
    assert rmse_missing(rec, truth, mask) == pytest.approx(
        np.mean(per_sensor), abs=1e-12
    )
    pooled = [
        (rec[r, t] - truth[r, t]) ** 2
        for r in range(4) for t in range(6) if mask[r, t] == 0
    ]
    assert rmse_missing_pooled(rec, truth, mask) == pytest.approx(
        np.sqrt(np.mean(pooled)), abs=1e-12
    )


def test_rmse_undefined_without_missing_entries():
    ones = np.ones((2, 3))
    with pytest.raises(UndefinedMetricError):
        rmse_missing(ones, ones, ones)
    with pytest.raises(UndefinedMetricError):
        rmse_missing_pooled(ones, ones, ones)


def test_transition_count_constant_row():
    assert transition_count(np.full((1, 8), 3.3), 0.5)[0] == 0


def test_transition_count_single_step():
    row = np.array([[1.0, 1.0, 3.0, 3.0]])
    assert transition_count(row, 1.0)[0] == 1


def test_transition_count_matches_scan_oracle():
    rng = np.random.default_rng(2)
    row = rng.uniform(0, 5, (1, 40))
    threshold = 0.8
    oracle = sum(
        1 for t in range(1, 40) if abs(row[0, t] - row[0, t - 1]) > threshold
    )
    assert transition_count(row, threshold)[0] == oracle


def test_scale_rows_recovers_permuted_scaled_reference():
    rng = np.random.default_rng(3)
    ref = rng.uniform(0, 3, (3, 25))
    est = ref[[2, 0, 1]] * np.array([[0.01], [5.0], [117.0]])
    scaled = scale_rows_to_reference(est, ref)
    assert np.allclose(scaled, ref[[2, 0, 1]], rtol=1e-12)


# --------------------------------------------------------------------- trials

def test_trial_degenerate_full_observation():
    cfg = ExperimentConfig(
        scenario=ScenarioConfig(seed=3, n_pu=2, n_su=8, t_slots=40, eta=1.0,
                                noise_var=0.0, p_obs=1.0),
        solver=SolverConfig(beta=0.0, rank=2, max_iters=4000, rel_tol=0.0),
        trials=1, gamma_window=40, methods=("pcnmf",),
    )
    res = run_trial(cfg, 0)[0]
    assert np.isnan(res.rmse) and np.isnan(res.rmse_pooled)
    assert not res.failed
    assert res.fit < 1e-6


def test_trial_records_are_deterministic():
    cfg = tiny_experiment()
    a = run_trial(cfg, 1)
    b = run_trial(cfg, 1)
    for ra, rb in zip(a, b):
        assert ra.method == rb.method
        assert ra.seed == rb.seed
        assert ra.rmse == rb.rmse
        assert ra.fit == rb.fit
        assert ra.iterations == rb.iterations


def test_trial_failure_is_tallied_not_raised(monkeypatch):
    real_solve = bench.solve

    def exploding_solve(s, cfg, **kwargs):
        if cfg.beta == 0.0:
            raise NumericFailureError(3)
        return real_solve(s, cfg, **kwargs)

    monkeypatch.setattr(bench, "solve", exploding_solve)
    cfg = tiny_experiment(trials=2)
    summary, trials = run_sweep(cfg)
    wnmf_rows = [r for r in summary if r.method == "wnmf"]
    assert wnmf_rows[0].trials_failed == 2 and wnmf_rows[0].trials_ok == 0
    assert np.isnan(wnmf_rows[0].mean_rmse)
    pc_rows = [r for r in summary if r.method == "pcnmf"]
    assert pc_rows[0].trials_failed == 0 and pc_rows[0].trials_ok == 2
    assert all(r.failed for r in trials if r.method == "wnmf")


# ---------------------------------------------------------------------- sweep

def test_sweep_single_point_matches_run_trial():
    cfg = tiny_experiment(trials=1, methods=("pcnmf",))
    summary, trials = run_sweep(cfg)
    direct = run_trial(cfg, 0)[0]
    assert len(summary) == 1 and len(trials) == 1
    assert trials[0].rmse == direct.rmse
    assert summary[0].mean_rmse == direct.rmse
    assert np.isnan(summary[0].stderr_rmse)


def test_sweep_row_count_is_values_times_methods():
    cfg = tiny_experiment(
        trials=2,
        sweep=(("noise_var", (1e-8, 1e-6, 1e-4)),),
    )
    summary, trials = run_sweep(cfg)
    assert len(summary) == 3 * 2
    assert len(trials) == 3 * 2 * 2


def test_sweep_full_observation_has_empty_rmse_cells(tmp_path):
    cfg = tiny_experiment(trials=2, sweep=(("p_obs", (1.0,)),))
    summary, _ = run_sweep(cfg)
    assert all(np.isnan(row.mean_rmse) for row in summary)
    path = tmp_path / "summary.csv"
    write_summary_csv(summary, path)
    lines = path.read_text().splitlines()
    for line in lines[1:]:
        fields = line.split(",")
        assert fields[3] == "" and fields[4] == ""


def test_sweep_parallel_equals_serial(tmp_path):
    cfg = tiny_experiment(trials=4)
    summary_1, trials_1 = run_sweep(cfg, jobs=1)
    summary_2, trials_2 = run_sweep(cfg, jobs=2)
    for a, b in zip(summary_1, summary_2):
        assert (a.sweep_param, a.sweep_value, a.method) == (
            b.sweep_param, b.sweep_value, b.method
        )
        assert a.mean_rmse == b.mean_rmse or (
            np.isnan(a.mean_rmse) and np.isnan(b.mean_rmse)
        )
        assert a.trials_ok == b.trials_ok
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_summary_csv(summary_1, p1, include_timing=False)
    write_summary_csv(summary_2, p2, include_timing=False)
    assert p1.read_bytes() == p2.read_bytes()
    for ta, tb in zip(trials_1, trials_2):
        assert ta.rmse == tb.rmse or (np.isnan(ta.rmse) and np.isnan(tb.rmse))


def test_emitted_csvs_round_trip_to_summary(tmp_path):
    cfg = tiny_experiment(trials=3, sweep=(("noise_var", (1e-8, 1e-5)),))
    summary, trials = run_sweep(cfg)
    trials_path = tmp_path / "trials.csv"
    write_trials_csv(trials, trials_path)
    parsed = read_trials_csv(trials_path)
    for row in summary:
        vals = np.array([
            r["rmse"] for r in parsed
            if r["sweep_param"] == row.sweep_param
            and r["sweep_value"] == row.sweep_value
            and r["method"] == row.method
            and not r["failed"] and not np.isnan(r["rmse"])
        ])
        if vals.size:
            assert float(np.mean(vals)) == row.mean_rmse
            if vals.size > 1:
                assert float(np.std(vals, ddof=1) / np.sqrt(vals.size)) == row.stderr_rmse
        else:
            assert np.isnan(row.mean_rmse)


def test_wnmf_method_is_solver_with_zero_penalty():
    # the baseline is the same pipeline with beta = 0: configuring the
    # "penalized" method with beta = 0 must reproduce it exactly
    cfg = tiny_experiment(solver=SolverConfig(beta=0.0, rank=2, max_iters=40,
                                              rel_tol=0.0))
    pc, wn = run_trial(cfg, 0)
    assert pc.method == "pcnmf" and wn.method == "wnmf"
    assert pc.rmse == wn.rmse
    assert pc.fit == wn.fit
    assert pc.iterations == wn.iterations


def test_run_trial_can_export_traces(tmp_path):
    cfg = tiny_experiment(trials=1)
    run_trial(cfg, 0, trace_dir=tmp_path)
    for method in ("pcnmf", "wnmf"):
        lines = (tmp_path / f"trace_0_{method}.csv").read_text().splitlines()
        assert lines[0] == "iter,fit,penalty,objective"
        assert len(lines) == 1 + cfg.solver.max_iters


def test_experiment_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        tiny_experiment(trials=0)
    with pytest.raises(ValueError):
        tiny_experiment(gamma_window=31)
    with pytest.raises(ValueError):
        tiny_experiment(methods=("pcnmf", "bogus"))
    with pytest.raises(ValueError):
        tiny_experiment(sweep=(("alpha", (2.0,)),))
    cfg = tiny_experiment(sweep=(("noise_var", (1e-6, 1e-5)),))
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
