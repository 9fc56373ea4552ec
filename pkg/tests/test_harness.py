import json
import math

import numpy as np
import pytest

from linregret.harness import (ConfigError, DegenerateTraceError, ExperimentConfig, count_gap_intervals,
                               fit_regret_models, run_experiment, run_single)
from linregret.harness.cli import main
from linregret.harness.config import Diagnostics, EnvConfig, Hyper
from linregret.harness.export import CSV_HEADER, ExportError, export, load_trace, trace_to_csv, trace_to_svg
from linregret.harness.runner import RegretTrace, episode_rng, sweep, tune_beta_scale
from linregret.oracle import solve_optimal

HARD = EnvConfig(kind="hard", d=3, H=3, gap=0.05)


def cfg(alg="lsvi-ucb", **kw):
    base = dict(env=HARD, algorithm=alg, K=50, seeds=(0,))
    base.update(kw)
    return ExperimentConfig(**base).validate()


@pytest.fixture(scope="module")
def short_traces():
    return {alg: run_single(cfg(alg, K=300, diagnostics=Diagnostics(decomposition=True,
                                                                     linalg_check_every=50,
                                                                     ridge_check=True)), 3)
            for alg in ("lsvi-ucb", "ucrl-vtr")}


@pytest.mark.parametrize("alg", ["lsvi-ucb", "ucrl-vtr"])
def test_single_episode(alg):
    tr = run_single(cfg(alg, K=1), 0)
    assert tr.cum_regret[0] == tr.regret[0]
    assert tr.states.shape == (1, 4) and tr.actions.shape == (1, 3)


@pytest.mark.parametrize("alg", ["lsvi-ucb", "ucrl-vtr"])
def test_trace_invariants(short_traces, alg):
    tr = short_traces[alg]
    assert np.all(np.diff(tr.cum_regret) >= 0)
    assert np.all(tr.regret >= 0)
    assert tr.decomposition_error <= 1e-10
    assert tr.inverse_error <= 1e-9
    assert tr.ridge_ok
    assert tr.potential_violations == 0
    assert np.all(tr.states[:, 0] == 0)
    assert np.all(tr.suboptimality >= -1e-12)


@pytest.mark.parametrize("alg", ["lsvi-ucb", "ucrl-vtr"])
def test_determinism(alg):
    c = cfg(alg, K=40)
    a, b = run_single(c, 5), run_single(c, 5)
    assert a == b
    assert trace_to_csv(a) == trace_to_csv(b)
    assert trace_to_svg(a) == trace_to_svg(b)


def test_trajectories_independent_of_diagnostics():
    a = run_single(cfg(K=30), 2)
    b = run_single(cfg(K=30, diagnostics=Diagnostics(optimism=False, confidence_set=False,
                                                     decomposition=True)), 2)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.regret, b.regret)


def test_episode_streams():
    x = episode_rng(3, 7).random(4)
    assert np.array_equal(x, episode_rng(3, 7).random(4))
    assert not np.array_equal(x, episode_rng(3, 8).random(4))
    assert not np.array_equal(x, episode_rng(4, 7).random(4))


@pytest.mark.parametrize("alg", ["lsvi-ucb", "ucrl-vtr"])
def test_greedy_locks_in(alg):
    # seeded reference: with no bonus both agents stay on a sub-optimal action
    for tr in run_experiment(cfg(alg, K=400, seeds=(0, 1, 2), hyper=Hyper(c_beta=0.0),
                                 diagnostics=Diagnostics(optimism=False, confidence_set=False))):
        assert tr.regret[-100:].mean() > 0


@pytest.mark.parametrize("alg,c", [("lsvi-ucb", 0.001), ("ucrl-vtr", 0.01)])
def test_regret_per_episode_decreases_with_tuned_bonus(alg, c):
    for tr in run_experiment(cfg(alg, K=2000, seeds=(0, 1, 2), hyper=Hyper(c_beta=c))):
        assert tr.regret[-500:].mean() < tr.regret[:500].mean()


def test_optimal_policy_trace_has_zero_counts():
    c = cfg(K=10)
    env = c.build_env()
    sol = solve_optimal(env)
    tr = run_single(c, 0, env, sol)
    tr.actions[:] = sol.policy[np.arange(3)[None, :], tr.states[:, :3]]
    tr.suboptimality[:] = 0.0
    counts = count_gap_intervals(tr, sol)
    assert not counts.interval_counts.any() and not counts.threshold_counts.any()


@pytest.mark.parametrize("alg", ["lsvi-ucb", "ucrl-vtr"])
def test_count_properties(short_traces, alg):
    tr = short_traces[alg]
    sol = solve_optimal(cfg(alg).build_env())
    counts = count_gap_intervals(tr, sol)
    assert counts.N == math.ceil(math.log2(3 / 0.1))
    assert np.all(np.diff(counts.threshold_counts, axis=1) <= 0)
    assert np.array_equal(counts.first_half + counts.second_half, counts.threshold_counts)
    assert counts.within_bounds()
    # interval counts partition the episodes with a positive realized gap
    gaps = sol.gaps[np.arange(3)[None, :], tr.states[:, :3], tr.actions]
    assert np.array_equal(counts.interval_counts.sum(axis=1), (gaps > 1e-9).sum(axis=0))


def test_counts_need_gap():
    from linregret.mdp import TabularMdp
    from linregret.oracle import GapUndefinedError
    sol = solve_optimal(TabularMdp(np.ones((1, 1, 2, 1)), np.zeros((1, 1, 2)), np.array([1.0])))
    with pytest.raises(GapUndefinedError):
        count_gap_intervals(None, sol)


def test_fit_synthetic_models():
    k = np.arange(1, 1001, dtype=float)
    fit = fit_regret_models(5 * np.log(k))
    assert fit.preferred == "log" and fit.log_r2 >= 0.999
    assert fit.log_coef[1] == pytest.approx(5.0, abs=1e-9)
    assert fit.window == (500, 1000)
    assert fit_regret_models(5 * np.sqrt(k)).preferred == "sqrt"


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_regret_models(np.arange(50.0))
    with pytest.raises(DegenerateTraceError):
        fit_regret_models(np.ones(200))


def test_csv_export(tmp_path, short_traces):
    tr = short_traces["lsvi-ucb"]
    path = export(tr, "csv", tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == tr.K + 1
    ep, reg, cum, viol = lines[-1].split(",")
    assert int(ep) == tr.K and float(cum) == tr.cum_regret[-1]


def test_json_round_trip(tmp_path, short_traces):
    for tr in short_traces.values():
        path = export(tr, "json", tmp_path / f"{tr.algorithm}.json")
        back = load_trace(path)
        assert back == tr
        assert np.array_equal(back.regret, tr.regret)
        assert back.gap_min == tr.gap_min


def test_json_round_trip_infinite_gap():
    tr = run_single(cfg(K=2), 0)
    tr.gap_min = float("inf")
    assert RegretTrace.from_dict(json.loads(json.dumps(tr.to_dict()))).gap_min == float("inf")


def test_svg_and_other_exports(tmp_path, short_traces):
    tr = short_traces["ucrl-vtr"]
    svg = export(tr, "svg-curve", tmp_path / "a.svg").read_text()
    assert svg.startswith("<svg") and "ln(episode)" in svg
    counts = count_gap_intervals(tr, solve_optimal(cfg("ucrl-vtr").build_env()))
    doc = json.loads(export(counts, "json", tmp_path / "c.json").read_text())
    assert doc["N"] == counts.N
    fit = fit_regret_models(tr)
    assert json.loads(export(fit, "json", tmp_path / "f.json").read_text())["preferred"] == fit.preferred
    with pytest.raises(ValueError):
        export(fit, "csv", tmp_path / "f.csv")


def test_export_io_error(tmp_path, short_traces):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ExportError, match="file"):
        export(short_traces["lsvi-ucb"], "csv", blocker / "sub" / "t.csv")


@pytest.mark.parametrize("bad", [
    dict(algorithm="dqn"),
    dict(K=0),
    dict(seeds=()),
    dict(formats=("png",)),
    dict(hyper=Hyper(delta=1.0)),
    dict(hyper=Hyper(c_beta=-1.0)),
    dict(env=EnvConfig(kind="hard", d=3, H=3, gap=0.1)),
    dict(env=EnvConfig(kind="random-mixture", d=2, H=2, S=3, A=2)),
    dict(schema_version=2),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**{**dict(env=HARD), **bad}).validate()


def test_config_json_round_trip(tmp_path):
    c = cfg("ucrl-vtr", hyper=Hyper(c_beta=0.1, delta_preset="union-bound"), seeds=(1, 2))
    path = tmp_path / "c.json"
    path.write_text(c.to_json())
    back = ExperimentConfig.load(path)
    assert back == c
    assert back.delta == pytest.approx(1 / (2 * 50 * 51 * 27))
    doc = json.loads(c.to_json())
    del doc["schema_version"]
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(doc)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**json.loads(c.to_json()), "bogus": 1})


def test_random_env_configs():
    lin = cfg(env=EnvConfig(kind="random-linear", d=2, H=2, S=3, A=2, seed=1), K=20)
    mix = cfg("ucrl-vtr", env=EnvConfig(kind="random-mixture", d=2, H=2, S=3, A=2, seed=1), K=20)
    for c in (lin, mix):
        tr = run_single(c, 0)
        assert tr.K == 20 and np.all(tr.regret >= 0)


def test_sweep_and_tuning():
    c = cfg(K=20, seeds=(0, 1), sweep_c_beta=(1.0, 0.0))
    res = sweep(c)
    assert list(res) == [1.0, 0.0]
    assert all(len(v) == 2 for v in res.values())
    best = tune_beta_scale(res)
    means = {k: np.mean([t.cum_regret[-1] for t in v]) for k, v in res.items()}
    assert means[best] == min(means.values())


def test_parallel_matches_serial():
    c = cfg(K=20, seeds=(0, 1))
    serial = run_experiment(c)
    parallel = run_experiment(c.with_overrides(workers=2))
    assert [trace_to_csv(t) for t in serial] == [trace_to_csv(t) for t in parallel]


def _write_cfg(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(cfg(**kw).to_json())
    return path


def test_cli_run_and_report(tmp_path, capsys):
    path = _write_cfg(tmp_path, K=20)
    out = tmp_path / "out"
    assert main(["run", str(path), "--seed", "4", "--out", str(out), "--format", "csv", "json"]) == 0
    assert (out / "lsvi-ucb_seed4.csv").exists()
    assert main(["report", str(out / "lsvi-ucb_seed4.json")]) == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["seed"] == 4 and "peeling" in line and "concentration_reference" in line


def test_cli_sweep(tmp_path, capsys):
    path = _write_cfg(tmp_path, K=10)
    out = tmp_path / "sw"
    assert main(["sweep", str(path), "--out", str(out), "--c-beta", "1", "0.5", "--episodes", "5"]) == 0
    doc = json.loads((out / "lsvi-ucb_sweep.json").read_text())
    assert {r["c_beta"] for r in doc["runs"]} == {1.0, 0.5}
    assert doc["tuned_c_beta"] in (1.0, 0.5)


def test_cli_exit_codes(tmp_path):
    assert main(["bogus"]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "algorithm": "nope"}))
    assert main(["run", str(bad)]) == 2
    assert main(["report", str(tmp_path / "missing_trace.json")]) == 1
