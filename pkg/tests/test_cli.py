from __future__ import annotations

import csv

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgdlab.cli import main
from dsgdlab.config import ConfigError, ExperimentConfig, load_config
from dsgdlab.topology import build_topology, metropolis_weights, save_matrix_csv, write_edge_list


def read_table(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# dsgdlab ") and lines[0].endswith(" v1")
    return list(csv.DictReader(lines[1:]))


def write_config(tmp_path, data) -> str:
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(data))
    return str(path)


# config


def test_default_config_round_trip():
    cfg = ExperimentConfig().validate()
    again = ExperimentConfig.parse(cfg.dump())
    assert again == cfg
    assert again.dump() == cfg.dump()


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 100),
    zeta=st.floats(0, 1e3, allow_nan=False),
    eta=st.floats(1e-8, 10, allow_nan=False),
    seeds=st.lists(st.integers(0, 2**31), min_size=1, max_size=4),
    variant=st.sampled_from(["fixed", "local_sgd", "pairwise", "loopless_local"]),
    use_target=st.booleans(),
)
def test_config_round_trip_property(n, zeta, eta, seeds, variant, use_target):
    data = {
        "problem": {"n": n, "zeta_bar2": zeta},
        "schedule": {"variant": variant, "tau": 2},
        "run": {"stepsize": eta, "seeds": seeds, "steps": None if use_target else 10,
                "target": 1e-3 if use_target else None},
    }
    cfg = ExperimentConfig.from_dict(data)
    assert ExperimentConfig.parse(cfg.dump()) == cfg


def test_lock_parses_back(tmp_path):
    cfg = ExperimentConfig().validate()
    assert ExperimentConfig.parse(cfg.lock()) == cfg
    assert "dsgdlab_version" in yaml.safe_load(cfg.lock())


@pytest.mark.parametrize(
    "data,path",
    [
        ({"problem": {"n": 0}}, "problem.n"),
        ({"problem": {"n": "many"}}, "problem.n"),
        ({"run": {"steps": 10, "target": 1e-3}}, "run"),
        ({"run": {"steps": None}}, "run"),
        ({"run": {"seeds": [0, -1]}}, "run.seeds"),
        ({"schedule": {"variant": "bogus"}}, "schedule.variant"),
        ({"schedule": {"variant": "mixture"}}, "schedule.matrices"),
        ({"sweep": {"topologies": ["ring", "star"]}}, "sweep.topologies[1]"),
        ({"output": {"formats": ["gif"]}}, "output.formats[0]"),
        ({"extra": {}}, "extra"),
        ({"tune": {"grid": 3}}, "tune.grid"),
    ],
)
def test_config_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(data)
    assert info.value.path == path


def test_overrides_beat_file(tmp_path):
    path = write_config(tmp_path, {"problem": {"n": 16, "d": 3}})
    cfg = load_config(path, ["problem.d=7", "run.seeds=[1, 2]", "schedule.graph=torus2d"])
    assert (cfg.problem.n, cfg.problem.d, cfg.run.seeds, cfg.schedule.graph) == (16, 7, [1, 2], "torus2d")


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        load_config(None, ["problem.n"])
    with pytest.raises(ConfigError):
        load_config(None, ["n=3"])


# subcommands


def test_estimate_p_ring(tmp_path, capsys):
    assert main(["estimate-p", "-o", str(tmp_path)]) == 0
    rows = read_table(tmp_path / "summary.csv")
    assert float(rows[0]["spectral_gap"]) == pytest.approx(0.021, abs=1e-3)
    assert "spectral_gap" in capsys.readouterr().out
    assert (tmp_path / "config.lock").exists()


def test_estimate_p_torus_and_complete(tmp_path):
    assert main(["estimate-p", "-o", str(tmp_path / "t"), "--set", "schedule.graph=torus2d"]) == 0
    assert float(read_table(tmp_path / "t" / "summary.csv")[0]["spectral_gap"]) == pytest.approx(0.276, abs=1e-3)
    assert main(["estimate-p", "-o", str(tmp_path / "c"), "--set", "schedule.graph=complete"]) == 0
    assert float(read_table(tmp_path / "c" / "summary.csv")[0]["p"]) == pytest.approx(1.0)


def test_estimate_p_montecarlo_pairwise(tmp_path):
    args = ["estimate-p", "-o", str(tmp_path), "--set", "schedule.variant=pairwise",
            "--set", "estimate.method=montecarlo", "--set", "estimate.trials=100"]
    assert main(args) == 0
    row = read_table(tmp_path / "summary.csv")[0]
    assert row["spectral_gap"] == "" and float(row["stderr"]) > 0


def test_estimate_p_from_edge_list_and_matrices(tmp_path):
    g = build_topology("ring", 6)
    write_edge_list(g, tmp_path / "g.txt")
    assert main(["estimate-p", "-o", str(tmp_path / "a"), "--set", "problem.n=6",
                 "--set", f"schedule.graph={tmp_path / 'g.txt'}"]) == 0
    save_matrix_csv(metropolis_weights(g), tmp_path / "w.csv")
    save_matrix_csv(np.full((6, 6), 1 / 6), tmp_path / "j.csv")
    cfg = write_config(tmp_path, {
        "problem": {"n": 6},
        "schedule": {"variant": "mixture", "matrices": [str(tmp_path / "w.csv"), str(tmp_path / "j.csv")],
                     "probs": [0.5, 0.5]},
        "output": {"directory": str(tmp_path / "b")},
    })
    assert main(["estimate-p", cfg]) == 0


def test_run_writes_layout(tmp_path):
    out = tmp_path / "run"
    args = ["run", "-o", str(out), "--steps", "50", "--seeds", "0", "1", "--set", "run.init=ones",
            "--set", "run.cadence=10", "--set", "problem.sigma_bar2=1.0"]
    assert main(args) == 0
    assert sorted(p.name for p in (out / "traces").glob("*.csv")) == ["seed_0.csv", "seed_1.csv"]
    lines = (out / "traces" / "seed_0.csv").read_text().splitlines()
    assert lines[1] == "t,xi,dist2,fgap" and len(lines) == 2 + 6
    assert len(read_table(out / "summary.csv")) == 2
    assert (out / "figures" / "traces.png").stat().st_size > 0
    lock = load_config(out / "config.lock")
    assert lock.run.seeds == [0, 1] and lock.run.steps == 50


def test_run_zero_steps(tmp_path):
    assert main(["run", "-o", str(tmp_path), "--steps", "0", "--set", "output.formats=[csv]"]) == 0
    assert len((tmp_path / "traces" / "seed_0.csv").read_text().splitlines()) == 3
    assert not (tmp_path / "figures").exists()


def test_run_divergence_exit_code(tmp_path):
    args = ["run", "-o", str(tmp_path), "--steps", "2000", "--set", "run.stepsize=100", "--set", "run.init=ones"]
    assert main(args) == 2


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["run", "-o", str(tmp_path), "--set", "problem.n=7", "--set", "schedule.graph=torus2d"]) == 1
    assert "schedule.graph" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.yaml")]) == 1
    assert main(["tune", "-o", str(tmp_path)]) == 1  # no target


def test_tune_outputs(tmp_path):
    args = ["tune", "-o", str(tmp_path), "--target", "1e-3", "--seeds", "0", "--set", "problem.n=9",
            "--set", "run.init=ones", "--set", "tune.points=9", "--set", "tune.refine=2"]
    assert main(args) == 0
    grid = read_table(tmp_path / "tune.csv")
    assert list(grid[0]) == ["eta", "T", "status"] and len(grid) == 11
    summary = read_table(tmp_path / "summary.csv")[0]
    assert summary["status"] == "reached"
    best = min(int(r["T"]) for r in grid if r["T"])
    assert int(summary["T"]) == best
    assert (tmp_path / "traces" / "incumbent.csv").exists()


def test_sweep_matches_tune_for_single_cell(tmp_path, monkeypatch):
    common = ["--target", "1e-3", "--seeds", "0", "1", "--set", "problem.n=9", "--set", "run.init=ones",
              "--set", "tune.points=9", "--set", "tune.refine=2", "--set", "output.formats=[csv]"]
    monkeypatch.setenv("DSGDLAB_WORKERS", "1")
    assert main(["sweep", "-o", str(tmp_path / "s"), *common, "--set", "sweep.topologies=[ring]",
                 "--set", "sweep.sigma_bar2=[1.0]", "--set", "sweep.zeta_bar2=[2.0]"]) == 0
    assert main(["tune", "-o", str(tmp_path / "t"), *common, "--set", "problem.sigma_bar2=1.0",
                 "--set", "problem.zeta_bar2=2.0"]) == 0
    cell = read_table(tmp_path / "s" / "summary.csv")[0]
    tuned = read_table(tmp_path / "t" / "summary.csv")[0]
    assert list(cell) == ["topology", "sigma2", "zeta2", "eta", "T"]
    assert cell["T"] == tuned["T"] and cell["eta"] == tuned["eta"]


def test_sweep_with_worker_pool(tmp_path, monkeypatch):
    monkeypatch.setenv("DSGDLAB_WORKERS", "2")
    args = ["sweep", "-o", str(tmp_path), "--target", "1e-2", "--seeds", "0", "--set", "problem.n=9",
            "--set", "run.init=ones", "--set", "tune.points=7", "--set", "tune.refine=0",
            "--set", "sweep.topologies=[ring, complete]", "--set", "sweep.sigma_bar2=[0.0]",
            "--set", "sweep.zeta_bar2=[0.0, 1.0]"]
    assert main(args) == 0
    rows = read_table(tmp_path / "summary.csv")
    assert len(rows) == 4
    assert len(list((tmp_path / "traces").glob("*.csv"))) == 4
    assert (tmp_path / "figures" / "sweep.png").exists()


def test_bad_worker_env(tmp_path, monkeypatch):
    monkeypatch.setenv("DSGDLAB_WORKERS", "zero")
    assert main(["sweep", "-o", str(tmp_path), "--target", "1e-2"]) == 1


def test_lower_bound_eigenvector(tmp_path):
    args = ["lower-bound", "--check", "-o", str(tmp_path), "--set", "problem.n=9",
            "--set", "lower_bound.eps=[1e-3, 1e-4]", "--set", "output.formats=[csv]"]
    assert main(args) == 0
    rows = read_table(tmp_path / "summary.csv")
    assert len(rows) == 2 and all(r["dominates"] == "True" for r in rows)
    fit = read_table(tmp_path / "fit.csv")
    assert fit[0]["topology"] == "ring"


def test_lower_bound_complete_is_config_error(tmp_path):
    args = ["lower-bound", "-o", str(tmp_path), "--set", "lower_bound.topologies=[complete]"]
    assert main(args) == 1


def test_lower_bound_check_failure_exit_code(tmp_path):
    # a one-point grid with a tiny stepsize cannot reach the targets, and the
    # slope replica then fails its fit checks
    args = ["lower-bound", "--check", "-o", str(tmp_path), "--set", "lower_bound.instance=quadratic",
            "--set", "lower_bound.topologies=[ring]", "--set", "lower_bound.problem_seeds=[0]",
            "--set", "lower_bound.eps=[1e-1, 1e-2, 1e-3]", "--set", "problem.n=9",
            "--set", "tune.points=1", "--set", "tune.refine=0", "--set", "tune.lo=0.5",
            "--set", "tune.hi=0.5", "--set", "run.init=ones", "--set", "run.T_max=3000", "--set", "output.formats=[csv]"]
    code = main(args)
    rows = read_table(tmp_path / "summary.csv")
    fit = read_table(tmp_path / "fit.csv")[0]
    ok = float(fit["r2"]) > 0.98 and all(r["dominates"] == "True" for r in rows)
    assert code == (0 if ok else 3)


def test_rates_stdout(capsys):
    assert main(["rates", "--L", "4", "--mu", "0.5", "--n", "25", "--sigma2", "2", "--eps", "1e-3",
                 "--T", "100"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# dsgdlab rates v1"
    assert out[1] == "kind,regime,x,noise,consensus,optimization,total"
    assert len(out) == 4


def test_rates_regime_error(capsys):
    assert main(["rates", "--mu", "0", "--eps", "1e-3"]) == 1


@pytest.mark.parametrize("argv", [["run", "--bogus"], ["run", "--steps", "5", "--target", "1e-3"], ["nope"]])
def test_usage_error_exit_code(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 1
    assert "error" in capsys.readouterr().err
