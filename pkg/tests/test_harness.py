import json
import math
import subprocess
import sys

import numpy as np
import pytest

import riscascade.harness as harness
from riscascade.cli import main
from riscascade.errors import ConfigurationError, PilotBudgetError, RecoveryFailureError, UndefinedMetricError
from riscascade.harness import (
    CSV_HEADER,
    ExperimentConfig,
    SweepReport,
    SweepRow,
    emit_csv,
    load_config,
    nmse,
    pilot_overhead,
    run_trial,
    sweep,
)

SMALL = dict(n_bs=16, n_ris=16, k_users=2, l_paths=2, j_paths=2, v_slots=8, tau_per_user=6,
             tau_list=(4, 8), snr_db_list=(0.0, 10.0), trials=3)


def test_nmse_examples(rng):
    g = [rng.standard_normal((3, 4)) + 1j, rng.standard_normal((3, 4))]
    assert nmse(g, g) == 0
    assert nmse([np.zeros((3, 4))] * 2, g) == pytest.approx(1)
    assert nmse([2 * x for x in g], g) == pytest.approx(1)
    with pytest.raises(UndefinedMetricError):
        nmse(g, [np.zeros((3, 4))] * 2)
    with pytest.raises(ConfigurationError):
        nmse(g[:1], g)
    with pytest.raises(ConfigurationError):
        nmse([np.zeros((4, 3))], g[:1])


def test_nmse_sums_before_dividing():
    truths = [np.ones((1, 1)), 3 * np.ones((1, 1))]
    est = [np.zeros((1, 1)), 3 * np.ones((1, 1))]
    assert nmse(est, truths) == pytest.approx(1 / 10)


def test_pilot_overhead():
    assert pilot_overhead(16, 4, 8) == 12
    assert pilot_overhead(5, 2, [3, 4]) == 6


def test_config_validation():
    with pytest.raises(PilotBudgetError):
        ExperimentConfig(v_slots=2, l_paths=3)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(trials=0)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(methods=("proposed", "ds_omp"))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(scene_mode="sometimes")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"n_bs": 8, "colour": "red"})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({}, preset="huge")


def test_presets():
    desk = ExperimentConfig.from_dict({}, preset="desk")
    assert (desk.n_bs, desk.n_ris, desk.k_users, desk.l_paths, desk.j_paths, desk.trials) == (64, 64, 4, 3, 2, 200)
    paper = ExperimentConfig.from_dict({"trials": 2}, preset="paper")
    assert (paper.n_bs, paper.k_users, paper.l_paths, paper.j_paths, paper.trials) == (100, 16, 5, 4, 2)


def test_load_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"trials": 7, "snr_db_list": [1, 2]}))
    cfg = load_config(path, preset="desk", seed=3)
    assert cfg.trials == 7 and cfg.snr_db_list == (1.0, 2.0) and cfg.seed == 3
    path.write_text(json.dumps({"v_slots": 2}))
    with pytest.raises(PilotBudgetError):
        load_config(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        load_config(path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")


def test_config_hash():
    a = ExperimentConfig(**SMALL)
    assert a.config_hash == ExperimentConfig(**SMALL).config_hash
    assert a.config_hash == a.replace(workers=3).config_hash
    assert a.config_hash != a.replace(seed=1).config_hash
    assert len(a.config_hash) == 64


def test_run_trial_deterministic():
    cfg = ExperimentConfig(**SMALL)
    assert run_trial(cfg, 4) == run_trial(cfg, 4)
    assert run_trial(cfg, 4) != run_trial(cfg, 5)


@pytest.mark.parametrize("exact", [True, False])
def test_run_trial_noiseless_on_grid(exact):
    cfg = ExperimentConfig(trials=1, angle_grid=128, exact_aoa=exact, snr_db=math.inf)
    for seed in range(3):
        assert run_trial(cfg, seed)["proposed"] <= 1e-8


def test_genie_dominates_at_equal_noise():
    cfg = ExperimentConfig(trials=1)
    for seed in range(8):
        for snr in (-10.0, 0.0, 10.0):
            r = run_trial(cfg, seed, snr_db=snr)
            assert r["genie"] <= r["proposed"] and r["genie"] <= r["direct_omp"]


def test_failures_become_nan(monkeypatch):
    def broken(*args, **kwargs):
        raise RecoveryFailureError("forced", [0])

    monkeypatch.setattr(harness, "direct_omp_estimate", broken)
    cfg = ExperimentConfig(**SMALL)
    r = run_trial(cfg, 0)
    assert math.isnan(r["direct_omp"]) and np.isfinite(r["proposed"])
    rep = sweep(cfg)
    assert all(row.trials == 0 and math.isnan(row.mean_nmse) for row in rep.series("direct_omp"))
    assert len(rep.failures) == cfg.trials * len(cfg.snr_db_list)
    assert rep.failures[0][3] == "direct_omp" and rep.failures[0][4] == "RecoveryFailureError"


def test_methods_see_identical_blocks(monkeypatch):
    seen = {}
    real_estimate_all = harness.estimate_all
    real_direct = harness.direct_omp_estimate
    real_genie = harness.genie_ls_estimate

    def spy_all(rx1, rx2, *args):
        seen["proposed"] = [b.samples.copy() for b in rx2]
        return real_estimate_all(rx1, rx2, *args)

    def spy(name, fn):
        def inner(rx, *args, **kwargs):
            seen.setdefault(name, []).append(rx.samples.copy())
            return fn(rx, *args, **kwargs)
        return inner

    monkeypatch.setattr(harness, "estimate_all", spy_all)
    monkeypatch.setattr(harness, "direct_omp_estimate", spy("direct_omp", real_direct))
    monkeypatch.setattr(harness, "genie_ls_estimate", spy("genie", real_genie))
    cfg = ExperimentConfig(**SMALL)
    run_trial(cfg, 2)
    tau = cfg.tau_per_user
    t_base = cfg.baseline_slots(tau)
    for k in range(cfg.k_users):
        assert seen["direct_omp"][k].shape[1] == t_base
        assert seen["direct_omp"][k][:, :tau].tobytes() == seen["proposed"][k].tobytes()
        assert seen["genie"][k].tobytes() == seen["direct_omp"][k].tobytes()


def test_one_cell_sweep_is_trial_mean():
    cfg = ExperimentConfig(**dict(SMALL, snr_db_list=(5.0,), trials=4))
    rep = sweep(cfg, "snr")
    seeds = [harness._trial_seed(cfg, i) for i in range(4)]
    vals = [run_trial(cfg, s, snr_db=5.0) for s in seeds]
    for method in cfg.methods:
        row = rep.series(method)[0]
        ref = [v[method] for v in vals]
        assert row.mean_nmse == pytest.approx(np.mean(ref), rel=1e-12)
        assert row.std_nmse == pytest.approx(np.std(ref, ddof=1), rel=1e-12)
        assert row.trials == 4


def test_sweep_rows_sorted_and_overheads():
    cfg = ExperimentConfig(**SMALL)
    rep = sweep(cfg, "pilots")
    keys = [(harness.METHODS.index(r.method), r.T, r.snr_db) for r in rep.rows]
    assert keys == sorted(keys)
    assert [r.T for r in rep.series("proposed")] == [pilot_overhead(8, 2, t) for t in (4, 8)]
    assert [r.T for r in rep.series("direct_omp")] == [8.0, 12.0]
    assert all(r.snr_db == cfg.snr_db for r in rep.rows)
    with pytest.raises(ConfigurationError):
        sweep(cfg, "doppler")


def test_fixed_scene_mode():
    cfg = ExperimentConfig(**dict(SMALL, scene_mode="fixed_scene"))
    a = harness._Trial(cfg, harness._trial_seed(cfg, 0)).scene
    b = harness._Trial(cfg, harness._trial_seed(cfg, 1)).scene
    assert np.array_equal(a.h_common, b.h_common)


def test_workers_do_not_change_results():
    cfg = ExperimentConfig(**SMALL)
    assert sweep(cfg).rows == sweep(cfg.replace(workers=2)).rows


def test_pilot_sweep_monotone_desk():
    cfg = ExperimentConfig(trials=100, methods=("proposed",))
    means = [r.mean_nmse for r in sweep(cfg, "pilots").series("proposed")]
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_emit_csv(tmp_path):
    empty = tmp_path / "empty.csv"
    emit_csv(SweepReport(()), empty)
    assert empty.read_bytes() == (",".join(CSV_HEADER) + "\n").encode()

    cfg = ExperimentConfig(**SMALL)
    rep = sweep(cfg)
    out = tmp_path / "r.csv"
    emit_csv(rep, out)
    first = out.read_bytes()
    emit_csv(rep, out)
    assert out.read_bytes() == first
    assert b"\r" not in first
    lines = first.decode("utf-8").splitlines()
    assert len(lines) == len(rep.rows) + 1
    parsed = [line.split(",") for line in lines[1:]]
    for fields, row in zip(parsed, rep.rows):
        assert float(fields[3]) == row.mean_nmse and float(fields[4]) == row.std_nmse
        assert fields[6] == cfg.config_hash
    meta = json.loads(out.with_suffix(".meta.json").read_text())
    assert meta["config_hash"] == cfg.config_hash and meta["grids"]["dict_size"] == 32
    assert "T = (V + sum_k tau_k) / K" in meta["pilot_formula"] and "SNR" in meta["snr_convention"]


def test_emit_csv_reports_path(tmp_path):
    bad = tmp_path / "nope" / "r.csv"
    with pytest.raises(OSError, match="nope"):
        emit_csv(SweepReport(()), bad)


def test_cli_runs_and_is_reproducible(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(dict(SMALL, tau_list=list(SMALL["tau_list"]),
                                   snr_db_list=list(SMALL["snr_db_list"]))))
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "9",
                     "--methods", "proposed,genie", "--sweep", "pilots"]) == 0
    assert outs[0].read_bytes() == outs[1].read_bytes()
    text = outs[0].read_text()
    assert "direct_omp" not in text and text.count("\n") == 1 + 2 * 2


def test_cli_rejects_bad_input(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert "unknown_key" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["run", "--out", "x.csv", "--methods", "proposed,magic"])
    with pytest.raises(SystemExit):
        main(["run", "--out", "x.csv", "--seed", "-1"])


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_bs": 8, "n_ris": 8, "k_users": 1, "l_paths": 1, "j_paths": 1,
                               "v_slots": 4, "trials": 1, "snr_db_list": [0]}))
    out = tmp_path / "o.csv"
    proc = subprocess.run([sys.executable, "-m", "riscascade", "run", "--config", str(cfg),
                           "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().startswith(",".join(CSV_HEADER))
