import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ustspan.harness import (ExperimentConfig, SampleRecord, coarse_mesh_violations, estimate_tail,
                             export_csv, net_size_report, read_records, run_one, run_sweep,
                             strip_timing, tail_from_counts)


def small_config(tmp_path, **kw):
    base = dict(dim=2, n_values=(4, 6), samples=6, base_seed=3, output_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def stripped(path):
    return [strip_timing(l) for l in (path / "records.jsonl").read_text().splitlines()]


def test_config_roundtrip(tmp_path):
    cfg = small_config(tmp_path, M_values=(1, 2, 3), render=True)
    p = tmp_path / "c.json"
    cfg.save(p)
    again = ExperimentConfig.load(p)
    assert again == cfg
    assert again.to_json() == cfg.to_json()
    assert replace(cfg, output_dir="elsewhere", workers=4).digest == cfg.digest
    assert replace(cfg, base_seed=4).digest != cfg.digest


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(mode="bogus")
    with pytest.raises(ValueError):
        ExperimentConfig(boundary="periodic")
    with pytest.raises(ValueError):
        ExperimentConfig(samples=-1)
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_json(json.dumps({"dims": 3}))


def test_zero_samples(tmp_path):
    cfg = small_config(tmp_path, samples=0)
    assert run_sweep(cfg) == []
    assert (tmp_path / "run" / "records.jsonl").read_text() == ""


def test_sweep_is_deterministic(tmp_path):
    a = small_config(tmp_path / "a")
    b = small_config(tmp_path / "b")
    run_sweep(a)
    run_sweep(b, workers=3)
    assert stripped(tmp_path / "a" / "run") == stripped(tmp_path / "b" / "run")
    recs = read_records(tmp_path / "a" / "run")
    assert len(recs) == 12
    assert all(r.config_digest == a.digest and r.error is None for r in recs)


def test_replay_single_record(tmp_path):
    cfg = small_config(tmp_path)
    run_sweep(cfg)
    rec = read_records(cfg.output_dir)[7]
    again = run_one(cfg, rec.n, rec.stream)
    assert strip_timing(again.to_json()) == strip_timing(rec.to_json())


def test_resume(tmp_path):
    full = small_config(tmp_path / "full")
    run_sweep(full)
    part = small_config(tmp_path / "part")
    assert len(run_sweep(part, limit=5)) == 5
    assert len(run_sweep(part)) == 7
    assert len(run_sweep(part)) == 0
    assert stripped(tmp_path / "part" / "run") == stripped(tmp_path / "full" / "run")


def test_rejects_other_config_in_directory(tmp_path):
    run_sweep(small_config(tmp_path, samples=1))
    with pytest.raises(ValueError, match="different config"):
        run_sweep(small_config(tmp_path, samples=1, base_seed=99))


def test_failures_are_recorded(tmp_path):
    # n = 4 is too coarse for M = 8, the staged build refuses it
    cfg = small_config(tmp_path, dim=2, n_values=(4, 16), samples=2, mode="staged", staged_M=8)
    recs = run_sweep(cfg)
    bad = [r for r in recs if r.error]
    assert {r.n for r in bad} == {4}
    assert "too coarse" in bad[0].error
    good = [r for r in recs if not r.error]
    assert len(good) == 2 and all(r.N is not None and r.all_I is not None for r in good)


def test_staged_records_with_probes(tmp_path):
    cfg = small_config(tmp_path, dim=3, n_values=(8,), samples=1, mode="staged", staged_M=2,
                       probe_trials=20, probe_points=2)
    (rec,) = run_sweep(cfg)
    assert rec.error is None
    assert len(rec.W_counts) == len(rec.spanning_three_quarters) > 0
    assert rec.H_worst is None or 0 <= rec.H_worst <= 1
    assert rec.max_n_jump is None or rec.max_n_jump <= 3


def test_render_toggle(tmp_path):
    cfg = small_config(tmp_path, samples=1, render=True)
    run_sweep(cfg)
    assert sorted(p.name for p in (tmp_path / "run").glob("*.svg")) == [
        "render_n4_s000000.svg", "render_n6_s000000.svg"]


def test_export_csv(tmp_path):
    cfg = small_config(tmp_path, samples=2)
    recs = run_sweep(cfg)
    export_csv(recs, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("config_digest,")


def rec(n, N, stream=0):
    return SampleRecord("x", 0, stream, n, N)


def test_tail_all_ones():
    t = estimate_tail([rec(8, 1, s) for s in range(100)], M_grid=[1, 2, 3])[8]
    assert t.survival.tolist() == [1.0, 0.0, 0.0]
    assert t.ci_low[0] > 0.95 and t.ci_high[1] < 0.05


def test_tail_needs_records():
    with pytest.raises(ValueError):
        estimate_tail([rec(8, 1, s) for s in range(10)])


def test_planted_tail_slope():
    # P(N >= M) = min(1, 2/M): N = floor(2/U) has exactly this law
    rng = np.random.default_rng(0)
    N = np.floor(2 / rng.random(200_000)).astype(int)
    t = tail_from_counts(N, M_grid=range(2, 33))
    assert t.slope == pytest.approx(-1, abs=0.1)
    assert t.C == pytest.approx(2, rel=0.1)


@settings(max_examples=100)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=300))
def test_tail_is_monotone_and_bounded(values):
    t = tail_from_counts(values, M_grid=range(0, 15))
    assert np.all(np.diff(t.survival) <= 0)
    assert np.all((t.survival >= 0) & (t.survival <= 1))
    assert np.all(t.ci_low <= t.survival + 1e-12) and np.all(t.survival <= t.ci_high + 1e-12)


def test_coarse_mesh_guard():
    recs = [rec(4, 1), rec(4, 2500), rec(16, 10 ** 6)]
    assert coarse_mesh_violations(recs, [5]) == [(4, 0, 5)]
    assert coarse_mesh_violations(recs, [2, 3]) == []


def test_net_size_report():
    r = net_size_report(3, 8, 2)
    assert r["L"] <= r["grid_bound"] <= r["paper_bound"]
