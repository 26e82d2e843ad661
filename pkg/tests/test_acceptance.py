"""Acceptance gate: one test group per criterion, at the stated sizes and tolerances.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints a
pass/fail line per criterion.  Total runtime is several minutes on one core.
"""
import itertools
import json
import os
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from ustspan.clusters import components, count_spanning_clusters
from ustspan.harness import (ExperimentConfig, ci_overlap, coarse_mesh_violations, estimate_tail,
                             mean_ci, read_records, run_sweep, strip_timing)
from ustspan.lattice import LatticeBox, MeshSpec
from ustspan.oracle import (SmallGraph, enumerate_spanning_trees, matrix_tree_count,
                            tree_frequencies, two_sample_test, uniformity_test)
from ustspan.probes import estimate_xi, probe_branch, probe_hittability
from ustspan.render import render_svg
from ustspan.rng import RngStream
from ustspan.walks import PathRecord, loop_erase, loop_erase_incremental, walk_trace
from ustspan.wilson import (BoundaryCondition, Domain, branch_of, sample_parents_batch, sample_ust,
                            staged_sample)

GOLDEN = Path(__file__).parent / "golden" / "figure_render.json"
WORKERS = os.cpu_count() or 1


def crit(k):
    return pytest.mark.criterion(k)


# -- 1 --------------------------------------------------------------------------------

@crit(1)
def test_loop_erasure_exactness(report):
    rng = RngStream(101)
    lengths = np.random.default_rng(101).uniform(0, np.log(1e5), 10_000)
    mismatches = 0
    for i, ll in enumerate(lengths):
        p = walk_trace(np.zeros(2 + i % 2, dtype=np.int64), int(np.exp(ll)), rng)
        offline = loop_erase(p)
        if not np.array_equal(offline.sites, loop_erase_incremental(p).sites):
            mismatches += 1
    report(f"10000 traces, {mismatches} mismatches")
    assert mismatches == 0


# -- 2, 3 -------------------------------------------------------------------------------

def grid_setup(rows, cols):
    box = LatticeBox([0, 0], [rows - 1, cols - 1])
    dom = Domain.for_box(box, BoundaryCondition.FREE)
    g = SmallGraph.from_box(box, dom.root)
    trees = enumerate_spanning_trees(g)
    return dom, g, trees


def biased_batch(dom, g, trees, k, rng):
    """Wilson output with the first enumerated tree rejected half of the time."""
    bad = trees[0]
    out = []
    while len(out) < k:
        batch = sample_parents_batch(dom, k, rng)
        coins = rng.random(k)
        for row, c in zip(batch, coins):
            if g.tree_key(row, dom.root) == bad and c < 0.5:
                continue
            out.append(row)
    return np.array(out[:k])


@crit(2)
@pytest.mark.parametrize("rows,cols,count", [(2, 2, 4), (2, 3, 15)])
def test_sampler_uniformity(rows, cols, count, report):
    dom, g, trees = grid_setup(rows, cols)
    assert matrix_tree_count(g) == len(trees) == count
    freq = tree_frequencies(sample_parents_batch(dom, 100_000, RngStream(202, rows * 10 + cols)),
                            dom.root, g, trees)
    _, p = uniformity_test(freq, trees)
    control = tree_frequencies(biased_batch(dom, g, trees, 100_000, RngStream(203, cols)),
                               dom.root, g, trees)
    _, p_bad = uniformity_test(control, trees)
    report(f"{rows}x{cols}: p={p:.3g}, biased control p={p_bad:.3g}")
    assert p > 1e-3
    assert p_bad < 1e-6


@crit(3)
def test_ordering_invariance(report):
    dom, g, trees = grid_setup(2, 3)
    coords = dom.box.all_coords()
    nonroot = coords[~dom.root]
    order_a = nonroot
    order_b = nonroot[::-1]
    assert not np.array_equal(order_a, order_b)
    fa = tree_frequencies(sample_parents_batch(dom, 100_000, RngStream(301), order_a),
                          dom.root, g, trees)
    fb = tree_frequencies(sample_parents_batch(dom, 100_000, RngStream(302), order_b),
                          dom.root, g, trees)
    _, p = two_sample_test(fa, fb)
    report(f"two-sample p={p:.3g}")
    assert p > 1e-3


# -- 4 --------------------------------------------------------------------------------

def spanning_tree_ok(tree) -> bool:
    inc = np.flatnonzero(tree.in_tree)
    e = tree.edges()
    roots = np.flatnonzero(tree.root)
    eu = np.searchsorted(inc, np.r_[e[:, 0], np.full(roots.size - 1, roots[0])])
    ev = np.searchsorted(inc, np.r_[e[:, 1], roots[1:]])
    lab = components(inc.size, eu.astype(np.int64), ev.astype(np.int64))
    return tree.n_edges == tree.n_sites - 1 and bool(np.all(lab == lab[0]))


@crit(4)
def test_structural_invariants(report):
    plan = {(2, 8): 200, (2, 16): 200, (2, 32): 200, (3, 8): 200, (3, 16): 150, (3, 32): 60}
    checked = 0
    for (d, n), k in plan.items():
        for s in range(k):
            tree = sample_ust(MeshSpec(d, n), rng=RngStream(401, s, n * 10 + d))
            assert spanning_tree_ok(tree), (d, n, s)
            checked += 1
    assert checked >= 1000
    staged = {(2, 8, 2): 10, (2, 16, 2): 10, (2, 32, 4): 5, (3, 8, 2): 10, (3, 16, 2): 10,
              (3, 32, 4): 3}
    runs = jumps_checked = 0
    for (d, n, M), k in staged.items():
        for s in range(k):
            tree, traces, snaps = staged_sample(MeshSpec(d, n), M, RngStream(402, s, n * 10 + d),
                                                snapshots=True)
            assert spanning_tree_ok(tree)
            for a, b in zip(snaps[:-1], snaps[1:]):
                assert np.all(b[a])
            first = traces[0]
            jumps = np.diff(np.r_[0, first.n_i])
            assert np.all(jumps[first.I] <= M + 1)
            jumps_checked += int(first.I.sum())
            if first.I.all():
                assert first.n_i[-1] <= first.n_branches * (M + 1)
            runs += 1
    report(f"{checked} plain trees, {runs} staged runs, {jumps_checked} I-steps checked")


# -- 5, 6, 8 ---------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tightness_records(tmp_path_factory):
    cfg = ExperimentConfig(dim=3, n_values=(8, 16, 32), M_values=tuple(range(1, 9)),
                           enlargement=3, samples=1000, base_seed=505,
                           output_dir=str(tmp_path_factory.mktemp("tight")))
    run_sweep(cfg, workers=WORKERS)
    return cfg, read_records(cfg.output_dir)


@crit(5)
def test_tightness_trend(tightness_records, report):
    cfg, recs = tightness_records
    assert all(r.error is None for r in recs)
    tails = estimate_tail(recs, cfg.M_values)
    assert sorted(tails) == [8, 16, 32] and all(t.count == 1000 for t in tails.values())
    bad = []
    for i, M in enumerate(cfg.M_values):
        if M < 2:
            continue
        cis = {n: (t.ci_low[i], t.ci_high[i]) for n, t in tails.items()}
        for a, b in itertools.combinations(cis, 2):
            if not ci_overlap(cis[a], cis[b]):
                bad.append((M, a, b))
    summary = "; ".join(f"n={n}: P(N>=2)={t.survival[1]:.3f} P(N>=3)={t.survival[2]:.3f}"
                        for n, t in tails.items())
    report(summary + (f"; non-overlapping {bad}" if bad else ""))
    assert not bad


@pytest.fixture(scope="module")
def contrast_records(tmp_path_factory):
    out = {}
    for d, bc in ((2, "right-wired"), (3, "free-halo"), (4, "free-halo")):
        cfg = ExperimentConfig(dim=d, n_values=(4, 8, 16), boundary=bc, samples=200,
                               base_seed=606, output_dir=str(tmp_path_factory.mktemp(f"d{d}")))
        run_sweep(cfg, workers=WORKERS)
        out[d] = read_records(cfg.output_dir)
    return out


@crit(6)
def test_dimension_contrast(contrast_records, report):
    means = {}
    for d, recs in contrast_records.items():
        assert all(r.error is None for r in recs)
        for n in (4, 8, 16):
            means[d, n] = mean_ci([r.N for r in recs if r.n == n])
    report(", ".join(f"d={d} n={n}: {m[0]:.2f}" for (d, n), m in means.items()))
    m4 = [means[4, n] for n in (4, 8, 16)]
    assert m4[0][0] < m4[1][0] < m4[2][0]
    assert m4[0][2] < m4[2][1]   # CI at n=4 lies below the CI at n=16
    for d in (2, 3):
        for a, b in itertools.combinations((4, 8, 16), 2):
            assert ci_overlap(means[d, a][1:], means[d, b][1:]), (d, a, b)


@crit(8)
def test_coarse_mesh_bound(tightness_records, contrast_records, report):
    recs = list(tightness_records[1])
    for r in contrast_records.values():
        recs += r
    M_grid = range(1, 129)
    coarse = sum(1 for r in recs for M in M_grid if r.n < M)
    bad = coarse_mesh_violations(recs, M_grid)
    report(f"{coarse} (sample, M) pairs with 1/n > 1/M, {len(bad)} violations")
    assert coarse > 0
    assert bad == []


# -- 7 -----------------------------------------------------------------------------------------

@crit(7)
def test_hittability_exponent(report):
    spec = MeshSpec(3, 32)
    rng = RngStream(707)
    centre = np.full(3, spec.n // 2)
    branches = [branch_of(sample_ust(spec, rng=rng.spawn(b)), centre) for b in range(3)]
    samples = {}
    pairs = violations = 0
    for M in (2, 4, 8, 16):
        ests = []
        for i, br in enumerate(branches):
            part = probe_branch(br, 1 / M, spec.n, 1000, rng, max_probes=16, branch_id=i)
            ests += part
            # coupled comparison against a sub-branch on the same walks
            sub = PathRecord(br.sites[: max(1, len(br.sites) // 2)])
            for e in part[:4]:
                key = rng.key()
                full = probe_hittability(br, e.x, e.radius, 500, rng, spec.n, key=key)
                less = probe_hittability(sub, e.x, e.radius, 500, rng, spec.n, key=key)
                pairs += 1
                violations += full.avoid > less.avoid
        samples[1 / M] = ests
    fit = estimate_xi(samples)
    lo, hi = fit.ci(0.95)
    report(f"xi={fit.xi:.3f} 95% CI=({lo:.3f}, {hi:.3f}); worst p={np.round(fit.worst, 3).tolist()}; "
           f"{pairs} coupled pairs, {violations} violations")
    assert lo > 0
    assert violations == 0


# -- 9 -------------------------------------------------------------------------------------------

@crit(9)
@pytest.mark.parametrize("mode", ["plain", "staged"])
def test_determinism(mode, tmp_path, report):
    kw = dict(dim=3, n_values=(8, 16), samples=6, base_seed=909, mode=mode, render=True)
    if mode == "staged":
        kw.update(n_values=(16,), staged_M=2, probe_trials=50, probe_points=2)
    outputs = []
    for tag, workers in (("a", 1), ("b", 8), ("c", 1)):
        cfg = ExperimentConfig(output_dir=str(tmp_path / tag), **kw)
        run_sweep(cfg, workers=workers)
        lines = (tmp_path / tag / "records.jsonl").read_text().splitlines()
        svgs = {p.name: p.read_bytes() for p in sorted((tmp_path / tag).glob("*.svg"))}
        outputs.append(([strip_timing(l) for l in lines], svgs))
    assert outputs[0][0] and outputs[0][1]
    assert outputs[0] == outputs[1] == outputs[2]
    report(f"{mode}: {len(outputs[0][0])} records and {len(outputs[0][1])} renders identical "
           "across workers 1, 8, 1")


# -- 10 ------------------------------------------------------------------------------------------

def figure_render(path):
    spec = MeshSpec(2, 114, enlargement=2)
    tree = sample_ust(spec, BoundaryCondition.FREE_WITH_WIRED_HALO, rng=RngStream(1011))
    N, lab = count_spanning_clusters(tree)
    counts = render_svg(tree, lab, path)
    return tree, N, lab, counts


@crit(10)
def test_figure_render(tmp_path, report):
    out = tmp_path / "figure.svg"
    tree, N, lab, counts = figure_render(out)
    assert tree.box.shape == (229, 229)
    assert lab.sites.size == 115 * 115
    ns = {"s": "http://www.w3.org/2000/svg"}
    svg = ET.parse(out).getroot()
    assert svg.tag == "{http://www.w3.org/2000/svg}svg"
    groups = svg.findall(".//s:g[@class='spanning-cluster']", ns)
    assert len(groups) == N == counts["highlighted_groups"]
    # forest on the window: edges = sites - components
    assert counts["edges"] == lab.sites.size - lab.n_components
    base = svg.find(".//s:g[@id='window-edges']/s:path", ns)
    assert base.get("d").count("M") == counts["edges"]
    span_sizes = lab.sizes[lab.spanning]
    assert counts["highlighted_edges"] == int((span_sizes - 1).sum())
    drawn = sum(g.find("s:path", ns).get("d").count("M") for g in groups)
    assert drawn == counts["highlighted_edges"]
    golden = json.loads(GOLDEN.read_text())
    got = {"N": N, **counts}
    report(f"N={N}, {counts['edges']} edges, {counts['highlighted_edges']} highlighted")
    assert got == golden
