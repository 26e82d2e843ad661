"""Command line entry point: ``ustspan {sample,sweep,tail,probe,verify,render}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np


def _spec_args(p, n=16):
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--enlargement", type=float, default=3)
    p.add_argument("--bc", default="free-halo",
                   choices=["wired", "right-wired", "free-halo", "free"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)


def cmd_sample(args) -> int:
    from .clusters import count_spanning_clusters
    from .lattice import MeshSpec
    from .render import render_svg
    from .rng import RngStream
    from .wilson import BoundaryCondition, dump_tree, sample_ust, staged_sample

    spec = MeshSpec(args.dim, args.n, args.enlargement)
    rng = RngStream(args.seed, args.stream, args.n)
    info = {}
    if args.staged_M:
        tree, traces = staged_sample(spec, args.staged_M, rng)
        info["W_counts"] = [t.w_count for t in traces]
        info["all_I"] = bool(traces[0].I.all())
    else:
        tree = sample_ust(spec, BoundaryCondition(args.bc), rng=rng)
    N, lab = count_spanning_clusters(tree)
    info.update({"N": N, "sites": tree.n_sites, "edges": tree.n_edges})
    if args.out:
        with open(args.out, "w") as fh:
            dump_tree(tree, fh)
    if args.labels:
        with open(args.labels, "w", newline="") as fh:
            lab.dump_csv(fh)
    if args.svg:
        slab = (args.dim - 1, args.n // 2) if args.dim == 3 else None
        info["render"] = render_svg(tree, lab, args.svg, slab=slab)
    print(json.dumps(info, sort_keys=True))
    return 0


def cmd_sweep(args) -> int:
    from .harness import ExperimentConfig, run_sweep

    if args.config:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig()
    over = {}
    for name in ("dim", "samples", "base_seed", "output_dir", "mode", "staged_M", "boundary",
                 "enlargement", "probe_trials", "probe_points"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    if args.n_values:
        over["n_values"] = tuple(args.n_values)
    if args.M_values:
        over["M_values"] = tuple(args.M_values)
    try:
        cfg = replace(cfg, **over)
        recs = run_sweep(cfg, workers=args.workers)
    except (ValueError, OSError) as exc:
        print(f"ustspan sweep: {exc}", file=sys.stderr)
        return 2
    failed = [r for r in recs if r.error]
    print(json.dumps({"new_records": len(recs), "failed": len(failed),
                      "output": str(Path(cfg.output_dir))}))
    return 1 if failed else 0


def cmd_tail(args) -> int:
    from .harness import ExperimentConfig, coarse_mesh_violations, estimate_tail, read_records

    recs = read_records(args.records)
    M_grid = args.M_values
    if M_grid is None:
        cfg_path = Path(args.records) / "config.json"
        M_grid = ExperimentConfig.load(cfg_path).M_values if cfg_path.exists() else range(1, 9)
    tails = estimate_tail(recs, M_grid, min_records=args.min_records)
    for n, t in tails.items():
        print(json.dumps(t.as_dict()))
    bad = coarse_mesh_violations(recs, M_grid)
    print(json.dumps({"coarse_mesh_violations": len(bad)}))
    return 1 if bad else 0


def cmd_probe(args) -> int:
    from .lattice import MeshSpec, left_face, slice_face, unit_window
    from .probes import estimate_xi, probe_branch, simulate_traversals, traversal_tail
    from .rng import RngStream
    from .wilson import Domain, branch_of, sample_ust

    spec = MeshSpec(args.dim, args.n, args.enlargement)
    rng = RngStream(args.seed, args.stream, args.n)
    if args.kind == "traversal":
        dom = Domain.from_spec(spec, "free-halo")
        starts = unit_window(spec.dim).sites(spec.n)
        starts = starts[rng.integers(len(starts), args.walks)]
        counts = simulate_traversals(dom.box, dom.root, starts, left_face(spec.dim),
                                     slice_face(2 / 3, spec.dim), spec.n, rng)
        tail = traversal_tail(counts)
        print(json.dumps({"walks": int(counts.size), "survival": tail.survival.tolist(),
                          "ratio": tail.ratio, "c0": tail.c0}))
        return 0
    branches = []
    centre = np.full(spec.dim, spec.n // 2)
    for b in range(args.branches):
        tree = sample_ust(spec, rng=rng.spawn(1000 + b))
        branches.append(branch_of(tree, centre))
    samples = {}
    out = open(args.out, "w") if args.out else None
    for M in args.M_values:
        ests = []
        for i, br in enumerate(branches):
            ests += probe_branch(br, 1 / M, spec.n, args.trials, rng, args.probes, branch_id=i)
        samples[1 / M] = ests
        if out:
            for e in ests:
                out.write(e.to_json() + "\n")
    if out:
        out.close()
    fit = estimate_xi(samples)
    lo, hi = fit.ci()
    print(json.dumps({"xi": fit.xi, "stderr": fit.xi_stderr, "ci95": [lo, hi],
                      "scales": fit.scales.tolist(), "worst": fit.worst.tolist()}))
    return 0


def cmd_verify(args) -> int:
    from .lattice import LatticeBox
    from .oracle import (SmallGraph, enumerate_spanning_trees, matrix_tree_count,
                         tree_frequencies, uniformity_test)
    from .rng import RngStream
    from .wilson import Domain, sample_parents_batch

    ok = True
    cases = [("C4", LatticeBox([0, 0], [1, 1]), "free"),
             ("grid2x3", LatticeBox([0, 0], [1, 2]), "free"),
             ("grid3x3", LatticeBox([0, 0], [2, 2]), "free"),
             ("wired4x4", LatticeBox([0, 0], [3, 3]), "wired")]
    for name, box, bc in cases:
        dom = Domain.for_box(box, bc)
        g = SmallGraph.from_box(box, dom.root)
        count = matrix_tree_count(g)
        trees = enumerate_spanning_trees(g)
        parents = sample_parents_batch(dom, args.samples, RngStream(args.seed, 0, len(trees)))
        freq = tree_frequencies(parents, dom.root, g, trees)
        stat, p = uniformity_test(freq, trees)
        good = count == len(trees) and p > 1e-3
        ok &= good
        print(f"{name}: kirchhoff={count} enumerated={len(trees)} chi2={stat:.2f} p={p:.3g} "
              f"{'PASS' if good else 'FAIL'}")
    return 0 if ok else 1


def cmd_render(args) -> int:
    from .clusters import count_spanning_clusters
    from .lattice import MeshSpec
    from .render import render_svg
    from .rng import RngStream
    from .wilson import BoundaryCondition, sample_ust

    spec = MeshSpec(args.dim, args.n, args.enlargement)
    tree = sample_ust(spec, BoundaryCondition(args.bc), rng=RngStream(args.seed, args.stream, args.n))
    N, lab = count_spanning_clusters(tree)
    slab = None
    if args.slab is not None:
        slab = tuple(args.slab)
    counts = render_svg(tree, lab, args.out, slab=slab)
    counts["N"] = N
    print(json.dumps(counts, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ustspan", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("sample", help="sample one tree, count spanning clusters")
    _spec_args(s)
    s.add_argument("--staged-M", type=int, default=0, help="use the staged construction with this M")
    s.add_argument("--out", help="tree dump path")
    s.add_argument("--labels", help="cluster labeling CSV path")
    s.add_argument("--svg", help="render path")
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("sweep", help="run a Monte Carlo sweep")
    s.add_argument("--config")
    s.add_argument("--dim", type=int)
    s.add_argument("--n-values", type=int, nargs="+")
    s.add_argument("--M-values", type=int, nargs="+")
    s.add_argument("--samples", type=int)
    s.add_argument("--base-seed", type=int)
    s.add_argument("--output-dir")
    s.add_argument("--mode", choices=["plain", "staged"])
    s.add_argument("--staged-M", type=int)
    s.add_argument("--boundary")
    s.add_argument("--enlargement", type=float)
    s.add_argument("--probe-trials", type=int)
    s.add_argument("--probe-points", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("tail", help="estimate P(N >= M) from sweep records")
    s.add_argument("records", help="sweep output directory or records.jsonl")
    s.add_argument("--M-values", type=int, nargs="+")
    s.add_argument("--min-records", type=int, default=100)
    s.set_defaults(func=cmd_tail)

    s = sub.add_parser("probe", help="hittability exponent or traversal tail")
    _spec_args(s, n=32)
    s.add_argument("--kind", choices=["hittability", "traversal"], default="hittability")
    s.add_argument("--M-values", type=int, nargs="+", default=[2, 4, 8, 16])
    s.add_argument("--branches", type=int, default=3)
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--probes", type=int, default=16)
    s.add_argument("--walks", type=int, default=2000)
    s.add_argument("--out", help="JSONL of hittability estimates")
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("verify", help="exact uniformity checks on tiny grids")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("render", help="render a sample's window to SVG")
    _spec_args(s, n=114)
    s.add_argument("--slab", type=int, nargs=2, metavar=("AXIS", "LEVEL"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_render, dim=2, enlargement=2)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
