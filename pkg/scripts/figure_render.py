"""Render a 229x229 two-dimensional sample with its central 115x115 window.

    python scripts/figure_render.py --seed 1011 --out figure.svg
"""
import argparse
import json

from ustspan.clusters import count_spanning_clusters
from ustspan.lattice import MeshSpec
from ustspan.render import render_svg
from ustspan.rng import RngStream
from ustspan.wilson import BoundaryCondition, sample_ust


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1011)
    ap.add_argument("--bc", default="free-halo", choices=["free-halo", "wired"])
    ap.add_argument("--out", default="figure.svg")
    args = ap.parse_args()

    spec = MeshSpec(2, 114, enlargement=2)
    tree = sample_ust(spec, BoundaryCondition(args.bc), rng=RngStream(args.seed))
    N, lab = count_spanning_clusters(tree)
    counts = render_svg(tree, lab, args.out)
    print(json.dumps({"box": list(tree.box.shape), "N": N, **counts}))


if __name__ == "__main__":
    main()
