"""Mean spanning-cluster count against n for d = 2 (right-wired), 3 and 4.

    python scripts/dimension_contrast.py --n 4 8 16 --samples 200
"""
import argparse
from pathlib import Path

from ustspan.harness import ExperimentConfig, mean_ci, read_records, run_sweep

CASES = ((2, "right-wired"), (3, "free-halo"), (4, "free-halo"))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--samples", type=int, default=200)
    ap.add_argument("--seed", type=int, default=606)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="runs/contrast")
    args = ap.parse_args()

    for d, bc in CASES:
        out = Path(args.out) / f"d{d}"
        cfg = ExperimentConfig(dim=d, n_values=tuple(args.n), boundary=bc, samples=args.samples,
                               base_seed=args.seed, output_dir=str(out))
        run_sweep(cfg, workers=args.workers)
        recs = read_records(out)
        for n in args.n:
            vals = [r.N for r in recs if r.n == n and r.N is not None]
            m, lo, hi = mean_ci(vals)
            print(f"d={d} ({bc:11s}) n={n:3d}: mean N = {m:.3f}  95% CI [{lo:.3f}, {hi:.3f}]"
                  f"  ({len(vals)} samples)")


if __name__ == "__main__":
    main()
