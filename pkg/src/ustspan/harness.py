"""Sweeps over mesh sizes, JSONL sample records, and tail estimation."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

from .clusters import count_spanning_clusters
from .lattice import MeshSpec, covering_net, outer_region
from .probes import clopper_pearson, probe_branch
from .render import render_svg
from .rng import GENERATOR_NAME, RngStream
from .wilson import BoundaryCondition, branch_of, sample_ust, staged_sample

WORKERS_ENV = "USTSPAN_WORKERS"
RECORDS_FILE = "records.jsonl"
CONFIG_FILE = "config.json"
TIMING_FIELDS = ("wall_clock",)


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 3
    n_values: tuple[int, ...] = (8, 16, 32)
    M_values: tuple[int, ...] = tuple(range(1, 9))
    boundary: str = BoundaryCondition.FREE_WITH_WIRED_HALO.value
    enlargement: float = 3
    samples: int = 100
    base_seed: int = 0
    output_dir: str = "runs/default"
    mode: str = "plain"          # "plain" or "staged"
    staged_M: int = 2
    probe_trials: int = 0
    probe_points: int = 8
    render: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(v) for v in self.n_values))
        object.__setattr__(self, "M_values", tuple(int(v) for v in self.M_values))
        if self.mode not in ("plain", "staged"):
            raise ValueError(f"unknown mode {self.mode!r}")
        BoundaryCondition(self.boundary)
        if self.samples < 0:
            raise ValueError("samples must be >= 0")
        for n in self.n_values:
            MeshSpec(self.dim, n, self.enlargement)
        if self.mode == "staged" and self.boundary != BoundaryCondition.FREE_WITH_WIRED_HALO.value:
            raise ValueError("staged mode samples with the free-halo boundary")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @property
    def digest(self) -> str:
        # output location and worker count do not change the records
        d = asdict(self)
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class SampleRecord:
    config_digest: str
    seed: int
    stream: int
    n: int
    N: int | None
    generator: str = GENERATOR_NAME
    mode: str = "plain"
    M: int | None = None
    all_I: bool | None = None
    n_first_stage: int | None = None
    max_n_jump: int | None = None
    W_counts: list[int] = field(default_factory=list)
    spanning_three_quarters: list[int] = field(default_factory=list)
    H_worst: float | None = None
    error: str | None = None
    wall_clock: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        return cls(**json.loads(line))

    def key(self) -> tuple[int, int]:
        return self.n, self.stream


def run_one(config: ExperimentConfig, n: int, stream: int) -> SampleRecord:
    """Build one tree for cell ``n`` and measure it.  Replays exactly from its key."""
    t0 = time.perf_counter()
    rng = RngStream(config.base_seed, stream, n)
    spec = MeshSpec(config.dim, n, config.enlargement)
    rec = SampleRecord(config.digest, config.base_seed, stream, n, None, mode=config.mode)
    try:
        if config.mode == "plain":
            tree = sample_ust(spec, BoundaryCondition(config.boundary), rng=rng)
        else:
            M = config.staged_M
            tree, traces = staged_sample(spec, M, rng)
            first = traces[0]
            rec.M = M
            rec.all_I = bool(first.I.all())
            rec.n_first_stage = int(first.n_i[-1]) if first.n_i.size else 0
            jumps = np.diff(np.r_[0, first.n_i])
            rec.max_n_jump = int(jumps[first.I].max()) if first.I.any() else None
            rec.W_counts = [t.w_count for t in traces]
            rec.spanning_three_quarters = [t.spanning_to_three_quarters for t in traces]
            if config.probe_trials > 0:
                rec.H_worst = _probe_worst(tree, spec, M, config, rng)
        N, lab = count_spanning_clusters(tree)
        rec.N = int(N)
        if config.render and config.dim in (2, 3):
            slab = (2, n // 2) if config.dim == 3 else None
            render_svg(tree, lab, Path(config.output_dir) / f"render_n{n}_s{stream:06d}.svg", slab)
    except Exception as exc:  # recorded, the sweep goes on
        rec.error = f"{type(exc).__name__}: {exc}"
    rec.wall_clock = round(time.perf_counter() - t0, 6)
    return rec


def _probe_worst(tree, spec: MeshSpec, M: int, config: ExperimentConfig, rng: RngStream) -> float:
    centre = np.full(spec.dim, spec.n // 2)
    br = branch_of(tree, centre)
    ests = probe_branch(br, 1 / M, spec.n, config.probe_trials, rng, config.probe_points)
    return max((e.p_hat for e in ests if e.trials), default=float("nan"))


def _run_task(args):
    config, n, stream = args
    return run_one(config, n, stream)


def read_records(path) -> list[SampleRecord]:
    p = Path(path)
    if p.is_dir():
        p = p / RECORDS_FILE
    if not p.exists():
        return []
    out = []
    with p.open() as fh:
        for line in fh:
            if line.strip():
                out.append(SampleRecord.from_json(line))
    return out


def run_sweep(config: ExperimentConfig, workers: int | None = None,
              limit: int | None = None) -> list[SampleRecord]:
    """Run every (n, sample) cell not yet in ``output_dir/records.jsonl``.

    Records are appended in task order whatever the worker count, so the
    file only depends on the config.  ``limit`` stops after that many new
    records (used to test resumption).
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    cfg_path = out_dir / CONFIG_FILE
    if cfg_path.exists():
        old = ExperimentConfig.load(cfg_path)
        if old.digest != config.digest:
            raise ValueError(f"{out_dir} holds records of a different config")
    config.save(cfg_path)
    done = {r.key() for r in read_records(out_dir) if r.config_digest == config.digest}
    tasks = [(config, n, s) for n in config.n_values for s in range(config.samples)
             if (n, s) not in done]
    if limit is not None:
        tasks = tasks[:limit]
    workers = workers or int(os.environ.get(WORKERS_ENV, config.workers))
    new: list[SampleRecord] = []
    with (out_dir / RECORDS_FILE).open("a") as fh:
        if workers <= 1 or len(tasks) <= 1:
            results = map(_run_task, tasks)
            for rec in results:
                fh.write(rec.to_json() + "\n")
                fh.flush()
                new.append(rec)
        else:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for rec in ex.map(_run_task, tasks, chunksize=1):
                    fh.write(rec.to_json() + "\n")
                    fh.flush()
                    new.append(rec)
    return new


def strip_timing(line: str) -> str:
    d = json.loads(line)
    for k in TIMING_FIELDS:
        d.pop(k, None)
    return json.dumps(d, sort_keys=True)


def export_csv(records: Iterable[SampleRecord], path) -> None:
    recs = list(records)
    cols = [f.name for f in fields(SampleRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in recs:
            d = asdict(r)
            w.writerow([json.dumps(d[c]) if isinstance(d[c], list) else d[c] for c in cols])


# -- tails -------------------------------------------------------------------------------

@dataclass
class TailEstimate:
    n: int | None
    count: int
    M: np.ndarray
    survival: np.ndarray       # P(N >= M)
    ci_low: np.ndarray
    ci_high: np.ndarray
    slope: float               # least squares of log P on log M over the decaying range
    C: float                   # P ~ C / M
    C2: float                  # P ~ C2 / M^2

    def as_dict(self) -> dict:
        return {"n": self.n, "count": self.count, "M": self.M.tolist(),
                "survival": self.survival.tolist(), "ci_low": self.ci_low.tolist(),
                "ci_high": self.ci_high.tolist(), "slope": self.slope, "C": self.C, "C2": self.C2}


def tail_from_counts(values, M_grid=None, n: int | None = None) -> TailEstimate:
    v = np.asarray(values, dtype=np.int64)
    M = np.arange(1, max(int(v.max()) if v.size else 1, 1) + 2) if M_grid is None \
        else np.asarray(M_grid, dtype=np.int64)
    hits = np.array([(v >= m).sum() for m in M])
    surv = hits / max(v.size, 1)
    ci = np.array([clopper_pearson(h, v.size) for h in hits]).reshape(-1, 2)
    dec = (surv > 0) & (surv < 1)
    slope = C = C2 = float("nan")
    if dec.sum() >= 2:
        lm, lp = np.log(M[dec]), np.log(surv[dec])
        slope = float(stats.linregress(lm, lp).slope)
        C = float(np.exp(np.mean(lp + lm)))
        C2 = float(np.exp(np.mean(lp + 2 * lm)))
    return TailEstimate(n, int(v.size), M, surv, ci[:, 0], ci[:, 1], slope, C, C2)


def estimate_tail(records: Iterable[SampleRecord], M_grid=None,
                  min_records: int = 100) -> dict[int, TailEstimate]:
    """Empirical ``P(N >= M)`` per mesh size, with exact binomial intervals."""
    by_n: dict[int, list[int]] = {}
    for r in records:
        if r.N is not None:
            by_n.setdefault(r.n, []).append(r.N)
    if not by_n:
        raise ValueError("no usable records")
    out = {}
    for n, vals in sorted(by_n.items()):
        if len(vals) < min_records:
            raise ValueError(f"only {len(vals)} records for n={n}; need {min_records}")
        out[n] = tail_from_counts(vals, M_grid, n)
    return out


def coarse_mesh_violations(records: Iterable[SampleRecord], M_values) -> list[tuple[int, int, int]]:
    """``(n, stream, M)`` for samples with ``1/n > 1/M`` and ``N >= 100 M^2``."""
    bad = []
    for r in records:
        if r.N is None:
            continue
        for M in M_values:
            if r.n < M and r.N >= 100 * M * M:
                bad.append((r.n, r.stream, M))
    return bad


def net_size_report(dim: int, n: int, M: int) -> dict:
    """Actual first-stage net size next to the ``1e5 M^3``-style bound."""
    net = covering_net(outer_region(dim), 1 / M, n)
    return {"L": len(net), "grid_bound": net.bound, "paper_bound": net.paper_bound}


def ci_overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1]


def mean_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    m = float(v.mean())
    half = float(stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))
    return m, m - half, m + half
