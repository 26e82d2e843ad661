"""Monte Carlo estimates of branch hittability and face-to-face traversals."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .lattice import BoxRegion, FaceRegion, LatticeBox
from .rng import RngStream, bounded, next_u64
from .walks import PathRecord, pick_direction


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = stats.binomtest(int(k), int(n)).proportion_ci(level, method="exact")
    return float(ci.low), float(ci.high)


@dataclass
class HittabilityEstimate:
    branch_id: int
    x: tuple[int, ...]
    radius: float              # physical ball radius
    trials: int                # walks that finished (capped walks excluded)
    avoid: int                 # walks that left the ball without touching the branch
    capped: int = 0
    ci_low: float = field(init=False)
    ci_high: float = field(init=False)
    ci_method: str = "clopper-pearson-95"

    def __post_init__(self):
        self.ci_low, self.ci_high = clopper_pearson(self.avoid, self.trials)

    @property
    def p_hat(self) -> float:
        return self.avoid / self.trials if self.trials else float("nan")

    def to_json(self) -> str:
        d = asdict(self)
        d["x"] = list(self.x)
        d["p_hat"] = self.p_hat
        return json.dumps(d, sort_keys=True)


@numba.njit(cache=True)
def _splitmix(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31)), x


@numba.njit(cache=True)
def _trial_state(key, t):
    st = np.empty(4, np.uint64)
    x = key ^ (np.uint64(t) * np.uint64(0xD1B54A32D192ED03))
    for i in range(4):
        st[i], x = _splitmix(x)
    return st


@numba.njit(cache=True)
def _probe(key, trials, target, offsets, center, r2, cap):
    """Walks from the centre of a local box until leaving the ball or hitting ``target``.

    Trial ``t`` draws from its own stream derived from ``(key, t)``, so two
    targets probed with the same key see identical walks.
    """
    dim = center.size
    ndir = 2 * dim
    full = (1 << ndir) - 1
    c = np.empty(dim, np.int64)
    avoid = 0
    capped = 0
    start = 0
    strides = np.empty(dim, np.int64)
    side = 2 * center[0] + 1
    s = 1
    for a in range(dim - 1, -1, -1):
        strides[a] = s
        start += center[a] * s
        s *= side
    for t in range(trials):
        st = _trial_state(key, t)
        u = start
        for a in range(dim):
            c[a] = 0
        steps = 0
        while True:
            if target[u]:
                break
            dd = 0.0
            for a in range(dim):
                dd += c[a] * c[a]
            if dd >= r2:
                avoid += 1
                break
            if steps >= cap:
                capped += 1
                break
            d = pick_direction(full, full, ndir, st)
            u += offsets[d]
            if d & 1:
                c[d >> 1] += 1
            else:
                c[d >> 1] -= 1
            steps += 1
    return avoid, capped


def probe_hittability(branch: PathRecord | None, x, radius: float, trials: int, rng: RngStream,
                      n: int = 1, domain: BoxRegion | None = None, branch_id: int = 0,
                      step_cap: int | None = None, key: int | None = None) -> HittabilityEstimate:
    """Estimate the probability that a walk from ``x`` leaves ``B(x, radius)`` avoiding ``branch``.

    Walks live on the full lattice.  ``key`` fixes the per-trial streams
    (for coupled comparisons); by default it is drawn from ``rng``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.asarray(x, dtype=np.int64)
    r = float(radius) * n
    R = int(math.ceil(r))
    if domain is not None:
        lo, hi = domain.steps(n)
        if np.any(x - R < lo) or np.any(x + R > hi):
            raise ValueError("probe ball leaves the domain")
    local = LatticeBox(x - R, x + R)
    target = np.zeros(local.size, dtype=np.uint8)
    if branch is not None and len(branch.sites):
        s = branch.sites[local.contains(branch.sites)]
        target[local.encode(s)] = 1
    cap = step_cap if step_cap is not None else 64 * (2 * R + 1) ** 3
    if key is None:
        key = int(next_u64(rng.state))
    avoid, capped = _probe(np.uint64(key), int(trials), target, local.offsets,
                           np.full(x.size, R, dtype=np.int64), r * r, int(cap))
    return HittabilityEstimate(branch_id, tuple(int(v) for v in x), float(radius),
                               int(trials - capped), int(avoid), int(capped))


def probe_points(branch: PathRecord, net_radius: float, n: int, max_probes: int = 64,
                 reach: float = 4.0) -> np.ndarray:
    """Deterministic spread-out sites at distance <= ``net_radius`` from the branch.

    Candidates are branch sites shifted by ``floor(net_radius*n)`` along each
    axis (the far edge of the allowed band); a farthest-point traversal
    starting from the candidate farthest from the branch picks the subset.
    Only sites with ``|x| < reach`` are kept.
    """
    s = branch.sites
    h = max(int(math.floor(net_radius * n)), 0)
    if h == 0:
        cand = s.copy()
    else:
        shifts = []
        for a in range(s.shape[1]):
            for sg in (-1, 1):
                e = np.zeros(s.shape[1], dtype=np.int64)
                e[a] = sg * h
                shifts.append(s + e)
        cand = np.unique(np.vstack(shifts), axis=0)
    kd = cKDTree(s)
    dist, _ = kd.query(cand)
    keep = (dist <= net_radius * n + 1e-9) & (np.sqrt((cand ** 2).sum(axis=1)) < reach * n)
    cand, dist = cand[keep], dist[keep]
    if cand.shape[0] == 0:
        return cand
    first = int(np.lexsort(cand.T[::-1])[np.argmax(dist[np.lexsort(cand.T[::-1])])])
    chosen = [first]
    dmin = np.sqrt(((cand - cand[first]) ** 2).sum(axis=1)).astype(float)
    while len(chosen) < min(max_probes, cand.shape[0]):
        nxt = int(np.argmax(dmin))
        if dmin[nxt] <= 0:
            break
        chosen.append(nxt)
        dmin = np.minimum(dmin, np.sqrt(((cand - cand[nxt]) ** 2).sum(axis=1)))
    return cand[chosen]


def probe_branch(branch: PathRecord, scale: float, n: int, trials: int, rng: RngStream,
                 max_probes: int = 64, branch_id: int = 0) -> list[HittabilityEstimate]:
    """Probes at distance <= ``scale`` with ball radius ``sqrt(scale)``."""
    pts = probe_points(branch, scale, n, max_probes)
    return [probe_hittability(branch, x, math.sqrt(scale), trials, rng, n, branch_id=branch_id)
            for x in pts]


@dataclass
class ExponentFit:
    scales: np.ndarray
    worst: np.ndarray
    substituted: np.ndarray
    xi: float
    xi_stderr: float
    intercept: float
    residuals: np.ndarray

    @property
    def df(self) -> int:
        return self.scales.size - 2

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        if self.df <= 0:
            return -math.inf, math.inf
        t = stats.t.ppf(0.5 + level / 2, self.df)
        return self.xi - t * self.xi_stderr, self.xi + t * self.xi_stderr

    @classmethod
    def refit(cls, scales, worst, substituted=None) -> "ExponentFit":
        s = np.asarray(scales, dtype=float)
        w = np.asarray(worst, dtype=float)
        res = stats.linregress(np.log(s), np.log(w))
        resid = np.log(w) - (res.intercept + res.slope * np.log(s))
        sub = np.zeros(s.size, bool) if substituted is None else np.asarray(substituted)
        return cls(s, w, sub, float(res.slope), float(res.stderr), float(res.intercept), resid)


def estimate_xi(samples: dict[float, list[HittabilityEstimate]]) -> ExponentFit:
    """Least-squares fit of ``log(worst p_hat) = xi log(scale) + c``.

    A worst estimate of zero is replaced by its upper confidence bound.
    """
    if len(samples) < 3:
        raise ValueError("need at least 3 distinct scales")
    scales, worst, sub = [], [], []
    for scale in sorted(samples):
        ests = [e for e in samples[scale] if e.trials > 0]
        if not ests:
            raise ValueError(f"no finished trials at scale {scale}")
        top = max(ests, key=lambda e: (e.p_hat, e.ci_high))
        scales.append(scale)
        if top.p_hat > 0:
            worst.append(top.p_hat)
            sub.append(False)
        else:
            worst.append(top.ci_high)
            sub.append(True)
    return ExponentFit.refit(scales, worst, sub)


# -- traversals --------------------------------------------------------------------

def traversal_count(labels: np.ndarray) -> int:
    """Alternations in a face-visit sequence (0 = none, 1 = first face, 2 = second)."""
    seq = labels[labels > 0]
    if seq.size == 0:
        return 0
    runs = 1 + int(np.count_nonzero(seq[1:] != seq[:-1]))
    return runs - 1


def face_labels(sites: np.ndarray, first: FaceRegion, second: FaceRegion, n: int) -> np.ndarray:
    lab = np.zeros(len(sites), dtype=np.int8)
    lab[first.touches(sites, n)] = 1
    lab[second.touches(sites, n)] = 2
    return lab


def path_traversals(path: PathRecord, first: FaceRegion, second: FaceRegion, n: int) -> int:
    return traversal_count(face_labels(path.sites, first, second, n))


@numba.njit(cache=True)
def _traversal_walks(starts, target, labels, mask, offsets, cap, state):
    ndir = offsets.size
    full = (1 << ndir) - 1
    out = np.zeros(starts.size, np.int64)
    capped = np.zeros(starts.size, np.bool_)
    for i in range(starts.size):
        u = starts[i]
        last = 0
        cnt = 0
        steps = 0
        while True:
            lab = labels[u]
            if lab > 0:
                if last > 0 and lab != last:
                    cnt += 1
                last = lab
            if target[u]:
                break
            if steps >= cap:
                capped[i] = True
                break
            d = pick_direction(mask[u], full, ndir, state)
            u += offsets[d]
            steps += 1
        out[i] = cnt
    return out, capped


def simulate_traversals(box: LatticeBox, absorb: np.ndarray, starts, first: FaceRegion,
                        second: FaceRegion, n: int, rng: RngStream,
                        step_cap: int | None = None) -> np.ndarray:
    """Traversal counts of walks from ``starts`` run until they hit ``absorb``."""
    from .walks import default_step_cap

    flat = box.encode(np.atleast_2d(np.asarray(starts, dtype=np.int64)))
    labels = face_labels(box.all_coords(), first, second, n)
    cap = step_cap or default_step_cap(box.shape)
    counts, capped = _traversal_walks(flat, absorb.astype(np.uint8), labels, box.free_mask(),
                                      box.offsets, int(cap), rng.state)
    if capped.any():
        raise RuntimeError(f"{int(capped.sum())} traversal walks hit the step cap")
    return counts


@dataclass
class TraversalTail:
    counts: np.ndarray
    m: np.ndarray
    survival: np.ndarray          # P(count >= m)
    ratio: float                  # fitted (1 - c0)
    c0: float


def traversal_tail(counts) -> TraversalTail:
    """Empirical tail of traversal counts and a geometric fit of its decay."""
    c = np.asarray(counts, dtype=np.int64)
    top = int(c.max()) if c.size else 0
    m = np.arange(1, top + 1)
    surv = np.array([(c >= k).mean() for k in m]) if c.size else np.zeros(0)
    pos = surv > 0
    if pos.sum() >= 2:
        slope = stats.linregress(m[pos], np.log(surv[pos])).slope
        ratio = float(math.exp(slope))
    else:
        ratio = float("nan")
    return TraversalTail(c, m, surv, ratio, 1.0 - ratio)
