"""Simple random walks with stopping rules, loop-erasure and leg decomposition."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np
from numba import types
from numba.typed import Dict

from .lattice import BoxRegion
from .rng import RngStream, bounded


class StepCapExceeded(RuntimeError):
    """Raised when a walk hits its step cap; ``partial`` holds what was built."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


@dataclass
class PathRecord:
    """Sites ``lambda(0..m)`` as an ``(m+1, d)`` integer array."""

    sites: np.ndarray
    simple: bool = False

    def __post_init__(self):
        s = np.asarray(self.sites, dtype=np.int64)
        if s.ndim != 2 or s.shape[0] == 0:
            raise ValueError("a path needs at least one site")
        self.sites = s
        steps = np.abs(np.diff(s, axis=0)).sum(axis=1)
        if np.any(steps != 1):
            raise ValueError("consecutive sites are not lattice neighbours")
        if self.simple and len(np.unique(s, axis=0)) != len(s):
            raise ValueError("path flagged simple has a repeated site")

    def __len__(self):
        return self.sites.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    def is_simple(self) -> bool:
        return len(np.unique(self.sites, axis=0)) == len(self.sites)

    def as_tuples(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in row) for row in self.sites]


@dataclass
class StopRule:
    """Stop on ``targets`` or on leaving the ball ``|x - center| < radius``.

    Both parts are optional; ``step_cap`` always applies (``None`` picks the
    default cap of the domain).  ``radius`` is in physical units.
    """

    targets: np.ndarray | None = None
    center: Sequence[int] | None = None
    radius: float | None = None
    step_cap: int | None = None

    @classmethod
    def hit_set(cls, sites, step_cap=None):
        return cls(targets=np.atleast_2d(np.asarray(sites, dtype=np.int64)), step_cap=step_cap)

    hit_absorber = hit_set

    @classmethod
    def exit_ball(cls, center, radius, step_cap=None):
        return cls(center=tuple(center), radius=float(radius), step_cap=step_cap)

    @classmethod
    def cap(cls, steps: int):
        return cls(step_cap=int(steps))


def default_step_cap(shape) -> int:
    side = max(4, max(shape))
    return 64 * side ** 3


@numba.njit(cache=True)
def pick_direction(bits, full, ndir, state):
    """Uniform choice among the set bits of ``bits``; -1 if none."""
    if bits == full:
        return bounded(state, ndir)
    deg = 0
    for d in range(ndir):
        if (bits >> d) & 1:
            deg += 1
    if deg == 0:
        return -1
    r = bounded(state, deg)
    for d in range(ndir):
        if (bits >> d) & 1:
            if r == 0:
                return d
            r -= 1
    return -1


@numba.njit(cache=True)
def _walk(start, coords0, mask, offsets, target, center, r2, cap, state):
    dim = coords0.size
    ndir = 2 * dim
    full = (1 << ndir) - 1
    c = coords0.copy()
    buf = np.empty(1024, np.int64)
    buf[0] = start
    m = 0
    u = start
    while True:
        if target[u]:
            return buf[: m + 1], 0
        if r2 >= 0.0:
            dd = 0.0
            for a in range(dim):
                x = c[a] - center[a]
                dd += x * x
            if dd >= r2:
                return buf[: m + 1], 0
        if m >= cap:
            return buf[: m + 1], 1
        d = pick_direction(mask[u], full, ndir, state)
        if d < 0:
            return buf[: m + 1], 2
        u += offsets[d]
        if d & 1:
            c[d >> 1] += 1
        else:
            c[d >> 1] -= 1
        m += 1
        if m >= buf.size:
            nb = np.empty(2 * buf.size, np.int64)
            nb[: buf.size] = buf
            buf = nb
        buf[m] = u


def srw_run(start, rule: StopRule, domain: BoxRegion, rng: RngStream, n: int = 1) -> PathRecord:
    """Run a simple random walk in ``domain`` (reduced degree at its faces)."""
    box = domain.lattice(n)
    start = np.asarray(start, dtype=np.int64)
    if not box.contains(start):
        raise ValueError("start outside domain")
    target = np.zeros(box.size, dtype=np.uint8)
    if rule.targets is not None and len(rule.targets):
        t = np.atleast_2d(np.asarray(rule.targets, dtype=np.int64))
        t = t[box.contains(t)]
        target[box.encode(t)] = 1
    if rule.radius is not None:
        center = np.asarray(rule.center, dtype=np.float64)
        r2 = (rule.radius * n) ** 2
    else:
        center = np.zeros(box.dim)
        r2 = -1.0
    cap = rule.step_cap if rule.step_cap is not None else default_step_cap(box.shape)
    trace, status = _walk(int(box.encode(start)), start, box.free_mask(), box.offsets,
                          target, center, r2, int(cap), rng.state)
    path = PathRecord(box.decode(trace))
    if status == 1:
        raise StepCapExceeded(f"step cap {cap} exhausted", partial=path)
    return path


def walk_trace(start, steps: int, rng: RngStream) -> PathRecord:
    """Unconstrained walk on Z^d of exactly ``steps`` steps."""
    start = np.asarray(start, dtype=np.int64)
    d = start.size
    dirs = rng.integers(2 * d, steps)
    moves = np.zeros((steps, d), dtype=np.int64)
    moves[np.arange(steps), dirs >> 1] = np.where(dirs & 1, 1, -1)
    sites = np.vstack([start, start + np.cumsum(moves, axis=0)])
    return PathRecord(sites)


# -- loop erasure -----------------------------------------------------------------

def _site_keys(sites: np.ndarray) -> np.ndarray:
    lo = sites.min(axis=0)
    span = sites.max(axis=0) - lo + 1
    mult = np.ones(sites.shape[1], dtype=np.int64)
    for a in range(sites.shape[1] - 2, -1, -1):
        mult[a] = mult[a + 1] * span[a + 1]
    return (sites - lo) @ mult


def loop_erase(path: PathRecord) -> PathRecord:
    """Chronological loop-erasure by the last-visit recursion.

    ``s_0`` is the last visit to ``lambda(0)`` and ``s_i`` the last visit to
    ``lambda(s_{i-1} + 1)``; the result is ``lambda(s_0), ..., lambda(s_n)``.
    """
    sites = path.sites
    m = len(sites) - 1
    keys = _site_keys(sites)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    group_end = np.r_[np.flatnonzero(ks[1:] != ks[:-1]), m]
    group_id = np.cumsum(np.r_[0, ks[1:] != ks[:-1]])
    last = np.empty(m + 1, dtype=np.int64)
    last[order] = order[group_end[group_id]]
    s = [int(last[0])]
    while s[-1] < m:
        s.append(int(last[s[-1] + 1]))
    return PathRecord(sites[s], simple=False)


class LoopEraser:
    """Streaming loop-erasure: memory grows with the erased path only."""

    def __init__(self):
        self._stack: list[tuple[int, ...]] = []
        self._pos: dict[tuple[int, ...], int] = {}

    def push(self, site) -> None:
        site = tuple(int(v) for v in site)
        i = self._pos.get(site)
        if i is None:
            self._pos[site] = len(self._stack)
            self._stack.append(site)
            return
        for old in self._stack[i + 1:]:
            del self._pos[old]
        del self._stack[i + 1:]

    def __len__(self):
        return len(self._stack)

    def path(self) -> PathRecord:
        return PathRecord(np.array(self._stack, dtype=np.int64).reshape(len(self._stack), -1))


@numba.njit(cache=True)
def _erase_stream(sites):
    dim = sites.shape[1]
    bits = 63 // dim
    off = np.int64(1) << np.int64(bits - 1)
    lim = off - 1
    pos = Dict.empty(key_type=types.int64, value_type=types.int64)
    stack = np.empty(64, np.int64)     # indices into ``sites``
    keys = np.empty(64, np.int64)
    top = 0
    for j in range(sites.shape[0]):
        key = np.int64(0)
        for a in range(dim):
            v = sites[j, a]
            if v > lim or v < -off:
                raise ValueError("coordinate out of encodable range")
            key = (key << np.int64(bits)) | (v + off)
        i = pos.get(key, -1)
        if i < 0:
            if top >= stack.size:
                ns = np.empty(2 * stack.size, np.int64)
                ns[:top] = stack[:top]
                stack = ns
                nk = np.empty(2 * keys.size, np.int64)
                nk[:top] = keys[:top]
                keys = nk
            pos[key] = top
            stack[top] = j
            keys[top] = key
            top += 1
        else:
            for t in range(i + 1, top):
                del pos[keys[t]]
            top = i + 1
    return stack[:top]


def loop_erase_incremental(steps: Iterable | PathRecord | np.ndarray) -> PathRecord:
    """Stack-based loop-erasure fed one site at a time.

    Arrays and ``PathRecord`` inputs run through a compiled kernel with the
    same stack algorithm; any other iterable goes through ``LoopEraser``.
    """
    if isinstance(steps, PathRecord):
        steps = steps.sites
    if isinstance(steps, np.ndarray):
        sites = np.ascontiguousarray(steps, dtype=np.int64)
        return PathRecord(sites[_erase_stream(sites)])
    er = LoopEraser()
    for s in steps:
        er.push(s)
    if not len(er):
        raise ValueError("empty step stream")
    return er.path()


# -- legs ----------------------------------------------------------------------------

@numba.njit(cache=True)
def leg_times(coords, r2):
    out = [0]
    anchor = 0
    dim = coords.shape[1]
    for j in range(1, coords.shape[0]):
        dd = 0.0
        for a in range(dim):
            x = coords[j, a] - coords[anchor, a]
            dd += x * x
        if dd >= r2:
            out.append(j)
            anchor = j
    return np.array(out, dtype=np.int64)


def leg_decomposition(path: PathRecord, leg_radius: float, n: int = 1) -> list[int]:
    """Times ``u_0 = 0 < u_1 < ...`` at which the walk has moved ``leg_radius``
    from its position at the previous time; the unfinished last leg is dropped."""
    r = float(leg_radius) * n
    if r < 1:
        raise ValueError("leg radius below one lattice step")
    return leg_times(path.sites, r * r).tolist()


def dump_path(path: PathRecord, fh) -> None:
    for row in path.sites:
        fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_path(fh) -> PathRecord:
    rows = [[int(v) for v in line.split()] for line in fh if line.strip()]
    return PathRecord(np.array(rows, dtype=np.int64))
