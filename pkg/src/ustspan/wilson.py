"""Wilson's algorithm on lattice boxes, plain and staged.

A boundary condition is realised by a set of root sites that are in the tree
from the start; wiring a set of sites to a single vertex is the same as
starting Wilson's algorithm with all of them already in the tree.  Parent
pointers keep the physical edge, so a tree edge into the wired set still
records which boundary site it lands on.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np

from .clusters import label_window, uf_find, uf_union
from .lattice import (
    FaceRegion, LatticeBox, MeshSpec, covering_net, left_face, left_strip, net_schedule,
    slice_face, snap_level,
)
from .rng import GENERATOR_NAME, RngStream
from .walks import PathRecord, StepCapExceeded, default_step_cap, pick_direction


class BoundaryCondition(str, enum.Enum):
    WIRED_ALL = "wired"                 # outer layer of the sampling box is the root
    RIGHT_WIRED = "right-wired"         # face x_1 = 1 of the unit box is the root
    FREE_WITH_WIRED_HALO = "free-halo"  # wired sampling box, analysed on the unit window
    FREE = "free"                       # unit box, root = its least site


@dataclass(frozen=True)
class Domain:
    """A lattice box with its root set and per-site allowed directions."""

    box: LatticeBox
    root: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)
    bc: BoundaryCondition = BoundaryCondition.FREE
    n: int | None = None

    @classmethod
    def for_box(cls, box: LatticeBox, bc: BoundaryCondition = BoundaryCondition.FREE,
                n: int | None = None) -> "Domain":
        bc = BoundaryCondition(bc)
        if bc in (BoundaryCondition.WIRED_ALL, BoundaryCondition.FREE_WITH_WIRED_HALO):
            root = box.boundary_mask()
        elif bc is BoundaryCondition.RIGHT_WIRED:
            root = box.all_coords()[:, 0] == box.hi[0]
        else:
            root = np.zeros(box.size, dtype=bool)
            root[0] = True
        return cls(box, root, box.free_mask(), bc, n)

    @classmethod
    def from_spec(cls, spec: MeshSpec, bc: BoundaryCondition) -> "Domain":
        bc = BoundaryCondition(bc)
        if bc in (BoundaryCondition.WIRED_ALL, BoundaryCondition.FREE_WITH_WIRED_HALO):
            box = spec.sampling_box()
        else:
            box = spec.window_box()
        return cls.for_box(box, bc, spec.n)


@dataclass
class TreeState:
    """Spanning tree of a domain with its root set identified to one vertex.

    ``parent[u] == u`` on root sites and ``-1`` on sites not (yet) in the
    tree.  ``seeds``/``branch_offsets``/``added`` record Wilson's insertion
    order: branch ``b`` added the sites ``added[branch_offsets[b]:branch_offsets[b+1]]``.
    """

    box: LatticeBox
    parent: np.ndarray = field(repr=False)
    root: np.ndarray = field(repr=False)
    n: int | None = None
    bc: BoundaryCondition = BoundaryCondition.FREE
    seeds: np.ndarray = field(default=None, repr=False)
    branch_offsets: np.ndarray = field(default=None, repr=False)
    added: np.ndarray = field(default=None, repr=False)
    walk_lengths: np.ndarray = field(default=None, repr=False)
    ordering_digest: str = "lex"
    header: dict = field(default_factory=dict)

    @property
    def in_tree(self) -> np.ndarray:
        return self.parent >= 0

    @property
    def n_sites(self) -> int:
        """Sites with the root set counted as a single vertex."""
        return int(self.in_tree.sum() - self.root.sum() + 1)

    def edges(self) -> np.ndarray:
        u = np.flatnonzero(self.in_tree & ~self.root)
        return np.stack([u, self.parent[u]], axis=1)

    @property
    def n_edges(self) -> int:
        return int((self.in_tree & ~self.root).sum())

    def coords(self, flat) -> np.ndarray:
        return self.box.decode(flat)

    def insertion_branch(self, z) -> PathRecord:
        """Sites added by the walk started at ``z``, followed by its attachment site."""
        zf = int(self.box.encode(z))
        hits = np.flatnonzero(self.seeds == zf)
        if hits.size == 0:
            raise KeyError(f"{tuple(z)} was not a Wilson start point")
        b = hits[0]
        seg = self.added[self.branch_offsets[b]:self.branch_offsets[b + 1]]
        if seg.size == 0:
            return PathRecord(self.box.decode([zf]))
        return PathRecord(self.box.decode(np.r_[seg, self.parent[seg[-1]]]))


def ordering_digest(order: np.ndarray | None) -> str:
    if order is None:
        return "lex"
    return hashlib.sha256(np.ascontiguousarray(order, dtype=np.int64).tobytes()).hexdigest()[:16]


# -- kernels ------------------------------------------------------------------------

@numba.njit(cache=True)
def _wilson(order, in_tree, nxt, mask, offsets, ndir, cap, state, added, pos0,
            branch_off, walk_len):
    """Returns -1 on success, else the index of the branch whose walk failed."""
    full = (1 << ndir) - 1
    pos = pos0
    for b in range(order.size):
        s = order[b]
        branch_off[b] = pos
        u = s
        steps = 0
        while not in_tree[u]:
            d = pick_direction(mask[u], full, ndir, state)
            if d < 0 or steps >= cap:
                walk_len[b] = steps
                return b
            v = u + offsets[d]
            nxt[u] = v
            u = v
            steps += 1
        walk_len[b] = steps
        u = s
        while not in_tree[u]:
            in_tree[u] = 1
            added[pos] = u
            pos += 1
            u = nxt[u]
    branch_off[order.size] = pos
    return -1


@numba.njit(cache=True)
def _wilson_legs(order, in_tree, nxt, mask, offsets, strides, shape, cap, state, added, pos0,
                 branch_off, walk_len, leg_r2, legs):
    """``_wilson`` that also counts completed legs of radius ``sqrt(leg_r2)`` per walk."""
    dim = strides.size
    ndir = 2 * dim
    full = (1 << ndir) - 1
    c = np.empty(dim, np.int64)
    anchor = np.empty(dim, np.int64)
    pos = pos0
    for b in range(order.size):
        s = order[b]
        branch_off[b] = pos
        for a in range(dim):
            c[a] = (s // strides[a]) % shape[a]
            anchor[a] = c[a]
        nl = 0
        u = s
        steps = 0
        while not in_tree[u]:
            d = pick_direction(mask[u], full, ndir, state)
            if d < 0 or steps >= cap:
                walk_len[b] = steps
                return b
            v = u + offsets[d]
            nxt[u] = v
            u = v
            if d & 1:
                c[d >> 1] += 1
            else:
                c[d >> 1] -= 1
            steps += 1
            if leg_r2 > 0.0:
                dd = 0.0
                for a in range(dim):
                    x = c[a] - anchor[a]
                    dd += x * x
                if dd >= leg_r2:
                    nl += 1
                    for a in range(dim):
                        anchor[a] = c[a]
        walk_len[b] = steps
        legs[b] = nl
        u = s
        while not in_tree[u]:
            in_tree[u] = 1
            added[pos] = u
            pos += 1
            u = nxt[u]
    branch_off[order.size] = pos
    return -1


@numba.njit(cache=True)
def _wilson_batch(k, order, root, mask, offsets, ndir, cap, state):
    nsite = root.size
    out = np.empty((k, nsite), np.int64)
    in_tree = np.empty(nsite, np.uint8)
    nxt = np.empty(nsite, np.int64)
    added = np.empty(nsite, np.int64)
    boff = np.empty(order.size + 1, np.int64)
    wl = np.empty(order.size, np.int64)
    for i in range(k):
        for u in range(nsite):
            in_tree[u] = root[u]
            nxt[u] = u
        bad = _wilson(order, in_tree, nxt, mask, offsets, ndir, cap, state, added, 0, boff, wl)
        if bad >= 0:
            raise RuntimeError("step cap exhausted")
        out[i] = nxt
    return out


@numba.njit(cache=True)
def _branch_diameters(branch_off, added, nxt, strides, shape, thr2):
    """Squared diameter (steps^2) of each branch including its attachment site.

    The bounding box gives lower/upper bounds; the exact pairwise scan only
    runs when the bounds straddle ``thr2``.  Returns (value, exact flag).
    """
    nb = branch_off.size - 1
    dim = strides.size
    val = np.zeros(nb)
    exact = np.zeros(nb, np.bool_)
    for b in range(nb):
        s0 = branch_off[b]
        s1 = branch_off[b + 1]
        if s1 == s0:
            exact[b] = True
            continue
        L = s1 - s0 + 1
        pts = np.empty((L, dim), np.int64)
        for j in range(L):
            u = added[s0 + j] if j < L - 1 else nxt[added[s1 - 1]]
            for a in range(dim):
                pts[j, a] = (u // strides[a]) % shape[a]
        lo_b = 0.0
        hi_b = 0.0
        for a in range(dim):
            ext = pts[:, a].max() - pts[:, a].min()
            lo_b = max(lo_b, ext * ext)
            hi_b += ext * ext
        if lo_b >= thr2 or hi_b < thr2:
            val[b] = lo_b
            continue
        best = 0.0
        for i in range(L):
            for j in range(i + 1, L):
                dd = 0.0
                for a in range(dim):
                    x = pts[i, a] - pts[j, a]
                    dd += x * x
                if dd > best:
                    best = dd
        val[b] = best
        exact[b] = True
    return val, exact


@numba.njit(cache=True)
def _first_stage_counts(order, branch_off, added, nxt, root, in_strip, tl, tr):
    """Crossings of each full branch and the running spanning-cluster count n_i."""
    nb = order.size
    cross = np.zeros(nb, np.int64)
    n_i = np.zeros(nb, np.int64)
    p = np.arange(root.size)
    size = np.ones(root.size, np.int64)
    fl = np.zeros(root.size, np.bool_)
    fr = np.zeros(root.size, np.bool_)
    span = 0
    for b in range(nb):
        # crossings along gamma_z, from z to the root set
        u = order[b]
        inside = False
        hl = False
        hr = False
        cnt = 0
        while True:
            if in_strip[u]:
                if not inside:
                    inside = True
                    hl = False
                    hr = False
                hl = hl or tl[u]
                hr = hr or tr[u]
            elif inside:
                inside = False
                if hl and hr:
                    cnt += 1
            if root[u]:
                break
            u = nxt[u]
        if inside and hl and hr:
            cnt += 1
        cross[b] = cnt
        # add the new segment to the strip forest
        s0 = branch_off[b]
        s1 = branch_off[b + 1]
        for j in range(s0, s1):
            u = added[j]
            if in_strip[u]:
                fl[u] = tl[u]
                fr[u] = tr[u]
                if fl[u] and fr[u]:
                    span += 1
        for j in range(s0, s1):
            u = added[j]
            v = nxt[u]
            if in_strip[u] and in_strip[v]:
                ra = uf_find(p, u)
                rb = uf_find(p, v)
                if ra != rb:
                    if fl[ra] and fr[ra]:
                        span -= 1
                    if fl[rb] and fr[rb]:
                        span -= 1
                    r = uf_union(p, size, ra, rb)
                    fl[r] = fl[ra] or fl[rb]
                    fr[r] = fr[ra] or fr[rb]
                    if fl[r] and fr[r]:
                        span += 1
        n_i[b] = span
    return cross, n_i


# -- plain sampling -------------------------------------------------------------------

def _state(domain: Domain):
    in_tree = domain.root.astype(np.uint8)
    nxt = np.full(domain.box.size, -1, dtype=np.int64)
    nxt[domain.root] = np.flatnonzero(domain.root)
    return in_tree, nxt


def _finish(domain, in_tree, nxt, seeds, boff, added, wl, digest, header) -> TreeState:
    parent = np.where(in_tree.astype(bool), nxt, -1)
    return TreeState(domain.box, parent, domain.root.copy(), domain.n, domain.bc, seeds, boff,
                     added, wl, digest, header)


def wilson_tree(domain: Domain, rng: RngStream, ordering=None, step_cap: int | None = None,
                header: dict | None = None) -> TreeState:
    """Uniform spanning tree of ``domain`` (root set identified) by Wilson's algorithm.

    ``ordering`` is an array of site coordinates that must contain every
    non-root site; ``None`` means lexicographic order.
    """
    box = domain.box
    if ordering is None:
        order = np.flatnonzero(~domain.root)
        digest = "lex"
    else:
        order = box.encode(np.asarray(ordering, dtype=np.int64))
        missing = np.setdiff1d(np.flatnonzero(~domain.root), order)
        if missing.size:
            raise ValueError(f"ordering misses {missing.size} non-root sites")
        digest = ordering_digest(order)
    cap = step_cap or default_step_cap(box.shape)
    in_tree, nxt = _state(domain)
    added = np.empty(box.size, dtype=np.int64)
    boff = np.empty(order.size + 1, dtype=np.int64)
    wl = np.zeros(order.size, dtype=np.int64)
    bad = _wilson(order, in_tree, nxt, domain.mask, box.offsets, 2 * box.dim, cap, rng.state,
                  added, 0, boff, wl)
    nadd = int(in_tree.sum() - domain.root.sum())
    tree = _finish(domain, in_tree, nxt, order, boff, added[:nadd], wl, digest, header or {})
    if bad >= 0:
        raise StepCapExceeded(f"walk from site {box.decode(order[bad]).tolist()} hit the step cap",
                              partial=tree)
    return tree


def tree_header(spec: MeshSpec, bc, rng: RngStream, digest: str = "lex", **extra) -> dict:
    h = {"dim": spec.dim, "n": spec.n, "enlargement": spec.enlargement,
         "bc": BoundaryCondition(bc).value, "ordering": digest, "seed": rng.seed,
         "stream": rng.stream, "cell": rng.cell, "generator": GENERATOR_NAME}
    h.update(extra)
    return h


def sample_ust(spec: MeshSpec, bc: BoundaryCondition = BoundaryCondition.FREE_WITH_WIRED_HALO,
               ordering=None, rng: RngStream | None = None) -> TreeState:
    rng = rng or RngStream(0)
    domain = Domain.from_spec(spec, bc)
    digest = "lex" if ordering is None else ordering_digest(domain.box.encode(ordering))
    return wilson_tree(domain, rng, ordering, header=tree_header(spec, bc, rng, digest))


def sample_parents_batch(domain: Domain, k: int, rng: RngStream, ordering=None) -> np.ndarray:
    """``k`` independent trees as rows of parent pointers (fast path for tiny domains)."""
    if ordering is None:
        order = np.flatnonzero(~domain.root)
    else:
        order = domain.box.encode(np.asarray(ordering, dtype=np.int64))
    return _wilson_batch(int(k), order, domain.root.astype(np.uint8), domain.mask,
                         domain.box.offsets, 2 * domain.box.dim,
                         default_step_cap(domain.box.shape), rng.state)


def branch_of(tree: TreeState, z) -> PathRecord:
    """The simple path in the tree from ``z`` to the root set."""
    z = np.asarray(z, dtype=np.int64)
    if not tree.box.contains(z):
        raise KeyError(f"{z.tolist()} is outside the tree's box")
    u = int(tree.box.encode(z))
    if tree.parent[u] < 0:
        raise KeyError(f"{z.tolist()} is not in the tree")
    path = [u]
    while not tree.root[u]:
        u = int(tree.parent[u])
        path.append(u)
    return PathRecord(tree.box.decode(np.array(path)), simple=True)


# -- dumps ------------------------------------------------------------------------

def dump_tree(tree: TreeState, fh) -> None:
    """JSON header line, then one edge per line as two coordinate tuples."""
    fh.write(json.dumps(tree.header, sort_keys=True) + "\n")
    e = tree.edges()
    a = tree.box.decode(e[:, 0])
    b = tree.box.decode(e[:, 1])
    for row in np.hstack([a, b]):
        fh.write(" ".join(str(int(v)) for v in row) + "\n")


def load_edges(fh) -> tuple[dict, np.ndarray]:
    header = json.loads(fh.readline())
    rows = [[int(v) for v in line.split()] for line in fh if line.strip()]
    return header, np.array(rows, dtype=np.int64)


# -- staged construction ----------------------------------------------------------------

@dataclass
class StageTrace:
    stage: int
    radius: Fraction                 # net radius used at this stage
    seeds: np.ndarray = field(repr=False)
    branch_offsets: np.ndarray = field(repr=False)
    walk_lengths: np.ndarray = field(repr=False)
    diameters: np.ndarray = field(repr=False)   # physical units
    W: np.ndarray = field(repr=False)
    w_threshold: float | None = None
    legs: np.ndarray = field(default=None, repr=False)
    leg_radius: float | None = None
    crossings: np.ndarray | None = field(default=None, repr=False)
    I: np.ndarray | None = field(default=None, repr=False)
    n_i: np.ndarray | None = field(default=None, repr=False)
    sites_after: int = 0
    tree_sites_end: int = 0          # prefix length of the global insertion order
    spanning_to_three_quarters: int = 0

    @property
    def n_branches(self) -> int:
        return int(self.seeds.size)

    @property
    def w_count(self) -> int:
        return int(self.W.sum())


def staged_sample(spec: MeshSpec, M: int, rng: RngStream, snapshots: bool = False,
                  step_cap: int | None = None):
    """Wilson's algorithm seeded stage by stage from nets of radius 2^-(k-1)/M.

    Stage 1 uses a net of radius ``1/M`` over ``[-1, 2]^d``; stage ``k`` a
    net of radius ``delta_k`` over ``A_k`` (every site once ``delta_k < 1/n``).
    The remaining sites are then added in lexicographic order.  Returns the
    tree, the per-stage traces and (if ``snapshots``) the ``in_tree`` mask
    after each stage.
    """
    domain = Domain.from_spec(spec, BoundaryCondition.FREE_WITH_WIRED_HALO)
    box, n, d = domain.box, spec.n, spec.dim
    sched = net_schedule(M, spec)
    cap = step_cap or default_step_cap(box.shape)
    in_tree, nxt = _state(domain)
    added = np.empty(box.size, dtype=np.int64)
    pos = 0
    traces: list[StageTrace] = []
    snaps = []
    all_seeds, all_off, all_wl = [], [], []

    strip = left_strip(Fraction(2, 3), d)
    strip_mask = box.region_mask(strip, n)
    coords = box.all_coords()
    tl = left_face(d).touches(coords, n)
    tr = slice_face(Fraction(2, 3), d).touches(coords, n)
    q_strip = left_strip(Fraction(3, 4), d)
    q_right = slice_face(Fraction(3, 4), d)
    box_region_lo, box_region_hi = box.lo, box.hi

    for k in range(1, sched.k0 + 1):
        radius = max(sched.radius(k), Fraction(1, n))
        net = covering_net(sched.region(k), radius, n).points
        net = net[np.all((net >= box_region_lo) & (net <= box_region_hi), axis=1)]
        order = box.encode(net)
        boff = np.empty(order.size + 1, dtype=np.int64)
        wl = np.zeros(order.size, dtype=np.int64)
        legs = np.zeros(order.size, dtype=np.int64)
        leg_r = math.sqrt(sched.radius(k - 1)) if k >= 2 else None
        leg_r2 = (leg_r * n) ** 2 if leg_r is not None else -1.0
        bad = _wilson_legs(order, in_tree, nxt, domain.mask, box.offsets, box.strides,
                           np.array(box.shape, dtype=np.int64), cap, rng.state, added, pos,
                           boff, wl, leg_r2, legs)
        if bad >= 0:
            tree = _finish(domain, in_tree, nxt, order, boff, added[:pos], wl, "staged", {})
            raise StepCapExceeded("staged walk hit the step cap", partial=tree)
        new_pos = int(boff[-1])

        thr = float(sched.radius(k - 1)) ** 0.25 if k >= 2 else math.inf
        thr2 = (thr * n) ** 2 if k >= 2 else math.inf
        diam2, _ = _branch_diameters(boff, added, nxt, box.strides,
                                     np.array(box.shape, dtype=np.int64), thr2)
        diam = np.sqrt(diam2) / n
        W = diam2 >= thr2 if k >= 2 else np.zeros(order.size, dtype=bool)

        trace = StageTrace(k, radius, order, boff - pos, wl, diam, W,
                           thr if k >= 2 else None, legs, leg_r)
        if k == 1:
            cross, n_i = _first_stage_counts(order, boff, added, nxt, domain.root, strip_mask,
                                             tl, tr)
            trace.crossings = cross
            trace.I = cross < M
            trace.n_i = n_i
        pos = new_pos
        trace.sites_after = int(in_tree.sum())
        trace.tree_sites_end = pos
        parent = np.where(in_tree.astype(bool), nxt, -1)
        trace.spanning_to_three_quarters = label_window(
            box, parent, parent >= 0, q_strip, left_face(d), q_right, n).N
        traces.append(trace)
        all_seeds.append(order)
        all_off.append(boff[:-1])
        all_wl.append(wl)
        if snapshots:
            snaps.append(in_tree.astype(bool))

    rest = np.flatnonzero(in_tree == 0)
    boff = np.empty(rest.size + 1, dtype=np.int64)
    wl = np.zeros(rest.size, dtype=np.int64)
    bad = _wilson(rest, in_tree, nxt, domain.mask, box.offsets, 2 * d, cap, rng.state, added,
                  pos, boff, wl)
    seeds = np.concatenate(all_seeds + [rest])
    offs = np.concatenate(all_off + [boff])
    wls = np.concatenate(all_wl + [wl])
    nadd = int(in_tree.sum() - domain.root.sum())
    header = tree_header(spec, BoundaryCondition.FREE_WITH_WIRED_HALO, rng, "staged", M=M)
    tree = _finish(domain, in_tree, nxt, seeds, offs, added[:nadd], wls, "staged", header)
    if bad >= 0:
        raise StepCapExceeded("final-stage walk hit the step cap", partial=tree)
    if snapshots:
        return tree, traces, snaps
    return tree, traces


def second_stage_face(M: int, dim: int, n: int) -> FaceRegion:
    """``{x_1 = 2/3 + M^-1/4}`` snapped down to the lattice."""
    return slice_face(snap_level(2 / 3 + M ** -0.25, n, "down"), dim)
