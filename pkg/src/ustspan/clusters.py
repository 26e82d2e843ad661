"""Restriction of a tree to a window, its clusters, and crossing counts."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numba
import numpy as np

from .lattice import BoxRegion, FaceRegion, LatticeBox, MeshSpec, unit_window
from .walks import PathRecord

if TYPE_CHECKING:
    from .wilson import TreeState


@numba.njit(cache=True)
def uf_find(p, x):
    while p[x] != x:
        p[x] = p[p[x]]
        x = p[x]
    return x


@numba.njit(cache=True)
def uf_union(p, size, a, b):
    """Union by size; returns the surviving root."""
    ra = uf_find(p, a)
    rb = uf_find(p, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    p[rb] = ra
    size[ra] += size[rb]
    return ra


@numba.njit(cache=True)
def _label(nsites, eu, ev):
    p = np.arange(nsites)
    size = np.ones(nsites, np.int64)
    for i in range(eu.size):
        uf_union(p, size, eu[i], ev[i])
    first = np.full(nsites, -1, np.int64)
    lab = np.empty(nsites, np.int64)
    for i in range(nsites):
        r = uf_find(p, i)
        if first[r] < 0:
            first[r] = i
        lab[i] = first[r]
    return lab


def components(nsites: int, eu: np.ndarray, ev: np.ndarray) -> np.ndarray:
    """Label ``0..nsites-1`` by the smallest vertex of their component."""
    return _label(int(nsites), np.asarray(eu, np.int64), np.asarray(ev, np.int64))


@dataclass
class ClusterLabeling:
    box: LatticeBox
    sites: np.ndarray           # flat indices of the window sites, ascending
    component: np.ndarray       # per site: flat index of its component's least site
    comp_ids: np.ndarray        # distinct component ids, ascending
    sizes: np.ndarray
    left: np.ndarray            # per component
    right: np.ndarray

    @property
    def spanning(self) -> np.ndarray:
        return self.left & self.right

    @property
    def N(self) -> int:
        return int(self.spanning.sum())

    @property
    def n_components(self) -> int:
        return int(self.comp_ids.size)

    def coords(self) -> np.ndarray:
        return self.box.decode(self.sites)

    def site_spanning(self) -> np.ndarray:
        span_ids = self.comp_ids[self.spanning]
        return np.isin(self.component, span_ids)

    def dump_csv(self, fh) -> None:
        w = csv.writer(fh)
        d = self.box.dim
        w.writerow([f"x{a + 1}" for a in range(d)] + ["component", "spanning"])
        span = self.site_spanning()
        for c, comp, s in zip(self.coords(), self.component, span):
            w.writerow([*map(int, c), int(comp), int(s)])


def label_window(box: LatticeBox, parent: np.ndarray, include: np.ndarray | None,
                 window: BoxRegion, left: FaceRegion, right: FaceRegion, n: int) -> ClusterLabeling:
    """Components of the forest ``{u, parent[u]}`` restricted to ``window``.

    ``parent[u] == u`` marks a root site (no edge); sites with
    ``include[u]`` false are treated as absent.
    """
    lo, hi = window.steps(n)
    if np.any(lo < box.lo) or np.any(hi > box.hi):
        raise ValueError("window exceeds the sampled domain")
    sites = box.sub_indices(lo, hi)
    if include is not None:
        sites = sites[include[sites]]
    par = parent[sites]
    if sites.size:
        loc = np.minimum(np.searchsorted(sites, par), sites.size - 1)
        in_win = (par != sites) & (sites[loc] == par)
    else:
        loc = in_win = np.zeros(0, dtype=np.int64)
    eu = np.flatnonzero(in_win)
    ev = loc[in_win]
    lab = components(sites.size, eu, ev)
    comp_local, inverse, sizes = np.unique(lab, return_inverse=True, return_counts=True)
    coords = box.decode(sites)
    tl = left.touches(coords, n)
    tr = right.touches(coords, n)
    lflag = np.zeros(comp_local.size, dtype=bool)
    rflag = np.zeros(comp_local.size, dtype=bool)
    np.logical_or.at(lflag, inverse, tl)
    np.logical_or.at(rflag, inverse, tr)
    return ClusterLabeling(box, sites, sites[lab], sites[comp_local], sizes, lflag, rflag)


def _tree_n(tree, spec) -> int:
    if spec is not None:
        return spec.n if isinstance(spec, MeshSpec) else int(spec)
    if tree.n is None:
        raise ValueError("mesh size unknown; pass spec")
    return tree.n


def count_spanning_clusters(tree: "TreeState", window: BoxRegion | None = None,
                            spec: MeshSpec | int | None = None) -> tuple[int, ClusterLabeling]:
    """Number of clusters touching both the left and right faces of ``window``.

    Faces are ``x_1 = window.lo[0]`` and ``x_1 = window.hi[0]``; for the
    default unit window these are F and G.
    """
    n = _tree_n(tree, spec)
    window = window or unit_window(tree.box.dim)
    left = FaceRegion(0, window.lo[0], window)
    right = FaceRegion(0, window.hi[0], window)
    lab = label_window(tree.box, tree.parent, tree.in_tree, window, left, right, n)
    return lab.N, lab


def spanning_clusters_between(tree: "TreeState", left: FaceRegion, right: FaceRegion,
                              strip: BoxRegion, spec: MeshSpec | int | None = None,
                              include: np.ndarray | None = None) -> int:
    """Clusters of the restriction to ``strip`` meeting both faces."""
    n = _tree_n(tree, spec)
    inc = tree.in_tree if include is None else include & tree.in_tree
    lo, hi = strip.steps(n)
    if np.any(lo > hi):
        return 0
    return label_window(tree.box, tree.parent, inc, strip, left, right, n).N


@dataclass(frozen=True)
class CrossingReport:
    path_id: int
    count: int
    M: int | None = None

    @property
    def i_event(self) -> bool | None:
        return None if self.M is None else self.count < self.M


def crossing_count(in_strip: np.ndarray, tl: np.ndarray, tr: np.ndarray) -> int:
    """Maximal runs of ``in_strip`` that contain a ``tl`` and a ``tr`` entry."""
    if in_strip.size == 0:
        return 0
    x = in_strip.astype(np.int8)
    edges = np.diff(np.r_[0, x, 0])
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    cl = np.r_[0, np.cumsum(tl & in_strip)]
    cr = np.r_[0, np.cumsum(tr & in_strip)]
    return int(np.sum(((cl[ends] - cl[starts]) > 0) & ((cr[ends] - cr[starts]) > 0)))


def count_crossings(path: PathRecord, left: FaceRegion, right: FaceRegion, strip: BoxRegion,
                    spec: MeshSpec | int, M: int | None = None, path_id: int = 0) -> CrossingReport:
    """Crossings of ``path`` between two faces inside ``strip``."""
    n = spec.n if isinstance(spec, MeshSpec) else int(spec)
    s = path.sites
    return CrossingReport(path_id, crossing_count(strip.contains(s, n), left.touches(s, n),
                                                  right.touches(s, n)), M)
