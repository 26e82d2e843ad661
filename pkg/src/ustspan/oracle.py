"""Exact ground truth on tiny graphs: Kirchhoff counts, enumeration, chi-square."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .lattice import LatticeBox

MAX_VERTICES = 24
MAX_EXTRA_EDGES = 16


@dataclass
class SmallGraph:
    """Undirected multigraph on ``0..n_vertices-1``; parallel edges are kept."""

    n_vertices: int
    edges: list[tuple[int, int]]
    edge_index: dict = field(default_factory=dict, repr=False)  # physical (u, v) -> edge id

    def __post_init__(self):
        if self.n_vertices > MAX_VERTICES:
            raise ValueError(f"at most {MAX_VERTICES} vertices, got {self.n_vertices}")
        self.edges = sorted((min(u, v), max(u, v)) for u, v in self.edges if u != v) \
            if not self.edge_index else [(min(u, v), max(u, v)) for u, v in self.edges]

    @classmethod
    def from_edges(cls, n_vertices: int, edges, identify: dict | None = None) -> "SmallGraph":
        """``identify`` maps vertices onto representatives; relabels to ``0..k-1``."""
        identify = identify or {}
        rep = [identify.get(v, v) for v in range(n_vertices)]
        labels = {r: i for i, r in enumerate(sorted(set(rep)))}
        mapped = [(labels[rep[u]], labels[rep[v]]) for u, v in edges]
        return cls(len(labels), [e for e in mapped if e[0] != e[1]])

    @classmethod
    def from_box(cls, box: LatticeBox, root: np.ndarray) -> "SmallGraph":
        """Grid graph of ``box`` with the sites in ``root`` identified to vertex 0."""
        vid = np.empty(box.size, dtype=np.int64)
        vid[root] = 0
        others = np.flatnonzero(~root)
        vid[others] = np.arange(1, others.size + 1) if root.any() else np.arange(others.size)
        nv = others.size + (1 if root.any() else 0)
        coords = box.all_coords()
        edges, index = [], {}
        for u in range(box.size):
            for a in range(box.dim):
                if coords[u, a] < box.hi[a]:
                    v = u + int(box.strides[a])
                    if root[u] and root[v]:
                        continue
                    index[(u, v)] = len(edges)
                    edges.append((int(vid[u]), int(vid[v])))
        return cls(nv, edges, index)

    def laplacian(self) -> list[list[int]]:
        L = [[0] * self.n_vertices for _ in range(self.n_vertices)]
        for u, v in self.edges:
            L[u][u] += 1
            L[v][v] += 1
            L[u][v] -= 1
            L[v][u] -= 1
        return L

    def is_connected(self, edge_ids=None) -> bool:
        if self.n_vertices <= 1:
            return True
        adj = [[] for _ in range(self.n_vertices)]
        for i in (range(len(self.edges)) if edge_ids is None else edge_ids):
            u, v = self.edges[i]
            adj[u].append(v)
            adj[v].append(u)
        seen = {0}
        q = deque([0])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    q.append(y)
        return len(seen) == self.n_vertices

    def tree_key(self, parent: np.ndarray, root: np.ndarray) -> tuple[int, ...]:
        """Edge ids of a sampled tree given by parent pointers over box sites."""
        u = np.flatnonzero(~root)
        p = parent[u]
        return tuple(sorted(self.edge_index[(min(a, b), max(a, b))] for a, b in zip(u.tolist(), p.tolist())))


def bareiss_det(matrix) -> int:
    """Exact integer determinant by fraction-free elimination."""
    A = [list(map(int, row)) for row in matrix]
    n = len(A)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            for i in range(k + 1, n):
                if A[i][k] != 0:
                    A[k], A[i] = A[i], A[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1]


def matrix_tree_count(g: SmallGraph) -> int:
    if not g.is_connected():
        raise ValueError("graph is disconnected")
    L = g.laplacian()
    return bareiss_det([row[1:] for row in L[1:]])


def enumerate_spanning_trees(g: SmallGraph) -> list[tuple[int, ...]]:
    """All spanning trees as sorted tuples of edge ids, in lexicographic order."""
    if not g.is_connected():
        raise ValueError("graph is disconnected")
    need = g.n_vertices - 1
    m = len(g.edges)
    if m - need > MAX_EXTRA_EDGES:
        raise ValueError(f"more than {MAX_EXTRA_EDGES} edges beyond a spanning tree")
    out: list[tuple[int, ...]] = []

    def find(p, x):
        while p[x] != x:
            x = p[x]
        return x

    def rec(i, chosen, p):
        if len(chosen) == need:
            out.append(tuple(chosen))
            return
        if m - i < need - len(chosen):
            return
        u, v = g.edges[i]
        ru, rv = find(p, u), find(p, v)
        if ru != rv:
            q = p.copy()
            q[ru] = rv
            rec(i + 1, chosen + [i], q)
        if g.is_connected(chosen + list(range(i + 1, m))):
            rec(i + 1, chosen, p)

    rec(0, [], list(range(g.n_vertices)))
    return sorted(out)


def tree_frequencies(parents: np.ndarray, root: np.ndarray, g: SmallGraph,
                     trees: list[tuple[int, ...]]) -> np.ndarray:
    pos = {t: i for i, t in enumerate(trees)}
    counts = np.zeros(len(trees), dtype=np.int64)
    keys, mult = np.unique(parents, axis=0, return_counts=True)
    for row, c in zip(keys, mult):
        counts[pos[g.tree_key(row, root)]] += c
    return counts


def uniformity_test(frequencies, enumeration=None) -> tuple[float, float]:
    """Pearson chi-square of tree counts against the uniform law."""
    f = np.asarray(frequencies, dtype=np.float64)
    if enumeration is not None and len(enumeration) != f.size:
        raise ValueError("one count per enumerated tree expected")
    expected = f.sum() / f.size
    if expected < 5:
        raise ValueError("increase samples")
    res = stats.chisquare(f)
    return float(res.statistic), float(res.pvalue)


def two_sample_test(freq_a, freq_b) -> tuple[float, float]:
    """Chi-square homogeneity test of two count vectors over the same trees."""
    table = np.vstack([np.asarray(freq_a), np.asarray(freq_b)]).astype(np.float64)
    table = table[:, table.sum(axis=0) > 0]
    res = stats.chi2_contingency(table, correction=False)
    return float(res.statistic), float(res.pvalue)
