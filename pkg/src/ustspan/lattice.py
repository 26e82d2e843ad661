"""Integer lattice geometry: boxes, faces, covering nets and the net schedule.

Sites are integer coordinate tuples; the physical position of a site is
``coords / n``.  Region bounds are kept as exact fractions and every
membership test is done in integer arithmetic after scaling by ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

SitePoint = tuple[int, ...]

# a* with a* * sum_{k>=1} k^-2 = 1/10, i.e. a* * pi^2/6 = 1/10
A_STAR = 3.0 / (5.0 * math.pi ** 2)


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class MeshSpec:
    """Lattice ``(1/n) Z^dim`` sampled on the unit window enlarged by ``enlargement``."""

    dim: int
    n: int
    enlargement: float = 3

    def __post_init__(self):
        if self.dim not in (2, 3, 4):
            raise ValueError(f"dim must be 2, 3 or 4, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.enlargement < 1:
            raise ValueError(f"enlargement must be >= 1, got {self.enlargement}")

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.n)

    @property
    def pad(self) -> int:
        """Lattice steps between the unit window and the sampling box face."""
        return int(round((self.enlargement - 1) * self.n / 2))

    def sampling_box(self) -> "LatticeBox":
        return LatticeBox.cube(self.dim, -self.pad, self.n + self.pad)

    def window_box(self) -> "LatticeBox":
        return LatticeBox.cube(self.dim, 0, self.n)


@dataclass(frozen=True)
class BoxRegion:
    """Closed axis-aligned box ``prod [lo_i, hi_i]`` in physical units."""

    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __init__(self, lo: Sequence, hi: Sequence):
        lo = tuple(_frac(v) for v in lo)
        hi = tuple(_frac(v) for v in hi)
        if len(lo) != len(hi):
            raise ValueError("lo and hi differ in dimension")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"empty box: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, lo, hi) -> "BoxRegion":
        return cls((lo,) * dim, (hi,) * dim)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def steps(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Integer bounds of the lattice sites inside the box (snapped inward)."""
        lo = np.array([math.ceil(v * n) for v in self.lo], dtype=np.int64)
        hi = np.array([math.floor(v * n) for v in self.hi], dtype=np.int64)
        return lo, hi

    def lattice(self, n: int) -> "LatticeBox":
        lo, hi = self.steps(n)
        if np.any(lo > hi):
            raise ValueError("box contains no lattice sites")
        return LatticeBox(lo, hi)

    def contains(self, coords, n: int) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        lo, hi = self.steps(n)
        return np.all((c >= lo) & (c <= hi), axis=-1)

    def sites(self, n: int) -> np.ndarray:
        return self.lattice(n).all_coords()


@dataclass(frozen=True)
class FaceRegion:
    """Hyperplane slice ``{x[axis] = level}``, optionally clipped to a box.

    A site touches the face when its distance to the hyperplane is strictly
    below one lattice step and its projection lies in the clip box.
    """

    axis: int
    level: Fraction
    clip: BoxRegion | None = None

    def __init__(self, axis: int, level, clip: BoxRegion | None = None):
        object.__setattr__(self, "axis", int(axis))
        object.__setattr__(self, "level", _frac(level))
        object.__setattr__(self, "clip", clip)

    def touches(self, coords, n: int) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        scaled = self.level * n
        p, q = scaled.numerator, scaled.denominator
        ok = np.abs(c[..., self.axis] * q - p) < q
        if self.clip is not None:
            lo, hi = self.clip.steps(n)
            for a in range(c.shape[-1]):
                if a != self.axis:
                    ok &= (c[..., a] >= lo[a]) & (c[..., a] <= hi[a])
        return ok


def snap_level(value: float, n: int, inward: str = "down") -> Fraction:
    """Snap a float physical level to the lattice (``down`` = floor, ``up`` = ceil)."""
    f = math.floor if inward == "down" else math.ceil
    return Fraction(f(value * n), n)


# -- regions used by the staged construction -------------------------------

def unit_window(dim: int) -> BoxRegion:
    return BoxRegion.cube(dim, 0, 1)


def outer_region(dim: int) -> BoxRegion:
    """The box ``[-1, 2]^dim`` covered by the first-stage net."""
    return BoxRegion.cube(dim, -1, 2)


def left_face(dim: int) -> FaceRegion:
    return FaceRegion(0, 0, unit_window(dim))


def right_face(dim: int) -> FaceRegion:
    return FaceRegion(0, 1, unit_window(dim))


def slice_face(level, dim: int) -> FaceRegion:
    """``{x_1 = level}`` inside the unit window."""
    return FaceRegion(0, level, unit_window(dim))


def left_strip(level, dim: int) -> BoxRegion:
    """``{x in [0,1]^dim : x_1 <= level}``."""
    return BoxRegion((0,) * dim, (_frac(level),) + (1,) * (dim - 1))


# -- integer boxes ----------------------------------------------------------

class LatticeBox:
    """Integer box ``prod [lo_i, hi_i]`` with C-order flat indexing.

    Flat index order coincides with lexicographic order of coordinates.
    Direction ``2a`` steps by ``-e_a`` and ``2a+1`` by ``+e_a``.
    """

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.int64).copy()
        self.hi = np.asarray(hi, dtype=np.int64).copy()
        if self.lo.shape != self.hi.shape or np.any(self.lo > self.hi):
            raise ValueError(f"bad lattice box {lo}..{hi}")
        self.dim = self.lo.size
        self.shape = tuple(int(s) for s in self.hi - self.lo + 1)
        self.size = int(np.prod(self.shape))
        strides = np.ones(self.dim, dtype=np.int64)
        for a in range(self.dim - 2, -1, -1):
            strides[a] = strides[a + 1] * self.shape[a + 1]
        self.strides = strides
        offs = np.empty(2 * self.dim, dtype=np.int64)
        offs[0::2] = -strides
        offs[1::2] = strides
        self.offsets = offs

    @classmethod
    def cube(cls, dim: int, lo: int, hi: int) -> "LatticeBox":
        return cls([lo] * dim, [hi] * dim)

    def __repr__(self):
        return f"LatticeBox(lo={self.lo.tolist()}, hi={self.hi.tolist()})"

    def __eq__(self, other):
        return (isinstance(other, LatticeBox) and np.array_equal(self.lo, other.lo)
                and np.array_equal(self.hi, other.hi))

    def __hash__(self):
        return hash((tuple(self.lo), tuple(self.hi)))

    def contains(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        return np.all((c >= self.lo) & (c <= self.hi), axis=-1)

    def encode(self, coords) -> np.ndarray:
        c = np.asarray(coords, dtype=np.int64)
        if not np.all(self.contains(c)):
            raise ValueError("site outside lattice box")
        return (c - self.lo) @ self.strides

    def decode(self, flat) -> np.ndarray:
        f = np.asarray(flat, dtype=np.int64)
        out = np.empty(f.shape + (self.dim,), dtype=np.int64)
        rem = f.copy()
        for a in range(self.dim):
            out[..., a], rem = np.divmod(rem, self.strides[a])
        return out + self.lo

    def all_coords(self) -> np.ndarray:
        grids = np.indices(self.shape, dtype=np.int64).reshape(self.dim, -1).T
        return grids + self.lo

    def sub_indices(self, lo, hi) -> np.ndarray:
        """Flat indices (ascending) of the sites of ``[lo, hi]`` clipped to this box."""
        lo = np.maximum(np.asarray(lo, dtype=np.int64), self.lo)
        hi = np.minimum(np.asarray(hi, dtype=np.int64), self.hi)
        if np.any(lo > hi):
            return np.empty(0, dtype=np.int64)
        sub = LatticeBox(lo, hi)
        return self.encode(sub.all_coords())

    def region_mask(self, region: BoxRegion, n: int) -> np.ndarray:
        lo, hi = region.steps(n)
        mask = np.zeros(self.size, dtype=np.bool_)
        mask[self.sub_indices(lo, hi)] = True
        return mask

    def face_mask(self, face: FaceRegion, n: int) -> np.ndarray:
        return face.touches(self.all_coords(), n)

    def boundary_mask(self) -> np.ndarray:
        c = self.all_coords()
        return np.any((c == self.lo) | (c == self.hi), axis=1)

    def free_mask(self) -> np.ndarray:
        """Per-site bitmask of directions that stay inside the box."""
        c = self.all_coords()
        full = (1 << (2 * self.dim)) - 1
        mask = np.full(self.size, full, dtype=np.uint8)
        for a in range(self.dim):
            mask[c[:, a] == self.lo[a]] &= np.uint8(~(1 << (2 * a)) & 0xFF)
            mask[c[:, a] == self.hi[a]] &= np.uint8(~(1 << (2 * a + 1)) & 0xFF)
        return mask

    def steps_to(self, flat_u: int, flat_v: int) -> int:
        """Direction index taking site ``u`` to its neighbour ``v``."""
        hits = np.flatnonzero(self.offsets == flat_v - flat_u)
        if hits.size != 1:
            raise ValueError("sites are not neighbours")
        return int(hits[0])


def neighbors(p: Sequence[int], spec: MeshSpec, domain: BoxRegion) -> list[SitePoint]:
    """In-domain lattice neighbours of ``p``, axis-major, negative step first."""
    lo, hi = domain.steps(spec.n)
    p = tuple(int(v) for v in p)
    if not all(lo[a] <= p[a] <= hi[a] for a in range(len(p))):
        raise ValueError(f"site {p} not in domain")
    out = []
    for a in range(len(p)):
        for s in (-1, 1):
            q = list(p)
            q[a] += s
            if lo[a] <= q[a] <= hi[a]:
                out.append(tuple(q))
    return out


# -- covering nets ------------------------------------------------------------

@dataclass(frozen=True)
class CoveringNet:
    points: np.ndarray = field(repr=False)
    radius: float
    bound: int          # ceil(side / (radius/sqrt d) + 1)^d
    paper_bound: float  # 1e5 * radius^-d, the 1e5 M^3 style bound

    def __len__(self):
        return len(self.points)


def _axis_positions(length: int, t: float) -> np.ndarray:
    if length == 0:
        return np.zeros(1, dtype=np.int64)
    count = min(math.ceil(length / t) + 1, length + 1)
    j = np.arange(count, dtype=np.int64)
    # round(j * length / (count - 1)) in integer arithmetic
    return (2 * j * length + (count - 1)) // (2 * (count - 1))


def covering_net(region: BoxRegion, radius, spec: MeshSpec | int) -> CoveringNet:
    """Grid of sites whose open balls of ``radius`` cover every site of ``region``.

    Per axis the grid has ``ceil(side*n / t) + 1`` evenly spread points with
    ``t = radius*n/sqrt(d)``, so consecutive points are at most ``ceil(t)``
    steps apart and every site is within ``sqrt(d)*floor(ceil(t)/2) < radius*n``
    steps of one of them.
    """
    n = spec if isinstance(spec, int) else spec.n
    r = _frac(radius)
    if r < Fraction(1, n):
        raise ValueError("net finer than mesh")
    d = region.dim
    lo, hi = region.steps(n)
    if np.any(lo > hi):
        raise ValueError("region contains no lattice sites")
    t = float(r) * n / math.sqrt(d)
    axes = [lo[a] + _axis_positions(int(hi[a] - lo[a]), t) for a in range(d)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)
    bound = 1
    for a in range(d):
        bound *= math.ceil((hi[a] - lo[a]) / t + 1) if hi[a] > lo[a] else 1
    return CoveringNet(pts, float(r), bound, 1e5 * float(r) ** (-d))


# -- net schedule ---------------------------------------------------------------

@dataclass(frozen=True)
class NetSchedule:
    """Radii ``delta_k = 2^-(k-1)/M`` and shrinking boxes ``A_k`` for k = 1..k0."""

    M: int
    n: int
    dim: int
    a_star: float
    eta: tuple[float, ...]
    delta_k: tuple[Fraction, ...]
    k0: int
    regions: tuple[BoxRegion, ...]

    def region(self, k: int) -> BoxRegion:
        return self.regions[k - 1]

    def radius(self, k: int) -> Fraction:
        return self.delta_k[k - 1]


def eta_offsets(kmax: int) -> np.ndarray:
    """``eta_1 = 0``, ``eta_k = a* sum_{j<k} j^-2``."""
    j = np.arange(1, kmax, dtype=np.float64)
    return np.concatenate([[0.0], A_STAR * np.cumsum(1.0 / j ** 2)])


def net_schedule(M: int, spec: MeshSpec) -> NetSchedule:
    if M < 1:
        raise ValueError("M must be >= 1")
    if Fraction(1, spec.n) >= Fraction(1, M):
        raise ValueError("mesh too coarse for M")
    # delta_k < 1/n  <=>  M 2^(k-1) > n
    k0 = 1
    while M * 2 ** (k0 - 1) <= spec.n:
        k0 += 1
    eta = eta_offsets(k0)
    deltas = tuple(Fraction(1, M * 2 ** (k - 1)) for k in range(1, k0 + 1))
    regions = []
    for e in eta:
        lo = Fraction(math.ceil((-1 + e) * spec.n), spec.n)
        hi = Fraction(math.floor((2 - e) * spec.n), spec.n)
        regions.append(BoxRegion.cube(spec.dim, lo, hi))
    total = sum(float(dk) ** 0.25 for dk in deltas)
    assert total <= 10 * M ** -0.25
    return NetSchedule(M, spec.n, spec.dim, A_STAR, tuple(float(e) for e in eta),
                       deltas, k0, tuple(regions))
