import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ustspan.lattice import (A_STAR, BoxRegion, FaceRegion, LatticeBox, MeshSpec, covering_net,
                             eta_offsets, left_face, net_schedule, neighbors, outer_region,
                             right_face, snap_level, unit_window)


def test_mesh_spec_validation():
    with pytest.raises(ValueError):
        MeshSpec(5, 8)
    with pytest.raises(ValueError):
        MeshSpec(3, 1)
    with pytest.raises(ValueError):
        MeshSpec(3, 8, enlargement=0.5)
    spec = MeshSpec(3, 8)
    assert spec.delta == Fraction(1, 8)
    assert spec.pad == 8
    assert spec.sampling_box().shape == (25, 25, 25)


def test_figure_box_size():
    spec = MeshSpec(2, 114, enlargement=2)
    assert spec.sampling_box().shape == (229, 229)
    assert spec.window_box().shape == (115, 115)


@pytest.mark.parametrize("dim,p,domain,expected", [
    (3, (5, 5, 5), BoxRegion.cube(3, 0, 1), 6),
    (3, (0, 0, 0), BoxRegion.cube(3, 0, 1), 3),
    (3, (10, 0, 10), BoxRegion.cube(3, 0, 1), 3),
    (2, (0, 1), BoxRegion.cube(2, 0, 1), 3),
])
def test_neighbor_degrees(dim, p, domain, expected):
    nb = neighbors(p, MeshSpec(dim, 10), domain)
    assert len(nb) == expected
    for q in nb:
        assert sum(abs(a - b) for a, b in zip(p, q)) == 1


def test_neighbors_outside_domain():
    with pytest.raises(ValueError):
        neighbors((11, 0), MeshSpec(2, 10), BoxRegion.cube(2, 0, 1))


def test_encode_decode_roundtrip():
    box = LatticeBox([-2, 0, 1], [3, 2, 4])
    flat = np.arange(box.size)
    assert np.array_equal(box.encode(box.decode(flat)), flat)
    # C order equals lexicographic order
    c = box.all_coords()
    assert np.array_equal(np.lexsort(c.T[::-1]), flat)


def test_free_mask_degrees():
    box = LatticeBox.cube(3, 0, 4)
    deg = np.array([bin(int(b)).count("1") for b in box.free_mask()])
    c = box.all_coords()
    on_face = ((c == 0) | (c == 4)).sum(axis=1)
    assert np.array_equal(deg, 6 - on_face)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.fractions(-2, 3, max_denominator=12),
       st.fractions(0, 2, max_denominator=12), st.lists(st.integers(-40, 40), min_size=2, max_size=2))
def test_region_membership_is_exact(n, lo, width, site):
    region = BoxRegion((lo, lo), (lo + width, lo + width))
    exact = all(region.lo[a] <= Fraction(site[a], n) <= region.hi[a] for a in range(2))
    assert bool(region.contains(site, n)) == exact


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.fractions(-1, 2, max_denominator=24), st.integers(-40, 40))
def test_face_touch_is_strict_distance(n, level, x):
    face = FaceRegion(0, level)
    assert bool(face.touches([x, 0], n)) == (abs(Fraction(x, n) - level) < Fraction(1, n))


def test_face_clip():
    f = FaceRegion(0, 0, unit_window(2))
    assert f.touches([[0, 0], [0, 4], [0, 5], [1, 0]], 4).tolist() == [True, True, False, False]


def test_snap_level_inward():
    assert snap_level(2 / 3, 9, "down") == Fraction(6, 9)
    assert snap_level(2 / 3 + 1e-9, 10, "up") == Fraction(7, 10)


def test_covering_net_interval():
    net = covering_net(BoxRegion((0,), (1,)), Fraction(1, 2), 10)
    assert sorted(net.points[:, 0].tolist()) == [0, 5, 10]


def _max_gap(net, region, n):
    sites = region.sites(n)
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(net.points).query(sites)
    return dist.max()


def test_covering_net_A_exhaustive():
    n, M = 8, 2
    net = covering_net(outer_region(3), Fraction(1, M), n)
    assert _max_gap(net, outer_region(3), n) < n / M
    assert len(net) <= net.bound
    assert len(net) <= 1e5 * M ** 3


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 3), st.integers(2, 10), st.fractions(-1, 1, max_denominator=6),
       st.fractions(Fraction(1, 6), 2, max_denominator=6), st.integers(1, 12))
def test_covering_net_random_pairs(dim, n, lo, width, rnum):
    region = BoxRegion.cube(dim, lo, lo + width)
    r = Fraction(rnum, 4 * n)
    lo_s, hi_s = region.steps(n)
    if np.any(lo_s > hi_s):
        return
    if r < Fraction(1, n):
        with pytest.raises(ValueError, match="finer than mesh"):
            covering_net(region, r, n)
        return
    net = covering_net(region, r, n)
    assert _max_gap(net, region, n) < float(r) * n
    assert len(net) <= net.bound
    assert region.contains(net.points, n).all()


def test_eta_schedule():
    eta = eta_offsets(200)
    assert eta[0] == 0
    assert eta[1] == pytest.approx(3 / (5 * math.pi ** 2))
    assert eta[1] == pytest.approx(0.06079, abs=1e-5)
    assert np.all(np.diff(eta) > 0)
    assert A_STAR * math.pi ** 2 / 6 == pytest.approx(0.1)
    assert eta[-1] < 0.1 and eta[-1] == pytest.approx(0.1, abs=1e-3)


def test_net_schedule_k0():
    s = net_schedule(4, MeshSpec(3, 64))
    assert s.k0 == 6
    assert s.radius(5) == Fraction(1, 64)
    assert s.radius(6) < Fraction(1, 64)
    assert s.radius(1) == Fraction(1, 4)


@pytest.mark.parametrize("M,n", [(2, 16), (4, 64), (8, 100), (3, 7)])
def test_net_schedule_invariants(M, n):
    s = net_schedule(M, MeshSpec(3, n))
    assert sum(float(d) ** 0.25 for d in s.delta_k) <= 10 * M ** -0.25
    for k in range(1, s.k0):
        a, b = s.region(k), s.region(k + 1)
        assert all(x <= y for x, y in zip(a.lo, b.lo)) and all(x >= y for x, y in zip(a.hi, b.hi))
    assert s.region(1) == outer_region(3)


def test_net_schedule_mesh_too_coarse():
    with pytest.raises(ValueError, match="too coarse"):
        net_schedule(8, MeshSpec(3, 8))


def test_faces_of_unit_window():
    c = np.array([[0, 3], [8, 3], [4, 4]])
    assert left_face(2).touches(c, 8).tolist() == [True, False, False]
    assert right_face(2).touches(c, 8).tolist() == [False, True, False]
