"""Mesh construction: counts, right angles, conformity, P1 geometry."""

from collections import Counter

import numpy as np
import pytest

from chemorepfem import build_rect_mesh, element_geometry


def test_counts_and_areas():
    m = build_rect_mesh(1, 1, 1.0, 1.0)
    assert m.n_nodes == 4 and m.n_elements == 2
    assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)

    m = build_rect_mesh(40, 40, 2.0, 2.0)
    assert m.n_nodes == 1681 and m.n_elements == 3200
    assert m.areas.sum() == pytest.approx(4.0, rel=1e-12)

    m = build_rect_mesh(2, 1, 2.0, 1.0)
    assert m.n_nodes == 6 and m.n_elements == 4
    assert m.areas.sum() == pytest.approx(2.0, rel=1e-12)


def test_invalid_arguments_rejected():
    for args in [(0, 1, 1.0, 1.0), (1, 0, 1.0, 1.0), (1, 1, 0.0, 1.0), (1, 1, 1.0, -2.0)]:
        with pytest.raises(ValueError):
            build_rect_mesh(*args)
    with pytest.raises(ValueError):
        build_rect_mesh(1.5, 1, 1.0, 1.0)


def test_diameter_formula():
    m = build_rect_mesh(5, 4, 2.0, 1.0)
    assert m.h == pytest.approx(np.hypot(2.0 / 5, 1.0 / 4), rel=1e-14)


@pytest.mark.parametrize("nx,ny,lx,ly", [(1, 1, 1.0, 1.0), (3, 2, 2.0, 1.0), (4, 4, 2.0, 2.0)])
def test_right_angle_at_local_vertex_zero(nx, ny, lx, ly):
    m = build_rect_mesh(nx, ny, lx, ly)
    p = m.nodes[m.elements]
    leg1 = p[:, 1] - p[:, 0]
    leg2 = p[:, 2] - p[:, 0]
    # exact orthogonality and axis alignment, one leg per axis
    assert np.all(np.einsum("ed,ed->e", leg1, leg2) == 0.0)
    assert np.all((leg1 == 0).any(axis=1) & (leg2 == 0).any(axis=1))
    assert np.all(np.sort(m.leg_axis, axis=1) == [0, 1])
    assert np.all(m.areas > 0)  # counterclockwise


@pytest.mark.parametrize("nx,ny", [(1, 1), (3, 2), (5, 5)])
def test_conforming_edges(nx, ny):
    m = build_rect_mesh(nx, ny, 2.0, 2.0)
    edges = Counter()
    for tri in m.elements:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edges[frozenset((tri[a], tri[b]))] += 1
    # every edge belongs to one (boundary) or two (interior) elements,
    # and the boundary consists of exactly the 2(nx+ny) outer cell edges
    assert set(edges.values()) <= {1, 2}
    assert sum(1 for c in edges.values() if c == 1) == 2 * (nx + ny)


def test_element_geometry_against_barycentric_solve():
    # oracle: hat coefficients from the 3x3 Vandermonde system per element
    m = build_rect_mesh(3, 2, 2.0, 1.0)
    for e in range(m.n_elements):
        area, grads = element_geometry(m, e)
        pts = m.nodes[m.elements[e]]
        vm = np.column_stack([np.ones(3), pts])
        for i in range(3):
            coef = np.linalg.solve(vm, np.eye(3)[i])
            assert grads[i] == pytest.approx(coef[1:], abs=1e-13)
        v1, v2 = pts[1] - pts[0], pts[2] - pts[0]
        assert area == pytest.approx(abs(v1[0] * v2[1] - v1[1] * v2[0]) / 2, rel=1e-14)
        assert grads.sum(axis=0) == pytest.approx([0.0, 0.0], abs=1e-13)


def test_element_geometry_scaled_legs():
    h = 0.25
    m = build_rect_mesh(4, 4, 4 * h, 4 * h)
    area, _ = element_geometry(m, 0)
    assert area == pytest.approx(h * h / 2, rel=1e-14)
    with pytest.raises(IndexError):
        element_geometry(m, m.n_elements)


def test_boundary_classification():
    from chemorepfem.mesh import CORNER, EDGE_X, EDGE_Y, INTERIOR

    m = build_rect_mesh(2, 2, 2.0, 2.0)
    kind = m.boundary_kind
    x, y = m.nodes[:, 0], m.nodes[:, 1]
    on_v = (x == 0) | (x == 2)
    on_h = (y == 0) | (y == 2)
    assert np.all(kind[on_v & on_h] == CORNER)
    assert np.all(kind[on_h & ~on_v] == EDGE_X)
    assert np.all(kind[on_v & ~on_h] == EDGE_Y)
    assert np.all(kind[~on_v & ~on_h] == INTERIOR)
