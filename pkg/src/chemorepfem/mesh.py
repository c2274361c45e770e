"""Structured right-triangle mesh of an axis-aligned rectangle.

Every element carries its right angle at local vertex 0 with both legs
axis-aligned.  The element-wise transport operators rely on exactly this
structure: gradients of P1 functions decompose along the two legs, so
diagonal matrices in the global frame can realize leg-wise difference
quotients.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "StructuredTriMesh",
    "build_rect_mesh",
    "element_geometry",
    "INTERIOR",
    "EDGE_X",
    "EDGE_Y",
    "CORNER",
]

# Node classification: EDGE_X lies on a boundary edge parallel to the x-axis
# (y = 0 or y = ly), EDGE_Y on one parallel to the y-axis.
INTERIOR = 0
EDGE_X = 1
EDGE_Y = 2
CORNER = 3


class StructuredTriMesh:
    """Conforming triangulation of [0,lx] x [0,ly] into right triangles.

    Each of the nx*ny grid cells is split along its lower-left/upper-right
    diagonal, putting the right angles at the lower-right and upper-left
    cell corners.  Element connectivity is (a0, a1, a2) with a0 the
    right-angle vertex, counterclockwise orientation, and legs a0->a1,
    a0->a2 axis-aligned (one per axis).

    Treat instances as immutable: assembled operators are cached per mesh
    and shared across threads.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array, node i at row i
    elements : (n_elements, 3) int array
    boundary_kind : (n_nodes,) int array of INTERIOR/EDGE_X/EDGE_Y/CORNER
    areas : (n_elements,) element areas
    grads : (n_elements, 3, 2) constant gradients of the three hat functions
    leg_axis : (n_elements, 2) global axis (0=x, 1=y) of legs a0->a1, a0->a2
    h : max element diameter (the cell hypotenuse)
    """

    def __init__(self, nx: int, ny: int, lx: float, ly: float):
        if not (isinstance(nx, (int, np.integer)) and isinstance(ny, (int, np.integer))):
            raise ValueError("cell counts nx, ny must be integers")
        if nx < 1 or ny < 1:
            raise ValueError(f"cell counts must be >= 1, got nx={nx}, ny={ny}")
        if not (lx > 0 and ly > 0):
            raise ValueError(f"side lengths must be positive, got lx={lx}, ly={ly}")
        self.nx, self.ny = int(nx), int(ny)
        self.lx, self.ly = float(lx), float(ly)
        hx = self.lx / self.nx
        hy = self.ly / self.ny
        self.h = float(np.hypot(hx, hy))

        # nodes: index = j*(nx+1) + i at (i*hx, j*hy)
        xs = np.linspace(0.0, self.lx, self.nx + 1)
        ys = np.linspace(0.0, self.ly, self.ny + 1)
        I, J = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1))
        self.nodes = np.column_stack([xs[I.ravel()], ys[J.ravel()]])

        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        ll = (jj * (self.nx + 1) + ii).ravel()
        lr = ll + 1
        ul = ll + (self.nx + 1)
        ur = ul + 1
        # lower triangle: right angle at lr, legs lr->ur (y) and lr->ll (x)
        # upper triangle: right angle at ul, legs ul->ll (y) and ul->ur (x)
        lower = np.column_stack([lr, ur, ll])
        upper = np.column_stack([ul, ll, ur])
        self.elements = np.empty((2 * self.nx * self.ny, 3), dtype=np.int64)
        self.elements[0::2] = lower
        self.elements[1::2] = upper

        kind = np.full(self.n_nodes, INTERIOR, dtype=np.int8)
        i_idx = I.ravel()
        j_idx = J.ravel()
        on_v = (i_idx == 0) | (i_idx == self.nx)
        on_h = (j_idx == 0) | (j_idx == self.ny)
        kind[on_h] = EDGE_X
        kind[on_v] = EDGE_Y
        kind[on_h & on_v] = CORNER
        self.boundary_kind = kind

        self.areas, self.grads = self._geometry()
        self.leg_axis = self._leg_axes()

    # -- derived geometry ---------------------------------------------------

    def _geometry(self):
        p = self.nodes[self.elements]  # (E,3,2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        twice_area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        areas = 0.5 * twice_area
        # grad of hat_i is the inward normal of the opposite edge over 2|K|
        grads = np.empty((len(areas), 3, 2))
        for i in range(3):
            a = p[:, (i + 1) % 3]
            b = p[:, (i + 2) % 3]
            grads[:, i, 0] = (a[:, 1] - b[:, 1]) / twice_area
            grads[:, i, 1] = (b[:, 0] - a[:, 0]) / twice_area
        return areas, grads

    def _leg_axes(self):
        p = self.nodes[self.elements]
        axes = np.empty((self.n_elements, 2), dtype=np.int8)
        for leg in (1, 2):
            v = p[:, leg] - p[:, 0]
            axes[:, leg - 1] = np.abs(v[:, 1]) > np.abs(v[:, 0])
        return axes

    # -- basic queries --------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return 2 * self.nx * self.ny

    def __repr__(self):
        return (
            f"StructuredTriMesh(nx={self.nx}, ny={self.ny}, "
            f"lx={self.lx}, ly={self.ly})"
        )


def build_rect_mesh(nx: int, ny: int, lx: float, ly: float) -> StructuredTriMesh:
    """Build the structured right-triangle mesh of [0,lx] x [0,ly]."""
    return StructuredTriMesh(nx, ny, lx, ly)


def element_geometry(mesh: StructuredTriMesh, e: int):
    """Area and the three constant hat-function gradients of element e."""
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element index {e} out of range [0, {mesh.n_elements})")
    return float(mesh.areas[e]), mesh.grads[e].copy()
