"""P1 fields, quadrature, projections, and bilinear-form assembly.

Scalar fields are plain (n_nodes,) arrays, vector fields (n_nodes, 2)
arrays.  The sigma linear system stacks vector DOFs block-wise:
[all x-components, all y-components].

Quadrature policy: products of piecewise-constant data with hat gradients
are integrated exactly; P1 x P1 products use the exact consistent mass;
nodal nonlinearities combined with a test function use the three-vertex
rule, i.e. the lumped load ``lumped_mass_diag * values``.
"""

from __future__ import annotations

import weakref

import numpy as np
import scipy.sparse as sp

from . import linsolve
from .mesh import CORNER, EDGE_X, EDGE_Y, StructuredTriMesh

__all__ = [
    "lumped_mass",
    "lumped_mass_diag",
    "consistent_mass",
    "stiffness",
    "op_Ah",
    "vector_mass",
    "op_Bh",
    "sigma_fixed_mask",
    "convection_u",
    "interp",
    "project_Qh",
    "project_Qh_vec",
    "project_Rh",
    "grad_p1",
    "gradient_load",
    "weighted_gradient_load",
    "lumped_load",
    "mixed_vector_load",
    "stack_vec",
    "unstack_vec",
    "forms",
    "FormSet",
]

# (ones + I)/12 scaled by area is the local P1 mass matrix
_MASS_BASE = (np.ones((3, 3)) + np.eye(3)) / 12.0

# 6-point degree-4 triangle rule (barycentric points, weights summing to 1)
_QW4 = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
_a, _b = 0.445948490915965, 0.091576213509771
_QP4 = np.array(
    [
        [_a, _a, 1 - 2 * _a],
        [_a, 1 - 2 * _a, _a],
        [1 - 2 * _a, _a, _a],
        [_b, _b, 1 - 2 * _b],
        [_b, 1 - 2 * _b, _b],
        [1 - 2 * _b, _b, _b],
    ]
)


def _scatter_matrix(mesh, local):
    """Assemble (E,3,3) local blocks into a CSR matrix."""
    el = mesh.elements
    rows = np.repeat(el, 3, axis=1).ravel()
    cols = np.tile(el, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def lumped_mass_diag(mesh) -> np.ndarray:
    """Diagonal of the lumped mass matrix: sum of |K|/3 over elements at each node."""
    d = np.zeros(mesh.n_nodes)
    np.add.at(d, mesh.elements, (mesh.areas / 3.0)[:, None])
    return d


def lumped_mass(mesh) -> sp.csr_matrix:
    """Lumped (vertex-quadrature) mass matrix; trace equals the domain area."""
    return sp.diags(lumped_mass_diag(mesh)).tocsr()


def consistent_mass(mesh) -> sp.csr_matrix:
    """Exact P1 mass matrix; row sums reproduce the lumped diagonal."""
    local = mesh.areas[:, None, None] * _MASS_BASE
    return _scatter_matrix(mesh, local)


def stiffness(mesh) -> sp.csr_matrix:
    """P1 stiffness matrix; symmetric PSD with constants in the kernel."""
    local = mesh.areas[:, None, None] * np.einsum("eik,ejk->eij", mesh.grads, mesh.grads)
    return _scatter_matrix(mesh, local)


def op_Ah(mesh) -> sp.csr_matrix:
    """Matrix of the H1 product (grad u, grad v) + (u, v); symmetric PD."""
    return stiffness(mesh) + consistent_mass(mesh)


def vector_mass(mesh) -> sp.csr_matrix:
    """Block-diagonal mass for stacked vector DOFs."""
    m = consistent_mass(mesh)
    return sp.block_diag([m, m]).tocsr()


def _vec_dofs(mesh):
    el = mesh.elements
    return np.hstack([el, el + mesh.n_nodes])  # (E,6): x-block then y-block


def _rank_one_vec(mesh, coeff):
    """Assemble sum_K |K| * c_K c_K^T for (E,6) per-element coefficient rows."""
    local = mesh.areas[:, None, None] * coeff[:, :, None] * coeff[:, None, :]
    dofs = _vec_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n2 = 2 * mesh.n_nodes
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n2, n2)).tocsr()


def op_Bh(mesh) -> sp.csr_matrix:
    """Matrix of (rot s, rot t) + (div s, div t) + (s, t) on stacked vector P1.

    Returned unconstrained; restrict to the rows/columns left free by
    :func:`sigma_fixed_mask` for the zero-normal-trace space, where the
    form is an equivalent H1 inner product and the matrix is SPD.
    """
    gx = mesh.grads[:, :, 0]
    gy = mesh.grads[:, :, 1]
    rot = np.hstack([-gy, gx])  # rot s = d(s_y)/dx - d(s_x)/dy, constant per element
    div = np.hstack([gx, gy])
    return _rank_one_vec(mesh, rot) + _rank_one_vec(mesh, div) + vector_mass(mesh)


def sigma_fixed_mask(mesh) -> np.ndarray:
    """Stacked-DOF mask of components clamped by the zero normal trace.

    On a rectangle: y-components on horizontal edges, x-components on
    vertical edges, both at corners.
    """
    kind = mesh.boundary_kind
    fix_x = (kind == EDGE_Y) | (kind == CORNER)
    fix_y = (kind == EDGE_X) | (kind == CORNER)
    return np.concatenate([fix_x, fix_y])


def stack_vec(w: np.ndarray) -> np.ndarray:
    """(N,2) vector field -> stacked (2N,) DOF vector."""
    return np.concatenate([w[:, 0], w[:, 1]])


def unstack_vec(x: np.ndarray) -> np.ndarray:
    """Stacked (2N,) DOF vector -> (N,2) vector field."""
    n = x.size // 2
    return np.column_stack([x[:n], x[n:]])


def convection_u(mesh, w, kind: str = "auto") -> sp.csr_matrix:
    """Matrix C with C[i, j] = integral of phi_j * (w . grad phi_i).

    ``w`` is either per-element constant vectors (shape (n_elements, 2),
    e.g. the gradient of a P1 scalar) or a nodal P1 vector field
    ((n_nodes, 2)); ``kind`` in {"auto", "element", "nodal"} disambiguates
    when the two shapes coincide.  Integration is exact in both cases.
    Column sums vanish, which is what conserves mass under testing by 1.
    """
    w = np.asarray(w, dtype=float)
    if kind == "auto":
        if w.shape == (mesh.n_elements, 2) and w.shape == (mesh.n_nodes, 2):
            raise ValueError("ambiguous field shape; pass kind='element' or 'nodal'")
        if w.shape == (mesh.n_elements, 2):
            kind = "element"
        elif w.shape == (mesh.n_nodes, 2):
            kind = "nodal"
        else:
            raise ValueError(f"field shape {w.shape} matches neither elements nor nodes")
    if kind == "element":
        if w.shape != (mesh.n_elements, 2):
            raise ValueError(f"expected shape {(mesh.n_elements, 2)}, got {w.shape}")
        wg = np.einsum("ed,eid->ei", w, mesh.grads)  # w . grad phi_i, per element
        local = (mesh.areas / 3.0)[:, None, None] * wg[:, :, None] * np.ones((1, 1, 3))
    elif kind == "nodal":
        if w.shape != (mesh.n_nodes, 2):
            raise ValueError(f"expected shape {(mesh.n_nodes, 2)}, got {w.shape}")
        wloc = w[mesh.elements]  # (E,3,2)
        mw = mesh.areas[:, None, None] * np.einsum("jm,emd->ejd", _MASS_BASE, wloc)
        local = np.einsum("eid,ejd->eij", mesh.grads, mw)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return _scatter_matrix(mesh, local)


def interp(mesh, g) -> np.ndarray:
    """Nodal (Lagrange) interpolation; idempotent on P1 fields."""
    if callable(g):
        vals = np.asarray(g(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
        vals = np.broadcast_to(vals, (mesh.n_nodes,)).copy()
    else:
        vals = np.asarray(g, dtype=float).copy()
        if vals.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values, got shape {vals.shape}")
    return vals


def project_Qh(mesh, u) -> np.ndarray:
    """Lumped-product L2 projection: diagonal solve of D q = M u.

    Preserves the mass (q, 1)^h = (u, 1) and maps constants to themselves.
    """
    un = interp(mesh, u)
    f = forms(mesh)
    return (f.M @ un) / f.D


def project_Qh_vec(mesh, w_elem) -> np.ndarray:
    """Component-wise consistent L2 projection of a per-element constant
    vector field, with the zero-normal-trace components zeroed afterwards."""
    w = np.asarray(w_elem, dtype=float)
    if w.shape != (mesh.n_elements, 2):
        raise ValueError(f"expected shape {(mesh.n_elements, 2)}, got {w.shape}")
    f = forms(mesh)
    out = np.empty((mesh.n_nodes, 2))
    for c in range(2):
        rhs = np.zeros(mesh.n_nodes)
        np.add.at(rhs, mesh.elements, (mesh.areas / 3.0 * w[:, c])[:, None])
        out[:, c] = linsolve.solve_spd(f.M, rhs).x
    fixed = unstack_vec(sigma_fixed_mask(mesh))
    out[fixed] = 0.0
    return out


def _fd_gradient(v, delta=1e-6):
    def grad(x, y):
        gx = (v(x + delta, y) - v(x - delta, y)) / (2.0 * delta)
        gy = (v(x, y + delta) - v(x, y - delta)) / (2.0 * delta)
        return gx, gy

    return grad


def project_Rh(mesh, v, grad_v=None) -> np.ndarray:
    """H1 projection: (grad Rv, grad w) + (Rv, w) = (grad v, grad w) + (v, w).

    For a nodal array the projection is the identity.  For a callable the
    right-hand side is assembled with a degree-4 triangle rule; the
    gradient is taken from ``grad_v(x, y) -> (gx, gy)`` when given, else by
    central finite differences.
    """
    if not callable(v):
        return interp(mesh, v)
    if grad_v is None:
        grad_v = _fd_gradient(v)
    pts = np.einsum("qk,ekd->eqd", _QP4, mesh.nodes[mesh.elements])  # (E,Q,2)
    x, y = pts[:, :, 0], pts[:, :, 1]
    vals = np.asarray(v(x, y), dtype=float)
    vals = np.broadcast_to(vals, x.shape)
    gx, gy = grad_v(x, y)
    gx = np.broadcast_to(np.asarray(gx, dtype=float), x.shape)
    gy = np.broadcast_to(np.asarray(gy, dtype=float), x.shape)
    wq = mesh.areas[:, None] * _QW4[None, :]
    rhs = np.zeros(mesh.n_nodes)
    # (v, phi_i): hat values at quadrature points are the barycentric coords
    np.add.at(rhs, mesh.elements, np.einsum("eq,qi->ei", wq * vals, _QP4))
    # (grad v, grad phi_i): hat gradients are constant per element
    gvec = np.stack([gx, gy], axis=-1)
    np.add.at(rhs, mesh.elements, np.einsum("eq,eid,eqd->ei", wq, mesh.grads, gvec))
    f = forms(mesh)
    return linsolve.solve_spd(f.A, rhs).x


def grad_p1(mesh, u) -> np.ndarray:
    """Per-element constant gradient of a P1 scalar field; shape (E, 2).

    Leading batch axes are allowed: (..., n_nodes) -> (..., E, 2).
    """
    u = np.asarray(u, dtype=float)
    return np.einsum("...ei,eid->...ed", u[..., mesh.elements], mesh.grads)


def gradient_load(mesh, w_elem) -> np.ndarray:
    """Load vector l[i] = sum_K |K| * w_K . grad phi_i for constant w_K."""
    w = np.asarray(w_elem, dtype=float)
    out = np.zeros(mesh.n_nodes)
    contrib = mesh.areas[:, None] * np.einsum("ed,eid->ei", w, mesh.grads)
    np.add.at(out, mesh.elements, contrib)
    return out


def weighted_gradient_load(mesh, c_elem, w_elem) -> np.ndarray:
    """Same as :func:`gradient_load` with an extra per-element scalar weight."""
    return gradient_load(mesh, np.asarray(c_elem, dtype=float)[:, None] * w_elem)


def lumped_load(mesh, values) -> np.ndarray:
    """Vertex-quadrature load of a nodal integrand: D * values."""
    return forms(mesh).D * np.asarray(values, dtype=float)


def mixed_vector_load(mesh, u, g_elem) -> np.ndarray:
    """Stacked load l with l[(c,i)] = integral of u * g_K[c] * phi_i.

    ``u`` is nodal P1 and ``g_elem`` per-element constant; the product is
    quadratic per element and integrated exactly.
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g_elem, dtype=float)
    uloc = u[mesh.elements]
    m = mesh.areas[:, None] / 12.0 * (uloc + uloc.sum(axis=1, keepdims=True))  # M_K u
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, mesh.elements, g[:, 0:1] * m)
    np.add.at(out, mesh.elements + mesh.n_nodes, g[:, 1:2] * m)
    return out


class FormSet:
    """Lazily assembled operators for one mesh, shared across modules."""

    def __init__(self, mesh):
        self._mesh = mesh
        self._cache = {}

    def _get(self, name, builder):
        if name not in self._cache:
            self._cache[name] = builder(self._mesh)
        return self._cache[name]

    @property
    def D(self) -> np.ndarray:
        return self._get("D", lumped_mass_diag)

    @property
    def M(self) -> sp.csr_matrix:
        return self._get("M", consistent_mass)

    @property
    def S(self) -> sp.csr_matrix:
        return self._get("S", stiffness)

    @property
    def A(self) -> sp.csr_matrix:
        return self._get("A", lambda m: self.S + self.M)

    @property
    def M2(self) -> sp.csr_matrix:
        return self._get("M2", vector_mass)

    @property
    def B(self) -> sp.csr_matrix:
        return self._get("B", op_Bh)

    @property
    def sigma_fixed(self) -> np.ndarray:
        return self._get("fixed", sigma_fixed_mask)

    @property
    def sigma_free(self) -> np.ndarray:
        return self._get("free", lambda m: np.flatnonzero(~self.sigma_fixed))

    def l2_norm(self, u) -> float:
        """Consistent L2 norm of a nodal scalar field."""
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(u @ (self.M @ u), 0.0)))

    def l2_norm_vec(self, w) -> float:
        """Consistent L2 norm of a (N,2) vector field."""
        x = stack_vec(np.asarray(w, dtype=float))
        return float(np.sqrt(max(x @ (self.M2 @ x), 0.0)))

    def h_norm(self, u) -> float:
        """Lumped (mass-lumping) norm |u|_h."""
        u = np.asarray(u, dtype=float)
        return float(np.sqrt(max(self.D @ (u * u), 0.0)))


_FORMS: "weakref.WeakKeyDictionary[StructuredTriMesh, FormSet]" = weakref.WeakKeyDictionary()


def forms(mesh) -> FormSet:
    """Shared per-mesh operator cache."""
    fs = _FORMS.get(mesh)
    if fs is None:
        fs = FormSet(mesh)
        _FORMS[mesh] = fs
    return fs
