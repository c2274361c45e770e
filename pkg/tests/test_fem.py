"""Assembly and projection operators against symbolic and dense oracles."""

import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from chemorepfem import build_rect_mesh
from chemorepfem import fem


def sympy_local_integrals(mesh, e, integrand):
    """Exact integration oracle on element e.

    ``integrand(phi, gphi, x, y)`` gets the three symbolic hat functions and
    their gradients and returns a matrix/vector of sympy expressions to
    integrate over the element.
    """
    x, y = sympy.symbols("x y")
    pts = [sympy.Matrix(p) for p in mesh.nodes[mesh.elements[e]]]
    vm = sympy.Matrix([[1, p[0], p[1]] for p in pts])
    phi, gphi = [], []
    for i in range(3):
        coef = vm.solve(sympy.Matrix(np.eye(3)[i].tolist()))
        phi.append(coef[0] + coef[1] * x + coef[2] * y)
        gphi.append(sympy.Matrix([coef[1], coef[2]]))
    expr = integrand(phi, gphi, x, y)
    s, t = sympy.symbols("s t", nonnegative=True)
    p0, d1, d2 = pts[0], pts[1] - pts[0], pts[2] - pts[0]
    xm = p0[0] + s * d1[0] + t * d2[0]
    ym = p0[1] + s * d1[1] + t * d2[1]
    jac = sympy.Abs(d1[0] * d2[1] - d1[1] * d2[0])

    def integrate_scalar(f):
        f = f.subs({x: xm, y: ym}) * jac
        return float(sympy.integrate(sympy.integrate(f, (t, 0, 1 - s)), (s, 0, 1)))

    return np.vectorize(integrate_scalar)(expr)


@pytest.fixture(scope="module")
def unit_mesh():
    return build_rect_mesh(1, 1, 1.0, 1.0)


@pytest.fixture(scope="module")
def small_mesh():
    return build_rect_mesh(2, 2, 2.0, 2.0)


def test_lumped_mass_unit_square(unit_mesh):
    d = fem.lumped_mass_diag(unit_mesh)
    # diagonal nodes (0,0) and (1,1) sit in both triangles
    assert d == pytest.approx([1 / 3, 1 / 6, 1 / 6, 1 / 3], rel=1e-14)
    assert d.sum() == pytest.approx(1.0, rel=1e-14)


def test_lumped_mass_properties(small_mesh):
    d = fem.lumped_mass_diag(small_mesh)
    assert d.sum() == pytest.approx(4.0, rel=1e-13)  # (1,1)^h = |Omega|
    rng = np.random.default_rng(3)
    u = rng.normal(size=small_mesh.n_nodes)
    assert d @ (u * u) > 0
    assert fem.lumped_mass(small_mesh).diagonal() == pytest.approx(d, rel=1e-15)


def test_consistent_mass_against_sympy(unit_mesh):
    m_dense = fem.consistent_mass(unit_mesh).toarray()
    oracle = np.zeros_like(m_dense)
    for e in range(unit_mesh.n_elements):
        loc = sympy_local_integrals(
            unit_mesh, e, lambda phi, g, x, y: sympy.Matrix(3, 3, lambda i, j: phi[i] * phi[j])
        )
        idx = unit_mesh.elements[e]
        oracle[np.ix_(idx, idx)] += loc
    assert m_dense == pytest.approx(oracle, abs=1e-14)
    assert m_dense == pytest.approx(m_dense.T, abs=0)
    assert m_dense.sum() == pytest.approx(1.0, rel=1e-14)  # (1,1) = |Omega|


def test_consistent_mass_rowsums_match_lumped(small_mesh):
    m = fem.consistent_mass(small_mesh)
    d = fem.lumped_mass_diag(small_mesh)
    assert np.asarray(m.sum(axis=1)).ravel() == pytest.approx(d, abs=1e-14)


def test_stiffness_against_sympy(unit_mesh):
    s_dense = fem.stiffness(unit_mesh).toarray()
    oracle = np.zeros_like(s_dense)
    for e in range(unit_mesh.n_elements):
        loc = sympy_local_integrals(
            unit_mesh, e, lambda phi, g, x, y: sympy.Matrix(3, 3, lambda i, j: (g[i].T * g[j])[0])
        )
        idx = unit_mesh.elements[e]
        oracle[np.ix_(idx, idx)] += loc
    assert s_dense == pytest.approx(oracle, abs=1e-14)


def test_stiffness_kernel_and_psd(small_mesh):
    s = fem.stiffness(small_mesh)
    const = np.full(small_mesh.n_nodes, 3.7)
    assert np.abs(s @ const).max() <= 1e-13
    rng = np.random.default_rng(5)
    for _ in range(5):
        u = rng.normal(size=small_mesh.n_nodes)
        assert u @ (s @ u) >= -1e-13


def test_op_Ah_spd_and_decomposition(small_mesh):
    a = fem.op_Ah(small_mesh).toarray()
    assert a == pytest.approx(a.T, abs=1e-14)
    assert np.linalg.eigvalsh(a).min() > 0
    s = fem.stiffness(small_mesh).toarray()
    m = fem.consistent_mass(small_mesh).toarray()
    assert a == pytest.approx(s + m, abs=1e-15)


def test_op_Bh_constant_and_linear_fields(small_mesh):
    b = fem.op_Bh(small_mesh)
    n = small_mesh.n_nodes
    # constants have zero rot and div: quadratic form is the L2 norm
    c = fem.stack_vec(np.tile([1.0, -2.0], (n, 1)))
    assert c @ (b @ c) == pytest.approx(5.0 * 4.0, rel=1e-13)
    # sigma = (y, 0): rot = -1, div = 0, so form = |Omega| + int y^2
    sig = np.zeros((n, 2))
    sig[:, 0] = small_mesh.nodes[:, 1]
    x = fem.stack_vec(sig)
    assert x @ (b @ x) == pytest.approx(4.0 + 16.0 / 3.0, rel=1e-13)


def test_op_Bh_spd_on_constrained_space(small_mesh):
    b = fem.op_Bh(small_mesh)
    free = fem.forms(small_mesh).sigma_free
    bred = b[free, :][:, free].toarray()
    assert bred == pytest.approx(bred.T, abs=1e-13)
    assert np.linalg.eigvalsh(bred).min() > 0


def test_sigma_fixed_mask(small_mesh):
    from chemorepfem.mesh import CORNER, EDGE_X, EDGE_Y

    mask = fem.unstack_vec(fem.sigma_fixed_mask(small_mesh).astype(float)).astype(bool)
    kind = small_mesh.boundary_kind
    assert np.all(mask[kind == CORNER].all(axis=1))
    assert np.all(mask[kind == EDGE_X, 1]) and not mask[kind == EDGE_X, 0].any()
    assert np.all(mask[kind == EDGE_Y, 0]) and not mask[kind == EDGE_Y, 1].any()


def test_convection_zero_field(small_mesh):
    c = fem.convection_u(small_mesh, np.zeros((small_mesh.n_elements, 2)), kind="element")
    assert abs(c).max() == 0.0


def test_convection_column_sums_vanish(small_mesh):
    # testing by the constant function kills the convective term: this is
    # exactly the mass-conservation mechanism
    rng = np.random.default_rng(11)
    for kind, shape in (("element", small_mesh.n_elements), ("nodal", small_mesh.n_nodes)):
        w = rng.normal(size=(shape, 2))
        c = fem.convection_u(small_mesh, w, kind=kind)
        assert np.abs(np.asarray(c.sum(axis=0))).max() <= 1e-13


def test_convection_interior_row_sums_for_constant_field(small_mesh):
    # constant w is divergence-free; row sums reproduce int w . grad(phi_i),
    # which vanishes at interior nodes
    from chemorepfem.mesh import INTERIOR

    w = np.tile([1.0, 0.0], (small_mesh.n_nodes, 1))
    c = fem.convection_u(small_mesh, w, kind="nodal")
    rows = np.asarray(c.sum(axis=1)).ravel()
    interior = small_mesh.boundary_kind == INTERIOR
    assert np.abs(rows[interior]).max() <= 1e-14


def test_convection_single_element_against_sympy(unit_mesh):
    rng = np.random.default_rng(7)
    w = rng.normal(size=(unit_mesh.n_nodes, 2))
    c = fem.convection_u(unit_mesh, w, kind="nodal").toarray()
    oracle = np.zeros_like(c)
    wsym = [sympy.Matrix(r.tolist()) for r in w]
    for e in range(unit_mesh.n_elements):
        idx = unit_mesh.elements[e]

        def integrand(phi, g, x, y, idx=idx):
            wfield = sum((wsym[idx[m]] * phi[m] for m in range(3)), sympy.zeros(2, 1))
            return sympy.Matrix(3, 3, lambda i, j: phi[j] * (wfield.T * g[i])[0])

        oracle[np.ix_(idx, idx)] += sympy_local_integrals(unit_mesh, e, integrand)
    assert c == pytest.approx(oracle, abs=1e-13)

    # per-element constant field against the same oracle
    we = rng.normal(size=(unit_mesh.n_elements, 2))
    ce = fem.convection_u(unit_mesh, we, kind="element").toarray()
    oracle_e = np.zeros_like(ce)
    for e in range(unit_mesh.n_elements):
        idx = unit_mesh.elements[e]
        wconst = sympy.Matrix(we[e].tolist())

        def integrand(phi, g, x, y, idx=idx, wconst=wconst):
            return sympy.Matrix(3, 3, lambda i, j: phi[j] * (wconst.T * g[i])[0])

        oracle_e[np.ix_(idx, idx)] += sympy_local_integrals(unit_mesh, e, integrand)
    assert ce == pytest.approx(oracle_e, abs=1e-13)


def test_interp(small_mesh):
    u = np.arange(small_mesh.n_nodes, dtype=float)
    assert np.array_equal(fem.interp(small_mesh, u), u)
    assert np.all(fem.interp(small_mesh, lambda x, y: np.full_like(x, 2.5)) == 2.5)
    # nodal composition: interpolating u^2 squares the nodal values
    assert np.array_equal(fem.interp(small_mesh, u) ** 2, u**2)
    with pytest.raises(ValueError):
        fem.interp(small_mesh, u[:-1])


def test_project_Qh(small_mesh):
    q = fem.project_Qh(small_mesh, lambda x, y: np.full_like(x, 3.0))
    assert q == pytest.approx(np.full(small_mesh.n_nodes, 3.0), rel=1e-13)
    rng = np.random.default_rng(13)
    u = rng.normal(size=small_mesh.n_nodes)
    q = fem.project_Qh(small_mesh, u)
    d = fem.lumped_mass_diag(small_mesh)
    m = fem.consistent_mass(small_mesh)
    assert d @ q == pytest.approx(np.sum(m @ u), rel=1e-12)  # (q,1)^h = (u,1)
    # dense oracle: D^{-1} M u
    hat = np.zeros(small_mesh.n_nodes)
    hat[0] = 1.0
    expected = np.diag(1.0 / d) @ m.toarray() @ hat
    assert fem.project_Qh(small_mesh, hat) == pytest.approx(expected, abs=1e-14)


def test_project_Qh_vec(small_mesh):
    n = small_mesh.n_nodes
    # constant field: projection is the constant, then the mask zeroes
    # normal components on the boundary
    w = np.tile([1.0, 0.0], (small_mesh.n_elements, 1))
    q = fem.project_Qh_vec(small_mesh, w)
    fixed = fem.unstack_vec(fem.sigma_fixed_mask(small_mesh))
    assert q[~fixed[:, 0], 0] == pytest.approx(1.0, rel=1e-11)
    assert np.all(q[fixed] == 0.0)
    # dense oracle for the unconstrained component solves
    rng = np.random.default_rng(17)
    w = rng.normal(size=(small_mesh.n_elements, 2))
    q = fem.project_Qh_vec(small_mesh, w)
    m = fem.consistent_mass(small_mesh).toarray()
    for c in range(2):
        rhs = np.zeros(n)
        for e, tri in enumerate(small_mesh.elements):
            rhs[tri] += small_mesh.areas[e] / 3.0 * w[e, c]
        dense = np.linalg.solve(m, rhs)
        # mean preservation before constraints: (q_unc, 1) = int w_c
        assert np.sum(m @ dense) == pytest.approx(small_mesh.areas @ w[:, c], rel=1e-12)
        dense[fixed[:, c]] = 0.0
        assert q[:, c] == pytest.approx(dense, abs=1e-11)


def test_project_Rh(small_mesh):
    v = fem.project_Rh(small_mesh, lambda x, y: np.full_like(x, 2.0))
    assert v == pytest.approx(np.full(small_mesh.n_nodes, 2.0), rel=1e-11)
    nodal = np.linspace(0.0, 1.0, small_mesh.n_nodes)
    assert np.array_equal(fem.project_Rh(small_mesh, nodal), nodal)


def test_project_Rh_reproduces_affine_callables(small_mesh):
    # affine functions lie in the P1 space: the quadrature-assembled
    # projection must return their interpolant to solver precision
    def v(x, y):
        return 1.0 + 2.0 * x - 3.0 * y

    def grad_v(x, y):
        return np.full_like(x, 2.0), np.full_like(x, -3.0)

    expected = fem.interp(small_mesh, v)
    assert fem.project_Rh(small_mesh, v, grad_v) == pytest.approx(expected, abs=1e-10)
    # finite-difference gradient path agrees
    assert fem.project_Rh(small_mesh, v) == pytest.approx(expected, abs=1e-7)


def test_project_Rh_converges_under_refinement():
    def v(x, y):
        return np.cos(np.pi * x / 2.0) * np.cos(np.pi * y / 2.0) + 2.0

    errs = []
    for nx in (4, 8, 16):
        m = build_rect_mesh(nx, nx, 2.0, 2.0)
        vh = fem.project_Rh(m, v)
        diff = vh - fem.interp(m, v)
        errs.append(fem.forms(m).l2_norm(diff))
    # interpolant-vs-projection gap shrinks under refinement
    assert errs[1] < errs[0] and errs[2] < errs[1]


def test_grad_p1(small_mesh):
    assert np.abs(fem.grad_p1(small_mesh, np.full(small_mesh.n_nodes, 4.0))).max() == 0.0
    gx = fem.grad_p1(small_mesh, small_mesh.nodes[:, 0])
    assert gx == pytest.approx(np.tile([1.0, 0.0], (small_mesh.n_elements, 1)), abs=1e-14)
    rng = np.random.default_rng(23)
    u = rng.normal(size=small_mesh.n_nodes)
    g = fem.grad_p1(small_mesh, u)
    p = small_mesh.nodes[small_mesh.elements]
    for leg in (1, 2):
        dvec = p[:, leg] - p[:, 0]
        du = u[small_mesh.elements[:, leg]] - u[small_mesh.elements[:, 0]]
        assert np.einsum("ed,ed->e", g, dvec) == pytest.approx(du, abs=1e-12)


def test_loads_against_direct_sums(small_mesh):
    rng = np.random.default_rng(29)
    w = rng.normal(size=(small_mesh.n_elements, 2))
    load = fem.gradient_load(small_mesh, w)
    oracle = np.zeros(small_mesh.n_nodes)
    for e, tri in enumerate(small_mesh.elements):
        for i in range(3):
            oracle[tri[i]] += small_mesh.areas[e] * (w[e] @ small_mesh.grads[e, i])
    assert load == pytest.approx(oracle, abs=1e-13)

    c = rng.normal(size=small_mesh.n_elements)
    assert fem.weighted_gradient_load(small_mesh, c, w) == pytest.approx(
        fem.gradient_load(small_mesh, c[:, None] * w), abs=1e-13
    )

    f = rng.normal(size=small_mesh.n_nodes)
    assert fem.lumped_load(small_mesh, f) == pytest.approx(
        fem.lumped_mass_diag(small_mesh) * f, rel=1e-15
    )


def test_mixed_vector_load_against_sympy(unit_mesh):
    rng = np.random.default_rng(31)
    u = rng.normal(size=unit_mesh.n_nodes)
    g = rng.normal(size=(unit_mesh.n_elements, 2))
    load = fem.mixed_vector_load(unit_mesh, u, g)
    oracle = np.zeros(2 * unit_mesh.n_nodes)
    for e in range(unit_mesh.n_elements):
        idx = unit_mesh.elements[e]

        def integrand(phi, gphi, x, y, idx=idx):
            ufield = sum(u[idx[m]] * phi[m] for m in range(3))
            return sympy.Matrix(3, 1, lambda i, _: ufield * phi[i])

        base = sympy_local_integrals(unit_mesh, e, integrand).ravel()
        oracle[idx] += g[e, 0] * base
        oracle[idx + unit_mesh.n_nodes] += g[e, 1] * base
    assert load == pytest.approx(oracle, abs=1e-13)


def test_norm_equivalence_constants_stable_under_refinement():
    # observed equivalence constants of |.|_h vs ||.||_0 over all of the P1
    # space, from the generalized eigenproblem D x = lambda M x; they must
    # not drift under refinement (they are exactly 1 and 2 here)
    from scipy.linalg import eigh

    cs, Cs = [], []
    rng = np.random.default_rng(37)
    for nx in (4, 8, 16):
        m = build_rect_mesh(nx, nx, 2.0, 2.0)
        d = np.diag(fem.lumped_mass_diag(m))
        mm = fem.consistent_mass(m).toarray()
        w = eigh(d, mm, eigvals_only=True)
        c, big_c = np.sqrt(w.min()), np.sqrt(w.max())
        cs.append(c)
        Cs.append(big_c)
        fs = fem.forms(m)
        for _ in range(50):
            u = rng.normal(size=m.n_nodes)
            ratio = fs.h_norm(u) / fs.l2_norm(u)
            assert c * (1 - 1e-12) <= ratio <= big_c * (1 + 1e-12)
    assert max(cs) / min(cs) <= 1.1
    assert max(Cs) / min(Cs) <= 1.1


def test_interpolated_square_inequality(small_mesh):
    # nodally (I u)^2 equals I(u^2); in integral the lumped side dominates
    rng = np.random.default_rng(41)
    m = fem.consistent_mass(small_mesh)
    d = fem.lumped_mass_diag(small_mesh)
    for _ in range(10):
        u = rng.normal(size=small_mesh.n_nodes)
        assert np.array_equal(u**2, fem.interp(small_mesh, u) ** 2)
        assert u @ (m @ u) <= d @ (u * u) + 1e-13


def test_ambiguous_convection_shape_raises():
    # N = 12 = E for a 2x3 grid: auto dispatch must refuse to guess
    m = build_rect_mesh(2, 3, 2.0, 2.0)
    assert m.n_nodes == m.n_elements == 12
    w = np.zeros((12, 2))
    with pytest.raises(ValueError):
        fem.convection_u(m, w, kind="auto")
    fem.convection_u(m, w, kind="element")
    fem.convection_u(m, w, kind="nodal")
