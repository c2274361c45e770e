"""Dense brute-force reference path for tiny meshes.

Everything here is deliberately independent of the sparse assembly code:
hat functions come from per-element Vandermonde solves, integrals from
explicit quadrature loops (midpoint-of-edges rule, exact through degree 2;
vertex rule for the lumped terms), linear systems from numpy's dense
solver, and the normal-trace constraint from node coordinates.  Used to
cross-check one full time step of every scheme.
"""

from __future__ import annotations

import numpy as np

from .regularization import RegularizedPotential

# midpoint-of-edges rule on the reference triangle: exact for quadratics
_MID_POINTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_MID_WEIGHTS = np.array([1.0, 1.0, 1.0]) / 3.0


class DenseOracle:
    def __init__(self, mesh, cfg):
        self.mesh = mesh
        self.cfg = cfg
        self.pot = RegularizedPotential(cfg.p, cfg.eps) if cfg.scheme in ("uveps", "useps") else None
        self.n = mesh.n_nodes
        self._geometry()
        self._matrices()

    # -- geometry from first principles -------------------------------------

    def _geometry(self):
        mesh = self.mesh
        self.area = np.empty(mesh.n_elements)
        self.grad = np.empty((mesh.n_elements, 3, 2))
        self.leg_axis = np.empty((mesh.n_elements, 2), dtype=int)
        for e, tri in enumerate(mesh.elements):
            pts = mesh.nodes[tri]
            vm = np.column_stack([np.ones(3), pts])
            coef = np.linalg.solve(vm, np.eye(3))  # column i: hat_i coefficients
            self.grad[e] = coef[1:, :].T
            d1, d2 = pts[1] - pts[0], pts[2] - pts[0]
            self.area[e] = abs(d1[0] * d2[1] - d1[1] * d2[0]) / 2.0
            self.leg_axis[e, 0] = int(abs(d1[1]) > abs(d1[0]))
            self.leg_axis[e, 1] = int(abs(d2[1]) > abs(d2[0]))

    def _quad_sum(self, e, values_at_midpoints):
        return self.area[e] * float(_MID_WEIGHTS @ values_at_midpoints)

    def _matrices(self):
        n, mesh = self.n, self.mesh
        self.D = np.zeros((n, n))
        self.M = np.zeros((n, n))
        self.S = np.zeros((n, n))
        for e, tri in enumerate(mesh.elements):
            for i in range(3):
                self.D[tri[i], tri[i]] += self.area[e] / 3.0
                for j in range(3):
                    prods = _MID_POINTS[:, i] * _MID_POINTS[:, j]
                    self.M[tri[i], tri[j]] += self._quad_sum(e, prods)
                    self.S[tri[i], tri[j]] += self.area[e] * (self.grad[e, i] @ self.grad[e, j])
        k = self.cfg.dt
        self.A_v = self.M / k + self.S + self.M
        # vector operators on stacked DOFs
        self.M2 = np.zeros((2 * n, 2 * n))
        self.M2[:n, :n] = self.M
        self.M2[n:, n:] = self.M
        self.B = self.M2.copy()
        for e, tri in enumerate(mesh.elements):
            rot = np.zeros(2 * n)
            div = np.zeros(2 * n)
            for m in range(3):
                rot[tri[m]] -= self.grad[e, m, 1]
                rot[tri[m] + n] += self.grad[e, m, 0]
                div[tri[m]] += self.grad[e, m, 0]
                div[tri[m] + n] += self.grad[e, m, 1]
            self.B += self.area[e] * (np.outer(rot, rot) + np.outer(div, div))
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        fix_x = np.isclose(x, 0.0) | np.isclose(x, mesh.lx)
        fix_y = np.isclose(y, 0.0) | np.isclose(y, mesh.ly)
        self.sigma_free = np.flatnonzero(~np.concatenate([fix_x, fix_y]))

    # -- field helpers ---------------------------------------------------------

    def grad_field(self, u):
        return np.einsum("ei,eid->ed", u[self.mesh.elements], self.grad)

    def convection(self, w_nodal=None, w_elem=None):
        n, mesh = self.n, self.mesh
        C = np.zeros((n, n))
        for e, tri in enumerate(mesh.elements):
            if w_elem is not None:
                wmid = np.tile(w_elem[e], (3, 1))
            else:
                wmid = _MID_POINTS @ w_nodal[tri]  # rows: w at the 3 quad points
            for i in range(3):
                wg = wmid @ self.grad[e, i]
                for j in range(3):
                    C[tri[i], tri[j]] += self._quad_sum(e, _MID_POINTS[:, j] * wg)
        return C

    def mixed_load(self, u, g_elem):
        n, mesh = self.n, self.mesh
        out = np.zeros(2 * n)
        for e, tri in enumerate(mesh.elements):
            umid = _MID_POINTS @ u[tri]
            for i in range(3):
                base = self._quad_sum(e, umid * _MID_POINTS[:, i])
                out[tri[i]] += g_elem[e, 0] * base
                out[tri[i] + n] += g_elem[e, 1] * base
        return out

    def lumped_load(self, f_nodal):
        return np.diag(self.D) * f_nodal

    def lambda2(self, u):
        pot, mesh = self.pot, self.mesh
        out = np.empty((mesh.n_elements, 2))
        for e, tri in enumerate(mesh.elements):
            u0 = u[tri[0]]
            for leg in (1, 2):
                ui = u[tri[leg]]
                if abs(ui - u0) > 1e-12 * max(1.0, abs(u0)):
                    val = (pot.p - 1.0) * (pot.f_value(ui) - pot.f_value(u0)) / (
                        pot.f_prime(ui) - pot.f_prime(u0)
                    )
                else:
                    val = pot.a_eps(u0)
                out[e, self.leg_axis[e, leg - 1]] = val
        return out

    def _sigma_solve(self, rhs_full, k):
        free = self.sigma_free
        A = (self.M2 / k + self.B)[np.ix_(free, free)]
        out = np.zeros(2 * self.n)
        out[free] = np.linalg.solve(A, rhs_full[free])
        return np.column_stack([out[: self.n], out[self.n :]])

    def recover_v(self, u_new, v_prev):
        k, p = self.cfg.dt, self.cfg.p
        if self.cfg.scheme == "useps":
            load = p * (p - 1.0) * self.lumped_load(self.pot.f_value(u_new))
        else:
            load = self.lumped_load(np.maximum(u_new, 0.0) ** p)
        return np.linalg.solve(self.A_v, self.M @ v_prev / k + load)

    # -- one backward-Euler step by dense fixed-point iteration (same
    # Irons-Tuck damping rule as the sparse path; identical fixed point) ----

    def step(self, state, tol=1e-13, max_iter=500):
        k, p = self.cfg.dt, self.cfg.p
        scheme = self.cfg.scheme
        n = self.n
        u_prev = state.u
        ul = u_prev.copy()
        if scheme in ("useps", "us0"):
            wl = state.sigma.copy()
        else:
            wl = state.v.copy()
        omega, r_prev = 1.0, None
        for _ in range(max_iter):
            # u-solve with frozen coefficients
            if scheme == "uv":
                A = self.M / k + self.S + self.convection(w_elem=self.grad_field(wl))
                u_hat = np.linalg.solve(A, self.M @ u_prev / k)
            elif scheme == "uveps":
                lam = self.lambda2(ul) * self.grad_field(wl)
                rhs = np.diag(self.D) * u_prev / k
                for e, tri in enumerate(self.mesh.elements):
                    for i in range(3):
                        rhs[tri[i]] -= self.area[e] * (lam[e] @ self.grad[e, i])
                u_hat = np.linalg.solve(self.D / k + self.S, rhs)
            elif scheme == "useps":
                A = self.D / k + self.S + self.convection(w_nodal=wl)
                u_hat = np.linalg.solve(A, np.diag(self.D) * u_prev / k)
            else:  # us0
                up = np.maximum(ul, 0.0)
                g = self.grad_field(up ** (p - 1.0))
                c = np.power(up[self.mesh.elements], 2.0 - p).mean(axis=1)
                rhs = np.diag(self.D) * u_prev / k + self.S @ ul
                for e, tri in enumerate(self.mesh.elements):
                    for i in range(3):
                        rhs[tri[i]] -= self.area[e] * c[e] * (g[e] @ self.grad[e, i]) / (p - 1.0)
                A = self.D / k + self.S + self.convection(w_nodal=wl)
                u_hat = np.linalg.solve(A, rhs)
            # damped update, then the v/sigma solve with the fresh u
            r = u_hat - ul
            if r_prev is not None:
                dr = r - r_prev
                den = float(dr @ dr)
                if den > 0.0:
                    omega = float(np.clip(-omega * (r_prev @ dr) / den, 0.05, 1.0))
            u1 = ul + omega * r
            r_prev = r
            if scheme == "uv":
                load = self.lumped_load(np.maximum(u1, 0.0) ** p)
                w1 = np.linalg.solve(self.A_v, self.M @ state.v / k + load)
            elif scheme == "uveps":
                load = p * (p - 1.0) * (self.M @ self.pot.f_value(u1))
                w1 = np.linalg.solve(self.A_v, self.M @ state.v / k + load)
            elif scheme == "useps":
                g = self.grad_field(self.pot.f_prime(u1))
                rhs_s = self.M2 @ np.concatenate([state.sigma[:, 0], state.sigma[:, 1]]) / k
                rhs_s += p * self.mixed_load(u1, g)
                w1 = self._sigma_solve(rhs_s, k)
            else:
                gp = self.grad_field(np.maximum(u1, 0.0) ** (p - 1.0))
                rhs_s = self.M2 @ np.concatenate([state.sigma[:, 0], state.sigma[:, 1]]) / k
                rhs_s += (p / (p - 1.0)) * self.mixed_load(u1, gp)
                w1 = self._sigma_solve(rhs_s, k)
            du = np.linalg.norm(u1 - ul) / max(np.linalg.norm(ul), 1e-14)
            dw = np.linalg.norm(w1 - wl) / max(np.linalg.norm(wl), 1e-14)
            ul, wl = u1, w1
            if max(du, dw) <= tol:
                break
        else:
            raise RuntimeError(f"dense oracle fixed point stalled at change {max(du, dw):.2e}")
        if scheme in ("useps", "us0"):
            v1 = self.recover_v(ul, state.v)
            return ul, v1, wl
        return ul, wl, None
