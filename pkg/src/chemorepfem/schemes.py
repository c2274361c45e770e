"""Backward-Euler time steppers for the chemo-repulsion/production system.

Four schemes advance the coupled system  du/dt - lap u = div(u grad v),
dv/dt - lap v + v = u^p  on a structured right-triangle mesh:

* ``uv``     plain backward Euler in (u, v); no stability theory.
* ``uveps``  regularized (u, v) scheme: the chemotaxis term is assembled
             through the element-wise chain-rule operator so the modified
             energy p*(F_eps(u),1)^h + 0.5*||grad v||^2 dissipates
             unconditionally.
* ``useps``  regularized scheme in (u, sigma) with sigma = grad v carried
             as an auxiliary vector unknown through a rot-rot/div-div
             operator; dissipates p*(F_eps(u),1)^h + 0.5*||sigma||^2.
* ``us0``    unregularized (u, sigma) scheme with the production written
             through powers of the positive part; dissipates
             1/(p-1)*((u_+)^p,1)^h + 0.5*||sigma||^2.

Every nonlinear step is solved by Picard iteration (u-equation first, then
the v- or sigma-equation with the fresh u), stopping when the larger of the
two relative L2 changes drops below ``picard_tol``.  All schemes conserve
the lumped mass (u, 1)^h exactly up to linear-solver residuals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import fem, linsolve
from .lambda_ops import lambda2
from .regularization import RegularizedPotential

__all__ = [
    "SCHEMES",
    "SchemeConfig",
    "SchemeState",
    "PicardReport",
    "PicardError",
    "Workspace",
    "init_state",
    "step_uv",
    "step_uveps",
    "step_useps",
    "step_us0",
    "recover_v",
    "us0_diffusion_terms",
]

SCHEMES = ("uv", "uveps", "useps", "us0")

# relative-change denominators never drop below this
_CHANGE_FLOOR = 1e-14


@dataclass(frozen=True)
class SchemeConfig:
    """Time-discretization parameters for one scheme."""

    scheme: str
    p: float
    dt: float
    eps: Optional[float] = None
    picard_tol: float = 1e-3
    picard_max: int = 200
    linear_tol: float = 1e-12
    linear_max: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not 1.0 < self.p < 2.0:
            raise ValueError(f"production exponent must satisfy 1 < p < 2, got {self.p}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.needs_eps:
            if self.eps is None:
                raise ValueError(f"scheme {self.scheme!r} requires eps")
            if not 0.0 < self.eps < 1.0:
                raise ValueError(f"eps must satisfy 0 < eps < 1, got {self.eps}")
        if not self.picard_tol > 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ValueError("picard_max must be >= 1")

    @property
    def needs_eps(self) -> bool:
        return self.scheme in ("uveps", "useps")

    @property
    def uses_sigma(self) -> bool:
        return self.scheme in ("useps", "us0")


@dataclass
class SchemeState:
    """Discrete fields after ``step`` steps (time = step * dt).

    ``v`` is the scheme unknown for uv/uveps and the recovered chemical for
    the sigma schemes; ``sigma`` is None for uv/uveps.
    """

    u: np.ndarray
    v: np.ndarray
    sigma: Optional[np.ndarray]
    step: int
    time: float

    def copy(self) -> "SchemeState":
        return SchemeState(
            self.u.copy(),
            self.v.copy() if self.v is not None else None,
            self.sigma.copy() if self.sigma is not None else None,
            self.step,
            self.time,
        )


@dataclass(frozen=True)
class PicardReport:
    iterations: int
    final_change: float
    solver_iters: int  # max iterations over the step's linear solves


class PicardError(RuntimeError):
    """Picard iteration hit its cap; carries the last iterate and change."""

    def __init__(self, scheme, step, report: PicardReport, state: SchemeState):
        super().__init__(
            f"Picard iteration for scheme {scheme!r} did not converge at step {step} "
            f"(change {report.final_change:.3e} after {report.iterations} iterations)"
        )
        self.report = report
        self.state = state


def _pos(u):
    return np.maximum(u, 0.0)


def us0_diffusion_terms(mesh, u, p):
    """Per-element data of the degenerate diffusion term of scheme us0.

    Returns (c, g): the vertex-averaged coefficient (u_+)**(2-p) and the
    constant gradient of the interpolated (u_+)**(p-1).  Scheme assembly
    and the discrete energy law must use the same rule, otherwise the law
    stops being an identity.
    """
    up = _pos(np.asarray(u, dtype=float))
    g = fem.grad_p1(mesh, np.power(up, p - 1.0))
    c = np.power(up, 2.0 - p)[mesh.elements].mean(axis=1)
    return c, g


class Workspace:
    """Per-(mesh, config) operator cache and stepping engine.

    The module-level ``step_*``/``recover_v`` functions build one of these
    on the fly; drivers that take many steps should construct it once.
    """

    def __init__(self, mesh, cfg: SchemeConfig):
        self.mesh = mesh
        self.cfg = cfg
        self.fs = fem.forms(mesh)
        self.pot = RegularizedPotential(cfg.p, cfg.eps) if cfg.needs_eps else None
        self.lin = linsolve.SolverConfig(cfg.linear_tol, cfg.linear_max)
        k = cfg.dt
        fs = self.fs
        # v-equation operator (also the recovery operator): M/k + S + M
        self.A_v = (fs.M / k + fs.A).tocsr()
        # u-equation base: plain backward Euler uses the consistent mass,
        # the lumped schemes the diagonal one
        if cfg.scheme == "uv":
            self.A_u = (fs.M / k + fs.S).tocsr()
        else:
            self.A_u = (sp.diags(fs.D) / k + fs.S).tocsr()
        if cfg.uses_sigma:
            free = fs.sigma_free
            A_sig = (fs.M2 / k + fs.B).tocsr()
            self.A_sig_red = A_sig[free, :][:, free].tocsr()

    # -- norms and changes ----------------------------------------------------

    def _change(self, new, old, vec: bool) -> float:
        if vec:
            num = self.fs.l2_norm_vec(new - old)
            den = self.fs.l2_norm_vec(old)
        else:
            num = self.fs.l2_norm(new - old)
            den = self.fs.l2_norm(old)
        return num / max(den, _CHANGE_FLOOR)

    # -- shared solves ----------------------------------------------------------

    def _solve_sigma(self, rhs_full, sigma_guess):
        free = self.fs.sigma_free
        x0 = fem.stack_vec(sigma_guess)[free]
        res = linsolve.solve_spd(self.A_sig_red, rhs_full[free], self.lin, x0=x0)
        full = np.zeros(2 * self.mesh.n_nodes)
        full[free] = res.x
        return fem.unstack_vec(full), res.iterations

    def _recover(self, u_new, v_prev, mode: str, x0=None):
        cfg = self.cfg
        k = cfg.dt
        if mode == "useps":
            load = cfg.p * (cfg.p - 1.0) * fem.lumped_load(self.mesh, self.pot.f_value(u_new))
        elif mode == "us0":
            load = fem.lumped_load(self.mesh, np.power(_pos(u_new), cfg.p))
        else:
            raise ValueError(f"unknown recovery mode {mode!r}")
        rhs = (self.fs.M @ v_prev) / k + load
        return linsolve.solve_spd(self.A_v, rhs, self.lin, x0=x0)

    # -- Picard half-iterates: u-solve with frozen data, then v/sigma-solve ----

    def _usolve_uv(self, state, ul, vl):
        r = linsolve.solve_general(
            self.A_u + fem.convection_u(self.mesh, fem.grad_p1(self.mesh, vl), kind="element"),
            (self.fs.M @ state.u) / self.cfg.dt,
            self.lin,
            x0=ul,
        )
        return r.x, r.iterations

    def _wsolve_uv(self, state, u_new, vl):
        load = fem.lumped_load(self.mesh, np.power(_pos(u_new), self.cfg.p))
        r = linsolve.solve_spd(
            self.A_v, (self.fs.M @ state.v) / self.cfg.dt + load, self.lin, x0=vl
        )
        return r.x, r.iterations

    def _usolve_uveps(self, state, ul, vl):
        w = lambda2(self.pot, self.mesh, ul) * fem.grad_p1(self.mesh, vl)
        rhs = self.fs.D * state.u / self.cfg.dt - fem.gradient_load(self.mesh, w)
        r = linsolve.solve_spd(self.A_u, rhs, self.lin, x0=ul)
        return r.x, r.iterations

    def _wsolve_uveps(self, state, u_new, vl):
        p = self.cfg.p
        # interpolated-potential load with the exact P1 x P1 product: the
        # energy cancellation against the chemotaxis term needs this form
        load = p * (p - 1.0) * (self.fs.M @ self.pot.f_value(u_new))
        r = linsolve.solve_spd(
            self.A_v, (self.fs.M @ state.v) / self.cfg.dt + load, self.lin, x0=vl
        )
        return r.x, r.iterations

    def _usolve_useps(self, state, ul, sl):
        r = linsolve.solve_general(
            self.A_u + fem.convection_u(self.mesh, sl, kind="nodal"),
            self.fs.D * state.u / self.cfg.dt,
            self.lin,
            x0=ul,
        )
        return r.x, r.iterations

    def _wsolve_useps(self, state, u_new, sl):
        g = fem.grad_p1(self.mesh, self.pot.f_prime(u_new))
        load = self.cfg.p * fem.mixed_vector_load(self.mesh, u_new, g)
        rhs = (self.fs.M2 @ fem.stack_vec(state.sigma)) / self.cfg.dt + load
        return self._solve_sigma(rhs, sl)

    def _usolve_us0(self, state, ul, sl):
        p = self.cfg.p
        c, g = us0_diffusion_terms(self.mesh, ul, p)
        # frozen degenerate diffusion on the right, linear stabilizer on the left
        rhs = (
            self.fs.D * state.u / self.cfg.dt
            + self.fs.S @ ul
            - fem.weighted_gradient_load(self.mesh, c, g) / (p - 1.0)
        )
        r = linsolve.solve_general(
            self.A_u + fem.convection_u(self.mesh, sl, kind="nodal"), rhs, self.lin, x0=ul
        )
        return r.x, r.iterations

    def _wsolve_us0(self, state, u_new, sl):
        p = self.cfg.p
        gp = fem.grad_p1(self.mesh, np.power(_pos(u_new), p - 1.0))
        load = (p / (p - 1.0)) * fem.mixed_vector_load(self.mesh, u_new, gp)
        rhs = (self.fs.M2 @ fem.stack_vec(state.sigma)) / self.cfg.dt + load
        return self._solve_sigma(rhs, sl)

    # -- stepping -----------------------------------------------------------------

    def step(self, state: SchemeState):
        """One backward-Euler step via Picard; returns (state, report).

        The u-update is relaxed dynamically (Irons-Tuck): with the factor
        capped at 1 this reproduces the plain iteration whenever it
        contracts with a positive ratio, and damps the sign-oscillating
        modes that otherwise cycle at coarse time steps.  The fixed point
        of the iteration is untouched.  For the sigma schemes the returned
        ``v`` is the recovered chemical (one extra SPD solve), so
        diagnostics always see a consistent (u, v, sigma) triple.
        """
        cfg = self.cfg
        usolve = getattr(self, f"_usolve_{cfg.scheme}")
        wsolve = getattr(self, f"_wsolve_{cfg.scheme}")
        vec = cfg.uses_sigma
        ul = state.u
        wl = state.sigma if vec else state.v
        max_solver = 0
        change = np.inf
        omega = 1.0
        r_prev = None
        for it in range(1, cfg.picard_max + 1):
            u_hat, it_u = usolve(state, ul, wl)
            r = u_hat - ul
            if r_prev is not None:
                dr = r - r_prev
                denom = float(dr @ dr)
                if denom > 0.0:
                    omega = float(np.clip(-omega * (r_prev @ dr) / denom, 0.05, 1.0))
            u1 = ul + omega * r
            r_prev = r
            w1, it_w = wsolve(state, u1, wl)
            max_solver = max(max_solver, it_u, it_w)
            change = max(self._change(u1, ul, False), self._change(w1, wl, vec))
            ul, wl = u1, w1
            if change <= cfg.picard_tol:
                break
        else:
            report = PicardReport(cfg.picard_max, change, max_solver)
            bad = self._pack(state, ul, wl)
            raise PicardError(cfg.scheme, state.step + 1, report, bad)
        new = self._pack(state, ul, wl)
        if vec:
            rec = self._recover(new.u, state.v, mode=cfg.scheme, x0=state.v)
            new.v = rec.x
            max_solver = max(max_solver, rec.iterations)
        return new, PicardReport(it, change, max_solver)

    def _pack(self, state, u_new, w_new) -> SchemeState:
        step = state.step + 1
        if self.cfg.uses_sigma:
            return SchemeState(u_new, state.v, w_new, step, step * self.cfg.dt)
        return SchemeState(u_new, w_new, None, step, step * self.cfg.dt)


def init_state(mesh, cfg: SchemeConfig, u0, v0, grad_v0=None) -> SchemeState:
    """Project initial data: lumped L2 for u, H1 for v, and for the sigma
    schemes the constrained L2 projection of grad(v_h).

    Rejects initial data that is negative at any node.
    """
    u0n = fem.interp(mesh, u0)
    v0n = fem.interp(mesh, v0)
    if np.min(u0n) < 0 or np.min(v0n) < 0:
        raise ValueError("initial data must be nonnegative at the mesh nodes")
    u_h = fem.project_Qh(mesh, u0n)
    v_h = fem.project_Rh(mesh, v0, grad_v0) if callable(v0) else v0n
    sigma = None
    if cfg.uses_sigma:
        sigma = fem.project_Qh_vec(mesh, fem.grad_p1(mesh, v_h))
    return SchemeState(u_h, v_h, sigma, 0, 0.0)


def _dispatch(mesh, cfg, state, ops, expected):
    if cfg.scheme != expected:
        raise ValueError(f"config selects scheme {cfg.scheme!r}, expected {expected!r}")
    return ops if ops is not None else Workspace(mesh, cfg)


def step_uv(mesh, cfg, state, ops=None):
    """One step of the plain backward-Euler scheme."""
    return _dispatch(mesh, cfg, state, ops, "uv").step(state)


def step_uveps(mesh, cfg, state, ops=None):
    """One step of the regularized (u, v) scheme."""
    return _dispatch(mesh, cfg, state, ops, "uveps").step(state)


def step_useps(mesh, cfg, state, ops=None):
    """One step of the regularized (u, sigma) scheme."""
    return _dispatch(mesh, cfg, state, ops, "useps").step(state)


def step_us0(mesh, cfg, state, ops=None):
    """One step of the unregularized (u, sigma) scheme."""
    return _dispatch(mesh, cfg, state, ops, "us0").step(state)


def recover_v(mesh, cfg, state, mode=None, ops=None) -> np.ndarray:
    """Recover the chemical from a sigma-scheme state.

    ``state.u`` is the new density and ``state.v`` the chemical of the
    previous step; one SPD solve of the screened heat equation with the
    mode's production load ('useps': regularized potential, 'us0': plain
    positive-part power) returns the new chemical.
    """
    ops = ops if ops is not None else Workspace(mesh, cfg)
    mode = mode or cfg.scheme
    return ops._recover(state.u, state.v, mode=mode, x0=state.v).x
