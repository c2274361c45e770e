"""Element-wise diagonal operators realizing discrete chain rules.

On a right-angled mesh the gradient of a P1 function decomposes along the
two axis-aligned legs, so a per-element diagonal matrix of leg-wise
difference quotients turns the gradient of the interpolated derivative of
the potential back into the field gradient exactly:

    L1(u) . grad I(f_prime(u)) = grad u                 per element,
    L2(u) . grad I(f_prime(u)) = (p-1) grad I(f_value(u))   per element,

with I the nodal interpolation.  These identities are what lets the
chemotaxis and production terms cancel in the discrete energy balance.
Both operators are returned as (n_elements, 2) arrays of the diagonal
entries in the global (x, y) frame; leading batch axes on the field are
passed through.
"""

from __future__ import annotations

import numpy as np

__all__ = ["lambda1", "lambda2", "EQUAL_VALUES_TOL"]

# below this relative gap the difference quotient flips to its limit
EQUAL_VALUES_TOL = 1e-12


def _leg_values(pot, mesh, u, quotient, limit):
    # leading batch axes allowed: (..., n_nodes) -> (..., n_elements, 2)
    u = np.asarray(u, dtype=float)
    el = mesh.elements
    u0 = u[..., el[:, 0]]
    out = np.empty(u.shape[:-1] + (mesh.n_elements, 2))
    lim = limit(u0)
    rows = np.arange(mesh.n_elements)
    for leg in (1, 2):
        ui = u[..., el[:, leg]]
        du = ui - u0
        use_quot = np.abs(du) > EQUAL_VALUES_TOL * np.maximum(1.0, np.abs(u0))
        # f_prime is strictly increasing, so the denominator only vanishes with du
        denom = pot.f_prime(ui) - pot.f_prime(u0)
        safe = np.where(use_quot, denom, 1.0)
        vals = np.where(use_quot, quotient(u0, ui, du, safe), lim)
        out[..., rows, mesh.leg_axis[:, leg - 1]] = vals
    return out


def lambda1(pot, mesh, u) -> np.ndarray:
    """Diagonal entries of the operator mapping grad I(f_prime(u)) to grad u.

    Leg entry: (u_i - u_0) / (f_prime(u_i) - f_prime(u_0)), or
    1 / f_second(u_0) when the nodal values coincide.  Eigenvalues of the
    inverse lie in [eps**(2-p), eps**(p-2)].
    """
    return _leg_values(
        pot,
        mesh,
        u,
        quotient=lambda u0, ui, du, df: du / df,
        limit=lambda u0: 1.0 / pot.f_second(u0),
    )


def lambda2(pot, mesh, u) -> np.ndarray:
    """Diagonal entries of the operator mapping grad I(f_prime(u)) to
    (p-1) grad I(f_value(u)).

    Leg entry: (p-1) (f_value(u_i) - f_value(u_0)) / (f_prime(u_i) -
    f_prime(u_0)), or the mobility a_eps(u_0) when the values coincide.
    """
    p = pot.p
    return _leg_values(
        pot,
        mesh,
        u,
        quotient=lambda u0, ui, du, df: (p - 1.0) * (pot.f_value(ui) - pot.f_value(u0)) / df,
        limit=pot.a_eps,
    )
