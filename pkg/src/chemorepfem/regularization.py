"""Regularized production potential with clamped curvature.

The chemical production nonlinearity s**p (1 < p < 2) enters the energy
through the convex potential s**p / (p*(p-1)).  For negative or very large
densities that potential is useless (complex values, unbounded curvature),
so the solver works with a C^2 family: the second derivative is clamped to
eps**(p-2) below s = eps and to eps**(2-p) above s = 1/eps, and the
quadratic tails are glued on with C^1 continuity.  The curvature bounds
eps**(2-p) <= F'' <= eps**(p-2) are what every stability estimate uses.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RegularizedPotential"]


class RegularizedPotential:
    """C^2 convex regularization of s**p / (p*(p-1)) with quadratic tails.

    Inside [eps, 1/eps] the potential equals s**p / (p*(p-1)) plus a fixed
    additive constant chosen so the whole family stays nonnegative; outside
    it continues with constant curvature.  The normalizations are
    ``f_prime(1) == 1/(p-1)`` and the low-tail closed form

        f_value(s) = f_value(0) + f_prime(0)*s + 0.5*eps**(p-2)*s**2,

    with f_value(0) = ((2-p)/(p-1))**2 * eps**p and
    f_prime(0) = ((2-p)/(p-1)) * eps**(p-1).

    Instances are immutable; all evaluators accept scalars or arrays and
    are total on the real line.  Fractional powers are only ever taken of
    strictly positive arguments (branch selection handles s <= eps).
    """

    def __init__(self, p: float, eps: float):
        if not 1.0 < p < 2.0:
            raise ValueError(f"production exponent must satisfy 1 < p < 2, got {p}")
        if not 0.0 < eps < 1.0:
            raise ValueError(f"regularization parameter must satisfy 0 < eps < 1, got {eps}")
        p = float(p)
        eps = float(eps)
        self.p = p
        self.eps = eps
        self.s_lo = eps
        self.s_hi = 1.0 / eps

        q = (2.0 - p) / (p - 1.0)
        # low tail: 0.5*eps^(p-2)*s^2 + lo_lin*s + lo_const  (exact closed form)
        self._lo_curv = eps ** (p - 2.0)
        self._lo_lin = q * eps ** (p - 1.0)
        self._lo_const = q * q * eps**p
        # middle: s^p/(p(p-1)) + mid_const, with f_prime anchored at f_prime(1)=1/(p-1)
        self._mid_const = (p**3 - 4.0 * p**2 + 3.0 * p + 2.0) / (2.0 * p * (p - 1.0) ** 2) * eps**p
        # high tail: constants fixed once by C1/C0 matching at s = 1/eps
        self._hi_curv = eps ** (2.0 - p)
        self._hi_lin = self.s_hi ** (p - 1.0) / (p - 1.0) - self._hi_curv * self.s_hi
        f_mid_at_hi = self.s_hi**p / (p * (p - 1.0)) + self._mid_const
        self._hi_const = f_mid_at_hi - (0.5 * self._hi_curv * self.s_hi**2 + self._hi_lin * self.s_hi)

    def __repr__(self):
        return f"RegularizedPotential(p={self.p}, eps={self.eps})"

    def _branches(self, s):
        s = np.asarray(s, dtype=float)
        scalar = s.ndim == 0
        s = np.atleast_1d(s)
        lo = s <= self.s_lo
        hi = s >= self.s_hi
        mid = ~(lo | hi)
        return s, lo, mid, hi, scalar

    @staticmethod
    def _ret(out, scalar):
        return float(out[0]) if scalar else out

    def f_second(self, s):
        """Clamped curvature; continuous and >= eps**(2-p) everywhere."""
        s, lo, mid, hi, scalar = self._branches(s)
        out = np.empty_like(s)
        out[lo] = self._lo_curv
        out[hi] = self._hi_curv
        out[mid] = np.power(s[mid], self.p - 2.0)
        return self._ret(out, scalar)

    def f_prime(self, s):
        """Piecewise C^1 antiderivative of f_second with f_prime(1) = 1/(p-1)."""
        s, lo, mid, hi, scalar = self._branches(s)
        out = np.empty_like(s)
        out[lo] = self._lo_curv * s[lo] + self._lo_lin
        out[hi] = self._hi_curv * s[hi] + self._hi_lin
        out[mid] = np.power(s[mid], self.p - 1.0) / (self.p - 1.0)
        return self._ret(out, scalar)

    def f_value(self, s):
        """The potential itself; C^2, convex, nonnegative on all of R."""
        s, lo, mid, hi, scalar = self._branches(s)
        out = np.empty_like(s)
        out[lo] = (0.5 * self._lo_curv * s[lo] + self._lo_lin) * s[lo] + self._lo_const
        out[hi] = (0.5 * self._hi_curv * s[hi] + self._hi_lin) * s[hi] + self._hi_const
        out[mid] = np.power(s[mid], self.p) / (self.p * (self.p - 1.0)) + self._mid_const
        return self._ret(out, scalar)

    def a_eps(self, s):
        """Mobility (p-1)*f_prime/f_second; globally Lipschitz with constant 1."""
        s, lo, mid, hi, scalar = self._branches(s)
        p = self.p
        out = np.empty_like(s)
        out[lo] = (p - 1.0) * s[lo] + (2.0 - p) * self.eps
        out[hi] = (p - 1.0) * s[hi] + (2.0 - p) * self.s_hi
        out[mid] = s[mid]
        return self._ret(out, scalar)
