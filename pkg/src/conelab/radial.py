"""High-accuracy radial path for rotationally symmetric test problems.

A radial profile carries u(r), u'(r), u''(r); the rank-one-anisotropy
operator A = I + beta x x^T/|x|^2 acts on radial functions as
Lu(r) = (1 + beta) u''(r) + (n - 1) u'(r)/r.
"""

from __future__ import annotations

import warnings
from math import comb, gamma, pi

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline

from .symcone import NumericError


def unit_ball_volume(n):
    """omega_n: volume of the unit ball in R^n (pi, 4pi/3, pi^2/2, ...)."""
    return pi ** (n / 2) / gamma(n / 2 + 1)


class RadialProfile:
    """u(r) with first and second derivative accessors.

    Built either from callables (closed form, evaluated exactly) or from
    samples on an increasing positive r-range (cubic spline).
    Optional breakpoints mark derivative discontinuities for quadrature.
    """

    def __init__(self, u, du=None, d2u=None, r_samples=None,
                 breakpoints=()):
        if callable(u):
            if du is None or d2u is None:
                raise ValueError("closed-form profile needs u, du, d2u")
            self.u, self.du, self.d2u = u, du, d2u
        else:
            r = np.asarray(r_samples, dtype=float)
            if r.ndim != 1 or np.any(np.diff(r) <= 0) or r[0] <= 0:
                raise ValueError("r-samples must be increasing and positive")
            spline = CubicSpline(r, np.asarray(u, dtype=float))
            self.u = spline
            self.du = spline.derivative(1)
            self.d2u = spline.derivative(2)
        self.breakpoints = tuple(float(b) for b in breakpoints)

    def map(self, fn):
        """New profile with values fn(r) (no derivatives), keeping
        breakpoints; use for derived quantities like Lu."""
        return RadialProfile(fn, du=_no_deriv, d2u=_no_deriv,
                             breakpoints=self.breakpoints)


def _no_deriv(r):
    raise ValueError("derived profile has no derivative accessor")


def radial_apply(n, beta, prof):
    """Profile of Lu for A = I + beta x x^T/|x|^2:
    Lu(r) = (1 + beta) u'' + (n - 1) u'/r.  Only valid for r > 0."""

    def lu(r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("radial operator undefined at r <= 0")
        return (1.0 + beta) * prof.d2u(r) + (n - 1) * prof.du(r) / r
    return prof.map(lu)


def radial_fk(n, k, prof, r):
    """k-Hessian of a radial function at radius r:
    S_k of the spectrum {u''} + {u'/r with multiplicity n-1}."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("need r > 0")
    t = prof.du(r) / r
    return (comb(n - 1, k) * t ** k
            + comb(n - 1, k - 1) * t ** (k - 1) * prof.d2u(r))


def radial_lq_norm(prof, n, q, r_range, rel_tol=1e-9):
    """(integral |u(r)|^q n omega_n r^{n-1} dr)^{1/q} by adaptive
    quadrature over r_range, splitting at profile breakpoints."""
    if q < 1:
        raise ValueError("need q >= 1")
    a, b = map(float, r_range)
    cuts = sorted({a, b} | {c for c in prof.breakpoints if a < c < b})
    surf = n * unit_ball_volume(n)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        with warnings.catch_warnings():
            # convergence is gated on the returned error estimate below
            warnings.simplefilter("ignore", IntegrationWarning)
            val, err = quad(lambda r: np.abs(prof.u(r)) ** q
                            * surf * r ** (n - 1),
                            lo, hi, limit=200, epsrel=rel_tol, epsabs=0.0)
        if err > 1e-7 * max(abs(val), 1e-300) + 1e-13:
            raise NumericError(f"quadrature did not converge on "
                               f"[{lo}, {hi}]: err {err:.2e}")
        total += val
    return total ** (1.0 / q)


def power_profile(alpha, breakpoints=()):
    """u(r) = r^alpha in closed form (alpha = 0 gives log r)."""
    if alpha == 0.0:
        return RadialProfile(np.log,
                             du=lambda r: 1.0 / r,
                             d2u=lambda r: -1.0 / np.asarray(r) ** 2,
                             breakpoints=breakpoints)
    return RadialProfile(lambda r: np.asarray(r) ** alpha,
                         du=lambda r: alpha * np.asarray(r) ** (alpha - 1),
                         d2u=lambda r: alpha * (alpha - 1)
                         * np.asarray(r) ** (alpha - 2),
                         breakpoints=breakpoints)


def mollified_power_profile(alpha, eps):
    """C^1 glue of r^alpha (r >= eps) with a quadratic core:
    (alpha/2) eps^{alpha-2} r^2 + (1 - alpha/2) eps^alpha for r < eps.
    For alpha = 0 the outer branch is log r and the core constant is
    log(eps) - 1/2."""
    eps = float(eps)
    if eps <= 0:
        raise ValueError("need eps > 0")
    if alpha == 0.0:
        core_a, core_c = 0.5 / eps ** 2, np.log(eps) - 0.5
        outer = power_profile(0.0)
    else:
        core_a = (alpha / 2.0) * eps ** (alpha - 2)
        core_c = (1.0 - alpha / 2.0) * eps ** alpha
        outer = power_profile(alpha)

    def u(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= eps, outer.u(np.maximum(r, eps)),
                        core_a * r ** 2 + core_c)

    def du(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= eps, outer.du(np.maximum(r, eps)),
                        2.0 * core_a * r)

    def d2u(r):
        r = np.asarray(r, dtype=float)
        return np.where(r >= eps, outer.d2u(np.maximum(r, eps)),
                        2.0 * core_a)

    return RadialProfile(u, du=du, d2u=d2u, breakpoints=(eps,))
