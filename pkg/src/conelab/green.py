"""k-Hessian operators, contact-set surrogates, ball Green's functions,
and the explicit constants of the sharp sup-bound.

Supported Green's functions: balls only, k >= n/2.  The k = n/2 branch is
normalized as log(|x-y|/R) so it vanishes on the boundary sphere.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from . import symcone
from .fd import ScalarField, hessian_field, lq_norm, sup_inf_osc
from .radial import RadialProfile, unit_ball_volume
from .symcone import MEMBERSHIP_TOL, elem_sym_table


def fk_pointwise(H, k):
    """k-Hessian value S_k(spectrum(H)) = sum of k x k principal minors."""
    return symcone.sk_minors(H, k)


def psi_from_f(f, rho_star_A, n, k):
    """Hessian-inequality right-hand side C(n,k) (f/(n rho*_k))^k."""
    if rho_star_A <= 0:
        raise ValueError("need rho*_k(A) > 0")
    if f < 0:
        raise ValueError("need f >= 0")
    return comb(n, k) * (f / (n * rho_star_A)) ** k


@dataclass
class ContactMask:
    grid: object
    mask: np.ndarray
    kind: str            # "upper" or "lower"
    k: int

    def size(self):
        return int(np.count_nonzero(self.mask))


def contact_mask(u, k, kind="upper"):
    """Pointwise spectral surrogate for the k-contact set.

    Lower set: nodes where spectrum(D^2 u) lies in the closed cone; upper
    set uses -D^2 u.  The surrogate contains the true contact set, so norms
    over it upper-bound norms over the exact set and every estimate checked
    against it remains a genuine inequality.  Closed-cone boundary nodes
    (slack within tolerance of zero) are included, as are interior nodes
    where the discrete Hessian is unavailable (outermost layer): excluding
    undecidable nodes could drop true contact points.
    """
    if kind not in ("upper", "lower"):
        raise ValueError("kind must be 'upper' or 'lower'")
    grid = u.grid
    n = grid.dim
    H, valid = hessian_field(u)
    sign = -1.0 if kind == "upper" else 1.0
    lam = np.linalg.eigvalsh(sign * H[valid])
    e = elem_sym_table(lam)
    slacks = e[:, 1:k + 1] / np.array([comb(n, j) for j in range(1, k + 1)])
    member = np.all(slacks >= -MEMBERSHIP_TOL, axis=1)
    mask = grid.interior & ~valid
    mask[valid] = member
    return ContactMask(grid, mask, kind, k)


@dataclass(frozen=True)
class GreenBallSpec:
    n: int
    k: int
    R: float
    y: tuple = ()

    def __post_init__(self):
        if self.k < 1 or self.k > self.n:
            raise ValueError("k out of range")
        if 2 * self.k < self.n:
            raise ValueError("Green's function requires k >= n/2")
        if self.R <= 0:
            raise ValueError("need R > 0")

    @property
    def log_branch(self):
        return 2 * self.k == self.n

    def center(self):
        return np.asarray(self.y if len(self.y) else np.zeros(self.n))


def green_ball_radial(spec, s):
    """Green's function value at distance s from the pole."""
    n, k, R = spec.n, spec.k, spec.R
    s = np.asarray(s, dtype=float)
    if np.any(s > R * (1 + 1e-12)):
        raise ValueError("point outside the ball")
    cnk_wn = comb(n, k) * unit_ball_volume(n)
    if spec.log_branch:
        return np.log(s / R) / cnk_wn ** (1.0 / k)
    p = 2.0 - n / k
    return (s ** p - R ** p) / (p * cnk_wn ** (1.0 / k))


def green_ball(spec, x):
    """G_y(x) for the ball B_R(y); vanishes on the boundary sphere."""
    x = np.asarray(x, dtype=float)
    s = np.linalg.norm(x - spec.center(), axis=-1)
    return green_ball_radial(spec, s)


def green_ball_profile(spec):
    """RadialProfile of G_y as a function of s = |x - y|."""
    n, k, R = spec.n, spec.k, spec.R
    cnk_wn = comb(n, k) * unit_ball_volume(n)
    c = 1.0 / cnk_wn ** (1.0 / k)
    if spec.log_branch:
        return RadialProfile(lambda s: c * np.log(np.asarray(s) / R),
                             du=lambda s: c / np.asarray(s),
                             d2u=lambda s: -c / np.asarray(s) ** 2)
    p = 2.0 - n / k
    return RadialProfile(
        lambda s: c / p * (np.asarray(s) ** p - R ** p),
        du=lambda s: c * np.asarray(s) ** (p - 1),
        d2u=lambda s: c * (p - 1) * np.asarray(s) ** (p - 2))


def green_depth(n, k, R):
    """-G_y(y) > 0 for the ball of radius R (k > n/2 only)."""
    if 2 * k <= n:
        raise ValueError("finite pole depth requires k > n/2")
    p = 2.0 - n / k
    cnk_wn = comb(n, k) * unit_ball_volume(n)
    return R ** p / (p * cnk_wn ** (1.0 / k))


def green_inf_bound(n, k, diam):
    """Lower bound on inf G_y over any domain of the given diameter."""
    if 2 * k <= n:
        raise ValueError("requires k > n/2")
    p = 2.0 - n / k
    cnk_wn = comb(n, k) * unit_ball_volume(n)
    return -diam ** p / (p * cnk_wn ** (1.0 / k))


def abp_constant(n, k, diam):
    """Explicit constant diam^{2-n/k} / (n (2-n/k) omega_n^{1/k}) in the
    sup bound over the contact set (k > n/2)."""
    if 2 * k <= n:
        raise ValueError("requires k > n/2")
    p = 2.0 - n / k
    return diam ** p / (n * p * unit_ball_volume(n) ** (1.0 / k))


def best_constant_ball(n, k, R):
    """Best constant on the ball: (1/n) C(n,k)^{1/k} (-G_y(y));
    equals abp_constant(n, k, 2R) * 2^{-(2-n/k)}."""
    if 2 * k <= n:
        raise ValueError("requires k > n/2")
    return comb(n, k) ** (1.0 / k) * green_depth(n, k, R) / n


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    constant: float
    norm: float
    mask_size: int

    @property
    def margin(self):
        return self.rhs - self.lhs

    def as_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "constant": self.constant,
                "norm": self.norm, "mask_size": self.mask_size,
                "margin": self.margin}


def precise_bound_check(uy, spec, psi_integral):
    """Check -u(y) <= -G_y(y) (int psi)^{1/k} and the cruder diameter-based
    variant; returns (precise, crude) reports."""
    if psi_integral < 0:
        raise ValueError("need a nonnegative psi integral")
    n, k, R = spec.n, spec.k, spec.R
    lhs = -uy
    depth = green_depth(n, k, R)
    amount = psi_integral ** (1.0 / k)
    precise = BoundReport(lhs, depth * amount, depth, amount, 0)
    crude_c = -green_inf_bound(n, k, 2 * R)
    crude = BoundReport(lhs, crude_c * amount, crude_c, amount, 0)
    return precise, crude


def radial_fk(n, k, prof, r):
    """Re-export of the radial k-Hessian (see radial module)."""
    from .radial import radial_fk as _rfk
    return _rfk(n, k, prof, r)


def rho_star_field(coeff, k, mask):
    """Per-node rho*_k of the coefficient spectrum over mask.

    Raises identifying the first offending node if rho*_k <= 0 anywhere.
    """
    grid = coeff.grid
    n = grid.dim
    lam = coeff.spectra(mask)
    if k == 2:
        s1 = lam.sum(axis=1)
        disc = s1 ** 2 - (n - 1) * np.sum(lam ** 2, axis=1)
        bad = (s1 < 0) | (disc < 0)
        vals = np.sqrt(np.maximum(disc, 0.0) / n)
    elif k == n:
        bad = lam.min(axis=1) < -MEMBERSHIP_TOL
        vals = np.prod(np.maximum(lam, 0.0), axis=1) ** (1.0 / n)
    else:
        vals = np.empty(len(lam))
        bad = np.zeros(len(lam), dtype=bool)
        for i, row in enumerate(lam):
            try:
                vals[i] = symcone.rho_star(row, k)
            except ValueError:
                bad[i] = True
                vals[i] = 0.0
    if np.any(bad | (vals <= 0.0)):
        i = int(np.argmax(bad | (vals <= 0.0)))
        node = np.argwhere(mask)[i]
        raise ValueError(f"rho*_{k} <= 0 at node {tuple(node)}")
    return vals


def theorem_rhs(f, coeff, k, q, mask, constant):
    """rhs = constant * || f / rho*_k(A(x)) ||_{L^q(mask)}, paired with the
    sup over the same grid's interior into a BoundReport (lhs filled by the
    caller if a solution field is at hand)."""
    grid = f.grid
    m = mask.mask if isinstance(mask, ContactMask) else mask
    rho = np.ones(grid.shape)
    if np.any(m):
        rho[m] = rho_star_field(coeff, k, m)
    ratio = ScalarField(grid, np.where(m, f.values / rho, 0.0))
    norm = lq_norm(ratio, q, m)
    return BoundReport(np.nan, constant * norm, constant, norm,
                       int(np.count_nonzero(m)))


def bound_report_for(u, f, coeff, k, q, constant, mask=None):
    """Full pipeline: sup u vs constant * contact-surrogate norm."""
    if mask is None:
        mask = contact_mask(u, k, "upper")
    rep = theorem_rhs(f, coeff, k, q, mask, constant)
    sup, _, _ = sup_inf_osc(u)
    rep.lhs = float(sup)
    return rep
