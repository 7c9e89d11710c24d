"""Elementary symmetric cone calculus on spectra and symmetric matrices.

Implements the Garding cones G_k (S_1,...,S_k > 0), their closures and dual
cones, the degree-1 normalizations rho_k = (S_k/C(n,k))^{1/k}, and the dual
gauge rho*_k = inf { lam.mu / n : mu in G_k, rho_k(mu) >= 1 }.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.optimize import fsolve, minimize

MEMBERSHIP_TOL = 1e-9
BOUNDARY_TOL = 1e-7

OPEN, CLOSED, DUAL = "open", "closed", "dual"


class NumericError(RuntimeError):
    """Optimizer or iteration failure; carries the best value found so far."""

    def __init__(self, msg, best=None):
        super().__init__(msg)
        self.best = best


@dataclass(frozen=True)
class ConeVerdict:
    member: bool
    margin: float
    k: int
    variant: str

    def as_dict(self):
        return {"member": self.member, "margin": self.margin,
                "k": self.k, "variant": self.variant}


def _check_spectrum(lam):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise ValueError("spectrum must be a 1-d array with n >= 2")
    if not np.all(np.isfinite(lam)):
        raise ValueError("spectrum entries must be finite")
    return lam


def _check_k(k, n):
    k = int(k)
    if not 1 <= k <= n:
        raise ValueError(f"cone index k={k} out of range 1..{n}")
    return k


def elem_sym_table(values):
    """All elementary symmetric functions e_0..e_n of the last axis.

    Accepts arrays of shape (..., n); returns shape (..., n+1).  Entries are
    sorted internally so the result is exactly permutation invariant.
    """
    v = np.sort(np.asarray(values, dtype=float), axis=-1)
    n = v.shape[-1]
    e = np.zeros(v.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        x = v[..., i]
        e[..., 1:i + 2] = e[..., 1:i + 2] + x[..., None] * e[..., 0:i + 1]
    return e


def elem_sym(lam, k):
    """S_k(lam): sum of products over increasing k-tuples."""
    lam = _check_spectrum(lam)
    k = _check_k(k, lam.size)
    return float(elem_sym_table(lam)[k])


def _elem_sym_grad(mu, k, e=None):
    """Gradient of S_k: dS_k/dmu_i = S_{k-1} of mu with entry i deleted.

    Deflation of the full table: e_j = d_j + mu_i d_{j-1}, vectorized in i.
    """
    mu = np.asarray(mu, dtype=float)
    if e is None:
        e = elem_sym_table(mu)
    d = np.ones_like(mu)
    for j in range(1, k):
        d = e[j] - mu * d
    return d


def _elem_sym_jac(mu, k):
    """Stacked gradients of S_1..S_k, shape (k, n)."""
    mu = np.asarray(mu, dtype=float)
    e = elem_sym_table(mu)
    rows = np.empty((k, mu.size))
    d = np.ones_like(mu)
    rows[0] = d
    for j in range(1, k):
        d = e[j] - mu * d
        rows[j] = d
    return rows


def rho_k(lam, k):
    """Normalized symmetric function (S_k/C(n,k))^{1/k}, degree-1 homogeneous.

    Defined (positive) on G_k; returns the limit value on the closure, and
    raises on spectra with S_k < 0.
    """
    lam = _check_spectrum(lam)
    k = _check_k(k, lam.size)
    sk = elem_sym(lam, k)
    if sk < 0:
        raise ValueError(f"S_{k} = {sk} < 0: spectrum outside the closed cone")
    return (sk / comb(lam.size, k)) ** (1.0 / k)


def in_cone(lam, k, closed=False):
    """Membership of lam in G_k (open) or its closure.

    Margin is the smallest normalized slack min_j S_j(lam)/C(n,j), j=1..k.
    """
    lam = _check_spectrum(lam)
    n = lam.size
    k = _check_k(k, n)
    e = elem_sym_table(lam)
    slacks = [e[j] / comb(n, j) for j in range(1, k + 1)]
    margin = float(min(slacks))
    member = margin > (-MEMBERSHIP_TOL if closed else MEMBERSHIP_TOL)
    return ConeVerdict(member, margin, k, CLOSED if closed else OPEN)


def _cone_constraints(n, k):
    """Single vector-valued SLSQP constraint S_j(mu) >= 0, j = 1..k."""
    return [{
        "type": "ineq",
        "fun": lambda mu: elem_sym_table(mu)[1:k + 1],
        "jac": lambda mu: _elem_sym_jac(mu, k),
    }]


def _dual_margin_optimize(lam, k):
    """General-k sphere margin by optimization.

    A convex slice program (S_1 fixed; every ray of the cone meets the slice
    when k >= 2) locates the globally optimal ray, then a sphere-constrained
    polish refines the value.
    """
    n = lam.size
    scale = float(np.linalg.norm(lam))
    if scale == 0.0:
        return 0.0
    lam_s = lam / scale

    cons = _cone_constraints(n, k)
    slice_cons = cons + [{
        "type": "eq",
        "fun": lambda mu: elem_sym_table(mu)[1] - np.sqrt(n),
        "jac": lambda mu: np.ones(n),
    }]
    x0 = np.full(n, 1.0 / np.sqrt(n))
    res = minimize(lambda mu: lam_s @ mu, x0, jac=lambda mu: lam_s,
                   constraints=slice_cons, method="SLSQP",
                   options={"maxiter": 200, "ftol": 1e-14})
    seeds = []
    if res.x is not None and np.linalg.norm(res.x) > 1e-12:
        seeds.append(res.x / np.linalg.norm(res.x))
    seeds.append(np.eye(n)[int(np.argmin(lam))])

    sphere_cons = cons + [{
        "type": "eq",
        "fun": lambda mu: mu @ mu - 1.0,
        "jac": lambda mu: 2.0 * mu,
    }]
    best = float(lam_s.min())   # basis vectors are always feasible
    ok = False
    for s in seeds:
        r = minimize(lambda mu: lam_s @ mu, s, jac=lambda mu: lam_s,
                     constraints=sphere_cons, method="SLSQP",
                     options={"maxiter": 200, "ftol": 1e-14})
        if r.x is not None and abs(r.x @ r.x - 1.0) < 1e-8:
            feas = min(elem_sym_table(r.x)[j] for j in range(1, k + 1))
            if feas > -1e-10:
                best = min(best, float(lam_s @ r.x))
                ok = ok or r.success
        if ok and s is seeds[0]:
            break   # slice seed converged; later seeds rarely improve
    if not ok:
        raise NumericError("dual-cone minimization did not converge",
                           best=best * scale)
    return best * scale


def dual_margin(lam, k):
    """inf { lam.mu : mu in closure(G_k), |mu| = 1 }.

    Nonnegative exactly when lam lies in the dual cone G*_k.  Closed forms
    for k = 1 (half-space), k = 2 (the cone is circular: S_2 >= 0 iff
    S_1 >= |mu|), and k = n (positive orthant); optimization otherwise.
    """
    lam = _check_spectrum(lam)
    n = lam.size
    k = _check_k(k, n)

    if k == 1:
        # half-space {S_1 >= 0}: split lam along the diagonal ray
        ell = lam.mean()
        perp = lam - ell
        if ell >= 0.0:
            return -float(np.linalg.norm(perp))
        return -float(np.linalg.norm(lam))
    if k == n:
        # positive orthant: basis vectors / negative-part direction
        neg = lam[lam < 0]
        if neg.size == 0:
            return float(lam.min())
        return -float(np.linalg.norm(neg))
    if k == 2:
        # circular cone with axis (1,..,1)/sqrt(n), half-angle arccos(1/sqrt n)
        a = lam.sum() / np.sqrt(n)
        perp = float(np.linalg.norm(lam - lam.mean()))
        if a < 0.0 and perp < -a * np.sqrt(n - 1):
            return -float(np.linalg.norm(lam))
        return float((a - np.sqrt(n - 1) * perp) / np.sqrt(n))
    return _dual_margin_optimize(lam, k)


def in_dual_cone(lam, k):
    """Membership of lam in the dual cone G*_k, with the sphere margin."""
    lam = _check_spectrum(lam)
    k = _check_k(k, lam.size)
    m = dual_margin(lam, k)
    return ConeVerdict(m >= -MEMBERSHIP_TOL, m, k, DUAL)


def rho_star_closed_form_2(lam):
    """Explicit dual gauge for k = 2:
    (1/sqrt(n)) * ((sum lam)^2 - (n-1)|lam|^2)^{1/2}."""
    lam = _check_spectrum(lam)
    n = lam.size
    val = lam.sum() ** 2 - (n - 1) * float(lam @ lam)
    if val < 0:
        raise ValueError("spectrum outside G*_2")
    return float(np.sqrt(val / n))


def _rho_star_newton(lam, k):
    """Critical-point fast path: solve lam = c * grad S_k(mu), S_k(mu) = C(n,k).

    Returns a candidate value or None; callers must validate against an
    independently obtained bound (Newton can land on non-minimizing points).
    """
    n = lam.size
    target = float(comb(n, k))

    def eqs(z):
        mu, c = z[:n], z[n]
        out = np.empty(n + 1)
        out[:n] = lam - c * _elem_sym_grad(mu, k)
        out[n] = elem_sym_table(mu)[k] - target
        return out

    z0 = np.concatenate([np.ones(n), [lam.sum() / (n * k)]])
    with np.errstate(all="ignore"):
        z, info, ier, _ = fsolve(eqs, z0, full_output=True)
    if ier != 1:
        return None
    mu = z[:n]
    e = elem_sym_table(mu)
    if min(e[j] for j in range(1, k + 1)) < -1e-8:
        return None
    return float(lam @ mu / n)


def rho_star_detail(lam, k):
    """Dual gauge rho*_k(lam) plus a flag marking the cone boundary.

    Dispatches to closed forms for k in {1, 2, n}; otherwise minimizes the
    linear objective over the convex slice {S_k >= C(n,k)} of the cone.
    """
    lam = _check_spectrum(lam)
    n = lam.size
    k = _check_k(k, n)
    scale = float(np.linalg.norm(lam))
    if scale == 0.0:
        return 0.0, True

    def reject(margin):
        raise ValueError(f"spectrum not in dual cone G*_{k} "
                         f"(margin {margin:.3e})")

    tol = MEMBERSHIP_TOL * scale
    if k in (1, 2, n):
        margin = dual_margin(lam, k)
        if margin < -tol:
            reject(margin)
        if k == 1:
            val = float(lam.mean())
        elif k == n:
            val = float(np.prod(np.maximum(lam, 0.0)) ** (1.0 / n))
        else:
            val = rho_star_closed_form_2(lam)
        if margin < BOUNDARY_TOL * scale:
            return 0.0, True
        return val, False

    val = rho_star_program(lam, k)
    if val < BOUNDARY_TOL * scale:
        return 0.0, True
    return val, False


def rho_star_program(lam, k):
    """Dual gauge by direct minimization over {S_k >= C(n,k)}: the slice
    meets every ray of G_k, so a negative minimum certifies a separating
    direction (lam outside G*_k) and no membership precheck is needed.

    Works for any 2 <= k <= n; the closed-form cases dispatch here too
    when called directly, which is how the two routes are cross-checked.
    """
    lam = _check_spectrum(lam)
    n = lam.size
    k = _check_k(k, n)
    scale = float(np.linalg.norm(lam))
    if scale == 0.0:
        return 0.0

    def reject(margin):
        raise ValueError(f"spectrum not in dual cone G*_{k} "
                         f"(margin {margin:.3e})")

    tol = MEMBERSHIP_TOL * scale
    lam_s = lam / scale
    target = float(comb(n, k))
    cons = _cone_constraints(n, k - 1) + [{
        "type": "ineq",
        "fun": lambda mu: elem_sym_table(mu)[k] - target,
        "jac": lambda mu: _elem_sym_grad(mu, k),
    }]
    box = 1e3
    best = None
    res = minimize(lambda mu: lam_s @ mu / n, np.full(n, 1.0),
                   jac=lambda mu: lam_s / n,
                   bounds=[(-box, box)] * n, constraints=cons,
                   method="SLSQP",
                   options={"maxiter": 300, "ftol": 1e-14})
    if res.x is not None:
        e = elem_sym_table(res.x)
        if (e[k] >= target - 1e-6
                and min(e[j] for j in range(1, k)) > -1e-8):
            best = float(lam_s @ res.x / n)
    if best is None:
        margin = dual_margin(lam, k)
        if margin < -tol:
            reject(margin)
        raise NumericError("rho*_k minimization did not converge")
    if best < -MEMBERSHIP_TOL or np.max(np.abs(res.x)) > 0.99 * box:
        reject(dual_margin(lam, k))
    newton = _rho_star_newton(lam_s, k)
    if newton is not None and 0.0 <= newton < best:
        best = newton
    return best * scale


def rho_star(lam, k):
    """Dual gauge rho*_k(lam); 0 on the boundary of G*_k."""
    val, _ = rho_star_detail(lam, k)
    return val


def rho_star_oracle(lam, k, samples, seed=0):
    """Brute-force upper bound on rho*_k by dense direction sampling.

    Draws random directions in the ascending-sorted sector of G_k, rescales
    each to rho_k(mu) = 1 by homogeneity, and returns the minimal lam.mu/n.
    Half the budget samples globally, half concentrates near the incumbent.
    Independent of the optimizer path in rho_star.
    """
    lam = _check_spectrum(lam)
    n = lam.size
    k = _check_k(k, n)
    rng = np.random.default_rng(seed)
    lam_sorted = np.sort(lam)[::-1]
    cnk = comb(n, k)

    def evaluate(mu):
        # mu: (m, n) candidate directions, ascending-sorted
        e = elem_sym_table(mu)
        feas = np.all(e[:, 1:k + 1] > 0.0, axis=1)
        if not np.any(feas):
            return None, None
        mu = mu[feas]
        r = (e[feas, k] / cnk) ** (1.0 / k)
        mu = mu / r[:, None]
        vals = mu @ lam_sorted / n
        i = int(np.argmin(vals))
        return float(vals[i]), mu[i]

    half = max(samples // 2, 1)
    best_val, best_mu = None, None
    # global phase: Gaussian directions plus heavy-tailed draws so strongly
    # anisotropic minimizers are reachable
    gauss = rng.standard_normal((half // 2, n))
    cauchy = rng.standard_t(1, size=(half - half // 2, n))
    for batch in (gauss, cauchy):
        if batch.size == 0:
            continue
        v, m = evaluate(np.sort(batch, axis=1))
        if v is not None and (best_val is None or v < best_val):
            best_val, best_mu = v, m
    if best_val is None:
        raise NumericError("no feasible direction found in the sorted sector")

    # local phase: shrinking scale-aware perturbations of the incumbent
    widths = (0.3, 0.1, 0.03, 0.01, 0.003, 0.001)
    m = max((samples - half) // len(widths), 1)
    for width in widths:
        step = width * (np.abs(best_mu) + 1.0)
        cand = best_mu + step * rng.standard_normal((m, n))
        v, mm = evaluate(np.sort(cand, axis=1))
        if v is not None and v < best_val:
            best_val, best_mu = v, mm
    return best_val


def mui_necessary(mu, k):
    """Necessary linear conditions for membership of mu in the dual cone
    G*_k: k(n-1) mu_i + (n-k) sum_{j != i} mu_j >= 0 for every i."""
    mu = _check_spectrum(mu)
    n = mu.size
    k = _check_k(k, n)
    s = mu.sum()
    slacks = k * (n - 1) * mu + (n - k) * (s - mu)
    margin = float(slacks.min())
    return ConeVerdict(margin >= -MEMBERSHIP_TOL, margin, k, CLOSED)


def gs_spectrum(n, alpha):
    """Eigenvalues (1,...,1,(n-1)/(1-alpha)) of the radial-anisotropy
    operator; lies in G*_k exactly when alpha <= 2 - n/k."""
    n = int(n)
    if n < 2:
        raise ValueError("need n >= 2")
    if alpha >= 1:
        raise ValueError("alpha must be < 1")
    lam = np.ones(n)
    lam[-1] = (n - 1) / (1.0 - alpha)
    return lam


def _check_symmetric(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.array_equal(A, A.T):
        raise ValueError("matrix must be exactly symmetric")
    return A


def spectrum_of(A, max_sweeps=100):
    """Eigenvalues of a symmetric matrix, descending, by cyclic Jacobi
    rotations (off-diagonal norm stop 1e-13 * ||A||)."""
    A = _check_symmetric(A).copy()
    n = A.shape[0]
    norm = np.linalg.norm(A)
    if norm == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= 1e-13 * norm:
            return np.sort(np.diag(A))[::-1]
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                if theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t ** 2 + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                A = R.T @ A @ R
    raise NumericError("Jacobi eigensolver did not converge",
                       best=np.sort(np.diag(A))[::-1])


def sk_minors(A, k):
    """[A]_k: sum of the k x k principal minors, by direct expansion."""
    from itertools import combinations

    A = _check_symmetric(A)
    n = A.shape[0]
    k = _check_k(k, n)
    total = 0.0
    for idx in combinations(range(n), k):
        sub = A[np.ix_(idx, idx)]
        total += float(np.linalg.det(sub))
    return total


def gamma2_star_matrix_test(A):
    """Matrix-norm characterization of G*_2:
    member iff tr A > 0 and ||(n-1)/tr(A) * A - I||_HS <= 1.

    The Hilbert-Schmidt norm makes this identical (by expanding the square)
    to the eigenvalue ball characterization |lam| <= S_1/sqrt(n-1).
    """
    A = _check_symmetric(A)
    n = A.shape[0]
    tr = float(np.trace(A))
    if tr <= 0.0:
        return ConeVerdict(False, -np.inf if tr < 0 else -1.0, 2, DUAL)
    dev = float(np.linalg.norm((n - 1) / tr * A - np.eye(n)))
    margin = 1.0 - dev
    return ConeVerdict(margin > -MEMBERSHIP_TOL, margin, 2, DUAL)


def lambda_chain_check(A, k, a0, rho0):
    """Uniform-ellipticity chain gate:
    lam_min >= lam_max^{1-n} rho_n^n and lam_min >= a0^{1-n} rho0^n."""
    A = _check_symmetric(A)
    n = A.shape[0]
    k = _check_k(k, n)
    if rho0 <= 0.0:
        raise ValueError("need rho0 > 0")
    lam = spectrum_of(A)
    if np.linalg.norm(A) > a0 + 1e-12:
        raise ValueError(f"|A| = {np.linalg.norm(A):.6g} exceeds a0 = {a0}")
    rs = rho_star(lam, k)
    if rs < rho0 - 1e-12:
        raise ValueError(f"rho*_{k}(A) = {rs:.6g} below rho0 = {rho0}")
    lam_max, lam_min = lam[0], lam[-1]
    if lam_min <= 0.0:
        return False
    rho_n = float(np.prod(lam)) ** (1.0 / n)
    tol = 1e-12 * max(1.0, lam_max)
    return (lam_min >= lam_max ** (1 - n) * rho_n ** n - tol
            and lam_min >= a0 ** (1 - n) * rho0 ** n - tol)
