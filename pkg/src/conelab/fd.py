"""Grids, fields, and discrete non-divergence elliptic operators.

Operators have the form Lu = a^{ij} D_ij u + b^i D_i u + c u on box or ball
domains, discretized with second-order central differences (four-point cross
stencil for the mixed terms).  Ball boundaries are handled by cut cells: the
first lattice layer outside the interior carries Dirichlet data evaluated at
the radial projection onto the sphere, which costs one order at the boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.ndimage import binary_dilation, binary_erosion
from scipy.sparse.linalg import bicgstab, spsolve

from .symcone import NumericError

MIN_INTERIOR_PER_AXIS = 3


class MonotonicityWarning(UserWarning):
    """A stencil weight has the wrong sign for the discrete maximum
    principle (strongly anisotropic coefficients)."""


@dataclass(frozen=True)
class Domain:
    kind: str                 # "ball" or "box"
    dim: int
    center: np.ndarray | None = None
    radius: float | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    @staticmethod
    def ball(center, radius):
        center = np.asarray(center, dtype=float)
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        return Domain("ball", center.size, center=center, radius=float(radius))

    @staticmethod
    def box(lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size != hi.size or not np.all(lo < hi):
            raise ValueError("box needs lo < hi componentwise")
        return Domain("box", lo.size, lo=lo, hi=hi)

    @property
    def diam(self):
        if self.kind == "ball":
            return 2.0 * self.radius
        return float(np.linalg.norm(self.hi - self.lo))

    def to_dict(self):
        if self.kind == "ball":
            return {"kind": "ball", "center": self.center.tolist(),
                    "radius": self.radius}
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @staticmethod
    def from_dict(d):
        if d["kind"] == "ball":
            return Domain.ball(d["center"], d["radius"])
        if d["kind"] == "box":
            return Domain.box(d["lo"], d["hi"])
        raise ValueError(f"unknown domain kind {d['kind']!r}")


class Grid:
    """Uniform lattice over a domain with interior/boundary classification.

    Ball lattices are offset half a spacing from the center so no node can
    sit on a coefficient singularity there.  Boundary nodes are the cube
    neighbors of interior nodes that are not themselves interior.
    """

    def __init__(self, domain, h):
        if h <= 0:
            raise ValueError("spacing h must be positive")
        self.domain = domain
        self.h = float(h)
        n = domain.dim
        if domain.kind == "box":
            counts = np.round((domain.hi - domain.lo) / h).astype(int)
            if np.any(np.abs(counts * h - (domain.hi - domain.lo)) > 1e-9 * h):
                raise ValueError("box extents must be multiples of h")
            self.axes = [domain.lo[i] + np.arange(counts[i] + 1) * h
                         for i in range(n)]
            shape = tuple(c + 1 for c in counts)
            interior = np.zeros(shape, dtype=bool)
            interior[(slice(1, -1),) * n] = True
            active = np.ones(shape, dtype=bool)
        else:
            m = int(np.ceil(domain.radius / h)) + 1
            self.axes = [domain.center[i] + (np.arange(-m, m) + 0.5) * h
                         for i in range(n)]
            r = self._radius_map()
            interior = r < domain.radius - h / 2
            active = binary_dilation(interior, structure=np.ones((3,) * n,
                                                                dtype=bool))
        self.shape = interior.shape
        self.interior = interior
        self.boundary = active & ~interior
        self.active = active
        per_axis = [np.count_nonzero(interior.any(
            axis=tuple(j for j in range(n) if j != i)))
            for i in range(n)]
        if min(per_axis, default=0) < MIN_INTERIOR_PER_AXIS:
            raise ValueError(
                f"grid too coarse: {per_axis} interior nodes per axis")

    @property
    def dim(self):
        return self.domain.dim

    def _radius_map(self):
        c = self.domain.center
        mesh = np.meshgrid(*[ax - c[i] for i, ax in enumerate(self.axes)],
                           indexing="ij")
        return np.sqrt(sum(x ** 2 for x in mesh))

    def points(self):
        """Node coordinates, shape = grid shape + (n,)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def boundary_points(self):
        """Representative boundary coordinates for each boundary node:
        the node itself on boxes, its radial projection on spheres."""
        pts = self.points()[self.boundary]
        if self.domain.kind == "ball":
            rel = pts - self.domain.center
            r = np.linalg.norm(rel, axis=-1)
            pts = self.domain.center + self.domain.radius * rel / r[:, None]
        return pts

    def volume_weight(self):
        return self.h ** self.dim


def build_grid(domain, h):
    return Grid(domain, h)


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(self.values[self.grid.active])):
            raise ValueError("non-finite values on active nodes")


def field_from_function(grid, fn):
    """Sample fn(points) -> values on all lattice nodes (vectorized over the
    trailing coordinate axis)."""
    vals = np.asarray(fn(grid.points()), dtype=float)
    vals = np.where(grid.active, vals, 0.0)
    return ScalarField(grid, vals)


def boundary_field(grid, fn):
    """Dirichlet data: fn evaluated at representative boundary points
    (radially projected for cut cells on balls)."""
    vals = np.zeros(grid.shape)
    vals[grid.boundary] = np.asarray(fn(grid.boundary_points()), dtype=float)
    return ScalarField(grid, vals)


@dataclass
class CoeffField:
    """Per-node coefficients: A (shape + (n, n), symmetric), optional b
    (shape + (n,)) and c (shape)."""
    grid: Grid
    A: np.ndarray
    b: np.ndarray | None = None
    c: np.ndarray | None = None

    def __post_init__(self):
        n = self.grid.dim
        if self.A.shape != self.grid.shape + (n, n):
            raise ValueError("coefficient matrix field has wrong shape")
        if not np.allclose(self.A, np.swapaxes(self.A, -1, -2), atol=0.0):
            raise ValueError("coefficient matrices must be symmetric")

    def spectra(self, mask=None):
        """Per-node eigenvalues (descending) over mask (default interior)."""
        mask = self.grid.interior if mask is None else mask
        lam = np.linalg.eigvalsh(self.A[mask])
        return lam[:, ::-1]


def constant_coeff(A, b=None, c=None):
    """Builder for a spatially constant coefficient field."""
    A = np.asarray(A, dtype=float)

    def build(grid):
        full = np.broadcast_to(A, grid.shape + A.shape).copy()
        bb = (np.broadcast_to(np.asarray(b, dtype=float),
                              grid.shape + (grid.dim,)).copy()
              if b is not None else None)
        cc = (np.full(grid.shape, float(c)) if c is not None else None)
        return CoeffField(grid, full, bb, cc)
    return build


def identity_coeff():
    def build(grid):
        return constant_coeff(np.eye(grid.dim))(grid)
    return build


def coeff_gilbarg_serrin(n, alpha):
    """Builder for A(x) = I + (-1 + (n-1)/(1-alpha)) x x^T / |x|^2.

    A(0) = I (the singularity is removable for all residual tests, which
    stay away from the origin; ball grids never place a node there).
    """
    if alpha >= 1:
        raise ValueError("alpha must be < 1")
    beta = -1.0 + (n - 1) / (1.0 - alpha)

    def build(grid):
        if grid.dim != n:
            raise ValueError("grid dimension mismatch")
        x = grid.points()
        r2 = np.sum(x ** 2, axis=-1)
        safe = np.where(r2 > 0, r2, 1.0)
        outer = x[..., :, None] * x[..., None, :] / safe[..., None, None]
        A = np.broadcast_to(np.eye(n), grid.shape + (n, n)) + beta * outer
        A = np.where((r2 > 0)[..., None, None], A,
                     np.broadcast_to(np.eye(n), grid.shape + (n, n)))
        return CoeffField(grid, np.ascontiguousarray(A))
    return build


def _shift(arr, offset, fill=0):
    """arr sampled at p + offset: out[p] = arr[p + offset], edges filled."""
    out = np.full_like(arr, fill)
    src = []
    dst = []
    for o in offset:
        if o > 0:
            src.append(slice(o, None))
            dst.append(slice(None, -o))
        elif o < 0:
            src.append(slice(None, o))
            dst.append(slice(-o, None))
        else:
            src.append(slice(None))
            dst.append(slice(None))
    out[tuple(dst)] = arr[tuple(src)]
    return out


def apply_L(u, coeff):
    """Discrete Lu on interior nodes (zero elsewhere).

    Central second differences on the diagonal, symmetric four-point cross
    differences for the mixed terms, central first differences for b.
    Exact (to rounding) on polynomials of degree <= 2.
    """
    grid = u.grid
    n = grid.dim
    h = grid.h
    v = u.values
    out = np.zeros(grid.shape)
    for i in range(n):
        e = tuple(1 if a == i else 0 for a in range(n))
        d2 = (_shift(v, e) - 2 * v + _shift(v, tuple(-x for x in e))) / h ** 2
        out += coeff.A[..., i, i] * d2
        if coeff.b is not None:
            d1 = (_shift(v, e) - _shift(v, tuple(-x for x in e))) / (2 * h)
            out += coeff.b[..., i] * d1
        for j in range(i + 1, n):
            ej = tuple(1 if a == j else 0 for a in range(n))
            pp = tuple(a + b for a, b in zip(e, ej))
            pm = tuple(a - b for a, b in zip(e, ej))
            cross = (_shift(v, pp) + _shift(v, tuple(-x for x in pp))
                     - _shift(v, pm) - _shift(v, tuple(-x for x in pm)))
            out += 2 * coeff.A[..., i, j] * cross / (4 * h ** 2)
    if coeff.c is not None:
        out += coeff.c * v
    out = np.where(grid.interior, out, 0.0)
    return ScalarField(grid, out)


def _stencil_offsets(grid, coeff):
    """(offset, weight-array) pairs for the interior stencil, plus the
    center weight."""
    n = grid.dim
    h = grid.h
    offsets = []
    center = -2.0 * np.einsum("...ii->...", coeff.A) / h ** 2
    if coeff.c is not None:
        center = center + coeff.c
    for i in range(n):
        e = tuple(1 if a == i else 0 for a in range(n))
        w = coeff.A[..., i, i] / h ** 2
        b = coeff.b[..., i] / (2 * h) if coeff.b is not None else 0.0
        offsets.append((e, w + b))
        offsets.append((tuple(-x for x in e), w - b))
        for j in range(i + 1, n):
            ej = tuple(1 if a == j else 0 for a in range(n))
            w = coeff.A[..., i, j] / (2 * h ** 2)
            pp = tuple(a + b for a, b in zip(e, ej))
            pm = tuple(a - b for a, b in zip(e, ej))
            offsets.append((pp, w))
            offsets.append((tuple(-x for x in pp), w))
            offsets.append((pm, -w))
            offsets.append((tuple(-x for x in pm), -w))
    return center, offsets


def solve_dirichlet(coeff, f, g, rtol=1e-10, direct_threshold=20_000):
    """Solve Lu = -f in the interior with u = g on boundary nodes.

    Direct sparse factorization for small systems, BiCGSTAB with diagonal
    preconditioning otherwise.  Emits MonotonicityWarning when an
    off-diagonal stencil weight has the sign that breaks the discrete
    maximum principle.
    """
    grid = f.grid
    interior = grid.interior
    nuk = int(np.count_nonzero(interior))
    index = -np.ones(grid.shape, dtype=np.int64)
    index[interior] = np.arange(nuk)

    center, offsets = _stencil_offsets(grid, coeff)
    rows, cols, vals = [], [], []
    rhs = -f.values[interior].astype(float)
    rows.append(np.arange(nuk))
    cols.append(np.arange(nuk))
    vals.append(np.broadcast_to(center, grid.shape)[interior])

    bad_weight = False
    for off, w in offsets:
        w_full = np.broadcast_to(w, grid.shape)
        nbr_idx = _shift(index, off, fill=-1)
        nbr_bdy = _shift(grid.boundary.astype(np.int8), off).astype(bool)
        wi = w_full[interior]
        if np.any(wi < -1e-12):
            bad_weight = True
        into = nbr_idx[interior]
        onb = nbr_bdy[interior]
        inner = into >= 0
        rows.append(np.arange(nuk)[inner])
        cols.append(into[inner])
        vals.append(wi[inner])
        if np.any(onb):
            gn = _shift(g.values, off)[interior]
            rhs[onb] -= (wi * gn)[onb]
    if bad_weight:
        warnings.warn("off-diagonal stencil weight with wrong sign; the "
                      "discrete maximum principle may fail",
                      MonotonicityWarning, stacklevel=2)

    A = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nuk, nuk))
    if nuk < direct_threshold:
        sol = spsolve(A.tocsc(), rhs)
    else:
        d = A.diagonal()
        if np.any(d == 0):
            raise NumericError("zero diagonal in system matrix")
        M = sparse.diags(1.0 / d)
        maxiter = int(50 * np.sqrt(nuk)) + 100
        sol, info = bicgstab(A, rhs, rtol=rtol, atol=0.0, M=M,
                             maxiter=maxiter)
        if info != 0:
            res = float(np.linalg.norm(A @ sol - rhs)
                        / max(np.linalg.norm(rhs), 1e-300))
            raise NumericError(
                f"iterative solver stagnated (info={info}, rel res={res:.2e})",
                best=sol)
    res = float(np.linalg.norm(A @ sol - rhs)
                / max(np.linalg.norm(rhs), 1e-300))
    if res > 1e-6:
        raise NumericError(f"solve residual too large: {res:.2e}", best=sol)
    out = np.where(grid.boundary, g.values, 0.0)
    out[interior] = sol
    return ScalarField(grid, out)


def lq_norm(f, q, mask=None):
    """(sum |v|^q h^n)^{1/q} over mask (default interior), midpoint rule."""
    if q < 1:
        raise ValueError("need q >= 1")
    grid = f.grid
    mask = grid.interior if mask is None else mask
    if not np.any(mask):
        return 0.0
    s = np.sum(np.abs(f.values[mask]) ** q) * grid.volume_weight()
    return float(s ** (1.0 / q))


def sup_inf_osc(f, mask=None):
    """Exact extrema over mask: (sup, inf, osc)."""
    mask = f.grid.interior if mask is None else mask
    if not np.any(mask):
        raise ValueError("empty mask")
    v = f.values[mask]
    sup, inf = float(v.max()), float(v.min())
    return sup, inf, sup - inf


def hessian_field(u):
    """Central-difference Hessian per node and its validity mask (interior
    nodes one layer in).  Exactly symmetric by construction."""
    grid = u.grid
    n = grid.dim
    h = grid.h
    v = u.values
    H = np.zeros(grid.shape + (n, n))
    for i in range(n):
        e = tuple(1 if a == i else 0 for a in range(n))
        H[..., i, i] = (_shift(v, e) - 2 * v
                        + _shift(v, tuple(-x for x in e))) / h ** 2
        for j in range(i + 1, n):
            ej = tuple(1 if a == j else 0 for a in range(n))
            pp = tuple(a + b for a, b in zip(e, ej))
            pm = tuple(a - b for a, b in zip(e, ej))
            hij = (_shift(v, pp) + _shift(v, tuple(-x for x in pp))
                   - _shift(v, pm)
                   - _shift(v, tuple(-x for x in pm))) / (4 * h ** 2)
            H[..., i, j] = hij
            H[..., j, i] = hij
    mask = binary_erosion(grid.interior, structure=np.ones((3,) * n,
                                                           dtype=bool))
    return H, mask


def interior_eroded(grid, layers):
    """Interior mask eroded by the given number of cube layers."""
    m = grid.interior
    st = np.ones((3,) * grid.dim, dtype=bool)
    for _ in range(layers):
        m = binary_erosion(m, structure=st)
    return m


def w22_seminorm(u, mask):
    """L^2 norm of the Frobenius norm of the discrete Hessian over mask."""
    grid = u.grid
    if not np.any(mask):
        raise ValueError("empty mask")
    allowed = interior_eroded(grid, 2)
    if np.any(mask & ~allowed):
        raise ValueError("mask must stay two layers inside the boundary")
    H, _ = hessian_field(u)
    frob2 = np.sum(H[mask] ** 2, axis=(-1, -2))
    return float(np.sqrt(np.sum(frob2) * grid.volume_weight()))
