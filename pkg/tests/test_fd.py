import warnings

import numpy as np
import pytest

from conelab import fd
from conelab.symcone import NumericError


def unit_ball(n):
    return fd.Domain.ball(np.zeros(n), 1.0)


def unit_box(n):
    return fd.Domain.box(np.zeros(n), np.ones(n))


class TestDomain:
    def test_ball_diam(self):
        assert unit_ball(3).diam == 2.0

    def test_box_diam(self):
        d = fd.Domain.box([0, 0], [3, 4])
        assert d.diam == 5.0

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            fd.Domain.ball([0, 0], -1.0)

    def test_bad_box(self):
        with pytest.raises(ValueError):
            fd.Domain.box([0, 1], [1, 0])

    def test_dict_roundtrip(self):
        for d in (unit_ball(3), fd.Domain.box([-1, 0], [1, 2])):
            d2 = fd.Domain.from_dict(d.to_dict())
            assert d2.kind == d.kind and d2.diam == d.diam


class TestGrid:
    def test_unit_box_counts(self):
        g = fd.build_grid(unit_box(2), 0.25)
        assert g.shape == (5, 5)
        assert np.count_nonzero(g.interior) == 9

    def test_ball_interior_rule(self):
        g = fd.build_grid(unit_ball(2), 0.2)
        pts = g.points()
        r = np.linalg.norm(pts, axis=-1)
        assert np.array_equal(g.interior, r < 1.0 - 0.1)

    def test_ball_nodes_avoid_center(self):
        g = fd.build_grid(unit_ball(3), 0.25)
        r = np.linalg.norm(g.points(), axis=-1)
        assert r.min() > 0.1

    def test_boundary_is_active_minus_interior(self):
        g = fd.build_grid(unit_ball(2), 0.1)
        assert np.array_equal(g.boundary, g.active & ~g.interior)
        assert not np.any(g.boundary & g.interior)

    def test_nonpositive_h(self):
        with pytest.raises(ValueError):
            fd.build_grid(unit_box(2), 0.0)

    def test_too_coarse(self):
        with pytest.raises(ValueError):
            fd.build_grid(unit_box(2), 0.5)

    def test_boundary_points_on_sphere(self):
        g = fd.build_grid(unit_ball(2), 0.1)
        bp = g.boundary_points()
        assert np.allclose(np.linalg.norm(bp, axis=-1), 1.0)


class TestCoeff:
    def test_gs_entries(self):
        # at x = e1 with alpha = 0 the rank-one update doubles A_11
        g = fd.build_grid(fd.Domain.box([0.5, -0.5, -0.5],
                                        [1.5, 0.5, 0.5]), 0.25)
        coeff = fd.coeff_gilbarg_serrin(3, 0.0)(g)
        i = tuple(int(np.argmin(np.abs(g.axes[d] - (1.0 if d == 0 else 0.0))))
                  for d in range(3))
        assert np.allclose(coeff.A[i], np.diag([2.0, 1.0, 1.0]))

    def test_gs_trace(self):
        n, alpha = 3, 0.25
        g = fd.build_grid(unit_ball(n), 0.25)
        coeff = fd.coeff_gilbarg_serrin(n, alpha)(g)
        tr = np.trace(coeff.A, axis1=-2, axis2=-1)
        assert np.allclose(tr, n - 1 + (n - 1) / (1 - alpha))

    def test_gs_alpha_rejected(self):
        with pytest.raises(ValueError):
            fd.coeff_gilbarg_serrin(3, 1.0)

    def test_spectra_match_gs_formula(self):
        from conelab.symcone import gs_spectrum
        n, alpha = 3, 0.25
        g = fd.build_grid(unit_ball(n), 0.25)
        coeff = fd.coeff_gilbarg_serrin(n, alpha)(g)
        lam = coeff.spectra()
        assert np.allclose(lam, np.sort(gs_spectrum(n, alpha))[::-1])


class TestApplyL:
    def test_quadratic_exact(self):
        n = 3
        g = fd.build_grid(unit_ball(n), 0.2)
        u = fd.field_from_function(g, lambda x: 1 - np.sum(x ** 2, -1))
        out = fd.apply_L(u, fd.identity_coeff()(g))
        assert np.allclose(out.values[g.interior], -2 * n, atol=1e-11)

    def test_affine_drift_exact(self):
        g = fd.build_grid(unit_box(2), 0.125)
        u = fd.field_from_function(g, lambda x: 2 * x[..., 0] - x[..., 1])
        coeff = fd.constant_coeff(np.eye(2), b=[1.0, 3.0])(g)
        out = fd.apply_L(u, coeff)
        # Laplacian of an affine is 0; b . Du = 2 - 3
        assert np.allclose(out.values[g.interior], -1.0, atol=1e-12)

    def test_gs_residual_order(self):
        # exact solution residual decays with observed order ~2 away
        # from the coefficient singularity
        n, alpha = 3, 0.5
        errs = []
        for h in (1 / 16, 1 / 32, 1 / 64):
            g = fd.build_grid(unit_ball(n), h)
            u = fd.field_from_function(
                g, lambda x: np.sum(x ** 2, -1) ** (alpha / 2))
            coeff = fd.coeff_gilbarg_serrin(n, alpha)(g)
            out = fd.apply_L(u, coeff)
            r = np.linalg.norm(g.points(), axis=-1)
            sel = g.interior & (r >= 0.2) & (r < 1 - 2 * h)
            errs.append(np.max(np.abs(out.values[sel])))
        orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all((orders > 1.7) & (orders < 2.3))


class TestSolveDirichlet:
    def test_poisson_ball(self):
        n, h = 3, 0.05
        g = fd.build_grid(unit_ball(n), h)
        f = fd.field_from_function(g, lambda x: np.full(x.shape[:-1], 2 * n))
        bc = fd.boundary_field(g, lambda x: np.zeros(x.shape[:-1]))
        u = fd.solve_dirichlet(fd.identity_coeff()(g), f, bc)
        exact = 1 - np.sum(g.points() ** 2, -1)
        err = np.max(np.abs(u.values[g.interior] - exact[g.interior]))
        assert err < 3 * h  # cut-cell boundary limits accuracy to O(h)

    def test_zero_data_zero_solution(self):
        g = fd.build_grid(unit_ball(2), 0.1)
        z = fd.ScalarField(g, np.zeros(g.shape))
        bc = fd.boundary_field(g, lambda x: np.zeros(x.shape[:-1]))
        u = fd.solve_dirichlet(fd.identity_coeff()(g), z, bc)
        assert np.allclose(u.values, 0.0, atol=1e-12)

    def test_gs_boundary_data_reproduces_power(self):
        # on a box away from the coefficient singularity the power
        # solution is smooth and reproduced accurately
        n, alpha = 3, 0.5
        h = 1 / 32
        g = fd.build_grid(fd.Domain.box([0.25] * n, [1.0] * n), h)
        z = fd.ScalarField(g, np.zeros(g.shape))
        bc = fd.boundary_field(
            g, lambda x: np.sum(x ** 2, -1) ** (alpha / 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", fd.MonotonicityWarning)
            u = fd.solve_dirichlet(fd.coeff_gilbarg_serrin(n, alpha)(g),
                                   z, bc)
        r = np.linalg.norm(g.points(), axis=-1)
        err = np.max(np.abs(u.values[g.interior] - r[g.interior] ** alpha))
        assert err < 1e-3

    def test_discrete_comparison(self):
        # identity coefficients give a monotone stencil: f >= 0, g = 0
        # implies u >= 0
        g = fd.build_grid(unit_ball(2), 0.05)
        rng = np.random.default_rng(7)
        f = fd.ScalarField(g, np.abs(rng.normal(size=g.shape)))
        bc = fd.boundary_field(g, lambda x: np.zeros(x.shape[:-1]))
        u = fd.solve_dirichlet(fd.identity_coeff()(g), f, bc)
        assert np.min(u.values[g.interior]) >= -1e-12

    def test_monotonicity_warning_on_anisotropy(self):
        g = fd.build_grid(unit_ball(2), 0.1)
        z = fd.ScalarField(g, np.zeros(g.shape))
        bc = fd.boundary_field(g, lambda x: np.zeros(x.shape[:-1]))
        A = np.array([[1.0, 0.9], [0.9, 1.0]])
        with pytest.warns(fd.MonotonicityWarning):
            fd.solve_dirichlet(fd.constant_coeff(A)(g), z, bc)

    def test_solve_convergence_order(self):
        # solution error order for the smooth Poisson bubble is capped by
        # the O(h) cut-cell boundary; require clear decay under h -> h/2
        errs = []
        for h in (0.1, 0.05):
            g = fd.build_grid(unit_ball(2), h)
            f = fd.field_from_function(g,
                                       lambda x: np.full(x.shape[:-1], 4.0))
            bc = fd.boundary_field(g, lambda x: np.zeros(x.shape[:-1]))
            u = fd.solve_dirichlet(fd.identity_coeff()(g), f, bc)
            exact = 1 - np.sum(g.points() ** 2, -1)
            errs.append(np.max(np.abs(u.values - exact)[g.interior]))
        assert errs[1] < 0.75 * errs[0]


class TestNorms:
    def test_constant_on_box(self):
        g = fd.build_grid(unit_box(2), 1 / 64)
        one = fd.ScalarField(g, np.ones(g.shape))
        for q in (1.0, 2.0, 3.5):
            assert abs(fd.lq_norm(one, q) - 1.0) < 0.05

    def test_ball_integral(self):
        g = fd.build_grid(unit_ball(3), 1 / 32)
        f = fd.ScalarField(g, np.full(g.shape, 6.0))
        target = 6.0 * (4 * np.pi / 3) ** (1 / 3)
        assert abs(fd.lq_norm(f, 3.0) / target - 1) < 0.02

    def test_empty_mask(self):
        g = fd.build_grid(unit_box(2), 0.125)
        f = fd.ScalarField(g, np.ones(g.shape))
        assert fd.lq_norm(f, 2.0, np.zeros(g.shape, dtype=bool)) == 0.0

    def test_mask_monotone(self):
        g = fd.build_grid(unit_ball(2), 0.05)
        rng = np.random.default_rng(3)
        f = fd.ScalarField(g, rng.normal(size=g.shape))
        small = fd.interior_eroded(g, 2)
        assert fd.lq_norm(f, 2.0, small) <= fd.lq_norm(f, 2.0) + 1e-15

    def test_q_below_one(self):
        g = fd.build_grid(unit_box(2), 0.125)
        f = fd.ScalarField(g, np.ones(g.shape))
        with pytest.raises(ValueError):
            fd.lq_norm(f, 0.5)

    def test_sup_inf_osc_bubble(self):
        g = fd.build_grid(unit_ball(2), 0.05)
        u = fd.field_from_function(g, lambda x: 1 - np.sum(x ** 2, -1))
        sup, inf, osc = fd.sup_inf_osc(u)
        assert abs(sup - 1) < 0.01 and abs(inf) < 0.1 and abs(osc - 1) < 0.1

    def test_sup_inf_constant(self):
        g = fd.build_grid(unit_box(2), 0.125)
        u = fd.ScalarField(g, np.full(g.shape, 2.5))
        assert fd.sup_inf_osc(u) == (2.5, 2.5, 0.0)

    def test_empty_mask_extrema(self):
        g = fd.build_grid(unit_box(2), 0.125)
        u = fd.ScalarField(g, np.ones(g.shape))
        with pytest.raises(ValueError):
            fd.sup_inf_osc(u, np.zeros(g.shape, dtype=bool))


class TestHessian:
    def test_quadratic_exact(self):
        g = fd.build_grid(unit_box(2), 0.125)
        M = np.array([[2.0, 1.0], [1.0, -3.0]])
        u = fd.field_from_function(
            g, lambda x: 0.5 * np.einsum("...i,ij,...j->...", x, M, x))
        H, mask = fd.hessian_field(u)
        assert np.allclose(H[mask], M, atol=1e-10)

    def test_bubble_hessian(self):
        g = fd.build_grid(unit_ball(2), 0.1)
        u = fd.field_from_function(g, lambda x: 1 - np.sum(x ** 2, -1))
        H, mask = fd.hessian_field(u)
        assert np.allclose(H[mask], -2 * np.eye(2), atol=1e-10)

    def test_power_eigenvalues(self):
        n, alpha, h = 3, 0.5, 1 / 64
        g = fd.build_grid(unit_ball(n), h)
        u = fd.field_from_function(
            g, lambda x: np.sum(x ** 2, -1) ** (alpha / 2))
        H, mask = fd.hessian_field(u)
        r = np.linalg.norm(g.points(), axis=-1)
        sel = mask & (r > 0.5) & (r < 0.9)
        lam = np.sort(np.linalg.eigvalsh(H[sel]), axis=1)
        rr = r[sel]
        exact = np.sort(np.stack(
            [alpha * (alpha - 1) * rr ** (alpha - 2)]
            + [alpha * rr ** (alpha - 2)] * (n - 1), axis=1), axis=1)
        assert np.max(np.abs(lam - exact)) < 50 * h ** 2


class TestW22:
    def test_half_square_norm(self):
        g = fd.build_grid(unit_box(3), 0.125)
        u = fd.field_from_function(g, lambda x: 0.5 * np.sum(x ** 2, -1))
        mask = fd.interior_eroded(g, 2)
        vol = np.count_nonzero(mask) * g.volume_weight()
        assert np.isclose(fd.w22_seminorm(u, mask),
                          np.sqrt(3) * np.sqrt(vol), atol=1e-10)

    def test_affine_zero(self):
        g = fd.build_grid(unit_box(2), 0.125)
        u = fd.field_from_function(g, lambda x: 1 + x[..., 0] - x[..., 1])
        assert fd.w22_seminorm(u, fd.interior_eroded(g, 2)) < 1e-12

    def test_bubble_norm(self):
        g = fd.build_grid(unit_box(2), 1 / 16)
        u = fd.field_from_function(g, lambda x: 1 - np.sum(x ** 2, -1))
        mask = fd.interior_eroded(g, 2)
        vol = np.count_nonzero(mask) * g.volume_weight()
        assert np.isclose(fd.w22_seminorm(u, mask),
                          2 * np.sqrt(2) * np.sqrt(vol), atol=1e-10)

    def test_mask_too_wide_rejected(self):
        g = fd.build_grid(unit_box(2), 0.125)
        u = fd.field_from_function(g, lambda x: np.sum(x ** 2, -1))
        with pytest.raises(ValueError):
            fd.w22_seminorm(u, g.interior)


class TestFieldValidation:
    def test_shape_mismatch(self):
        g = fd.build_grid(unit_box(2), 0.125)
        with pytest.raises(ValueError):
            fd.ScalarField(g, np.zeros((3, 3)))

    def test_nonfinite_on_active(self):
        g = fd.build_grid(unit_box(2), 0.125)
        vals = np.zeros(g.shape)
        vals[4, 4] = np.nan
        with pytest.raises(ValueError):
            fd.ScalarField(g, vals)

    def test_asymmetric_coeff_rejected(self):
        g = fd.build_grid(unit_box(2), 0.125)
        A = np.broadcast_to(np.array([[1.0, 0.5], [0.1, 1.0]]),
                            g.shape + (2, 2)).copy()
        with pytest.raises(ValueError):
            fd.CoeffField(g, A)
