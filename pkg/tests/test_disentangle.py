"""Angular-loss values against hand calculations, analytic gradients
against finite differences, the gradient-norm laws, and the equiangular
construction."""

import math

import numpy as np
import pytest

from dsfnet.disentangle import (
    DegenerateCentroidError,
    DRConfig,
    InfeasibleDimensionError,
    centroids,
    cnc_loss,
    cnc_loss_cos,
    descend_ncr,
    dr_loss,
    equiangular_frame,
    measure_cnc_gradient_norms,
    measure_mma_gradient_norms,
    measure_ncr_gradient_norms,
    mma_loss,
    ncr_loss,
    orth_loss,
    repulsion_target,
)
from dsfnet.tensorcore import grad_check, safe_angle


def unit_rows(*vecs):
    """Single-row factor matrices from direction vectors."""
    return [np.asarray(v, dtype=float)[None, :] for v in vecs]


def planar(angle, norm=1.0, dim=2):
    v = np.zeros(dim)
    v[0] = norm * math.cos(angle)
    v[1] = norm * math.sin(angle)
    return v


class TestCentroids:
    def test_equal_rows_give_row_direction(self):
        v = np.array([3.0, 4.0])
        c = centroids([np.tile(v, (5, 1)), np.tile([1.0, 0.0], (5, 1))])
        np.testing.assert_allclose(c.centroids[0], v / 5.0 / np.linalg.norm(v / 5.0), atol=1e-12)
        np.testing.assert_allclose(c.centroids[0], [0.6, 0.8], atol=1e-12)

    def test_two_orthogonal_rows(self):
        c = centroids([np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[1.0, 1.0], [1.0, 1.0]])])
        np.testing.assert_allclose(c.centroids[0], [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-12)

    def test_angles_match_pairwise_oracle(self):
        rng = np.random.default_rng(11)
        Ws = [rng.standard_normal((4, 6)) for _ in range(3)]
        c = centroids(Ws)
        for i in range(3):
            for j in range(3):
                if i == j:
                    assert c.angles[i, j] == 0.0
                else:
                    expect = safe_angle(Ws[i].sum(axis=0), Ws[j].sum(axis=0))
                    assert c.angles[i, j] == pytest.approx(expect, abs=1e-12)

    def test_unit_norms_and_symmetry(self):
        rng = np.random.default_rng(12)
        c = centroids([rng.standard_normal((5, 4)) for _ in range(4)])
        np.testing.assert_allclose(np.linalg.norm(c.centroids, axis=1), 1.0, atol=1e-10)
        np.testing.assert_allclose(c.angles, c.angles.T, atol=0)

    def test_degenerate_row_sum(self):
        W = np.array([[1.0, 0.0], [-1.0, 0.0]])  # rows cancel
        with pytest.raises(DegenerateCentroidError):
            centroids([W, np.eye(2)])


def fd_check(loss_fn, W_list, tol=1e-5):
    """Finite-difference check of a stacked-loss gradient."""
    stack = np.stack(W_list)
    _, grad = loss_fn(stack)

    def f(p):
        return loss_fn(p.reshape(stack.shape))[0]

    return grad_check(f, stack.ravel(), np.asarray(grad).ravel(), h=1e-5) < tol


def ncr_on_stack(stack):
    c = centroids(list(stack))
    v, g = ncr_loss(c)
    return v, np.broadcast_to(g[:, None, :], stack.shape)


class TestNcr:
    def test_antipodal_pair_is_fixed_point(self):
        v, _ = ncr_loss(centroids(unit_rows([1.0, 0.0], [-1.0, 0.0])))
        # the clamp keeps the angle just inside pi
        assert v == pytest.approx(0.0, abs=1e-6)

    def test_three_at_120_degrees(self):
        Ws = unit_rows(planar(0.0), planar(2 * math.pi / 3), planar(4 * math.pi / 3))
        v, _ = ncr_loss(centroids(Ws))
        assert v == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal_pair_value(self):
        v, _ = ncr_loss(centroids(unit_rows([1.0, 0.0], [0.0, 1.0])))
        assert v == pytest.approx((math.pi / 2 - math.pi) ** 2, abs=1e-6)
        assert v == pytest.approx(math.pi ** 2 / 4, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            Ws = [rng.standard_normal((3, 4)) for _ in range(3)]
            assert fd_check(ncr_on_stack, Ws)

    def test_fixed_point_iff_all_angles_at_target(self):
        # value 0 implies every pairwise angle equals the target
        frame = equiangular_frame(4, 5).frame
        Ws = [frame[:, i][None, :] for i in range(4)]
        c = centroids(Ws)
        v, _ = ncr_loss(c)
        assert v < 1e-12
        target = repulsion_target(4)
        off = ~np.eye(4, dtype=bool)
        assert np.max(np.abs(c.angles[off] - target)) < 1e-6


class TestMma:
    def test_orthogonal_pair(self):
        v, _ = mma_loss(centroids(unit_rows([1.0, 0.0], [0.0, 1.0])))
        assert v == pytest.approx(-math.pi / 2, abs=1e-12)

    def test_equiangular_three(self):
        Ws = unit_rows(planar(0.0), planar(2 * math.pi / 3), planar(4 * math.pi / 3))
        v, _ = mma_loss(centroids(Ws))
        assert v == pytest.approx(-2 * math.pi / 3, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            Ws = [rng.standard_normal((2, 5)) for _ in range(3)]

            def loss(stack):
                c = centroids(list(stack))
                v, g = mma_loss(c)
                return v, np.broadcast_to(g[:, None, :], stack.shape)

            assert fd_check(loss, Ws)

    def test_angle_independent_gradient_norm(self):
        norms = measure_mma_gradient_norms([0.5, 1.5, 2.5], norm=2.0)
        np.testing.assert_allclose(norms, 1.0 / 2.0, rtol=1e-10)
        assert norms.std() / norms.mean() < 0.01


class TestOrth:
    def test_orthonormal_centroids(self):
        v, _ = orth_loss(centroids(unit_rows([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])))
        assert v == pytest.approx(0.0, abs=1e-12)

    def test_antipodal_pair_value_two(self):
        v, _ = orth_loss(centroids(unit_rows([1.0, 0.0], [-1.0, 0.0])))
        assert v == pytest.approx(2.0, abs=1e-12)

    def test_matches_naive_gram_oracle(self):
        rng = np.random.default_rng(15)
        Ws = [rng.standard_normal((3, 5)) for _ in range(4)]
        c = centroids(Ws)
        v, _ = orth_loss(c)
        naive = 0.0
        for i in range(4):
            for j in range(4):
                gij = float(c.centroids[i] @ c.centroids[j])
                naive += (gij - (1.0 if i == j else 0.0)) ** 2
        assert v == pytest.approx(naive, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        Ws = [rng.standard_normal((2, 4)) for _ in range(3)]

        def loss(stack):
            c = centroids(list(stack))
            v, g = orth_loss(c)
            return v, np.broadcast_to(g[:, None, :], stack.shape)

        assert fd_check(loss, Ws)


DELTA = DRConfig(n_factors=2, kappa=1.75).delta_theta  # arccos(-1)/1.75


class TestCnc:
    def test_inactive_hinge_is_zero(self):
        # anchors on their centroids, foreign centroids beyond the margin
        Ws = unit_rows([1.0, 0.0], [-1.0, 0.0])
        v, grads = cnc_loss(centroids(Ws), Ws, delta_theta=1.0)
        assert v == 0.0
        assert all(np.all(g == 0.0) for g in grads)

    @pytest.mark.parametrize("phi", [DELTA / 2, 2 * DELTA])
    def test_single_row_pair_hand_value(self, phi):
        Ws = unit_rows([1.0, 0.0], planar(phi))
        v, _ = cnc_loss(centroids(Ws), Ws, delta_theta=DELTA)
        expected = max(0.0, DELTA - phi)
        assert v == pytest.approx(expected, abs=5e-4)  # own angle clamps near 0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        found = 0
        for _ in range(10):
            Ws = [rng.standard_normal((3, 4)) for _ in range(3)]

            def loss(stack, d=1.0):
                c = centroids(list(stack))
                v, g = cnc_loss(c, list(stack), d)
                return v, np.stack(g)

            if loss(np.stack(Ws))[0] > 1e-3:  # only probe active hinges
                assert fd_check(loss, Ws)
                found += 1
        assert found >= 3

    def test_angle_form_norm_constant_cosine_form_sine(self):
        thetas = np.array([0.01, 0.1, 1.0])
        ang, cos = measure_cnc_gradient_norms(thetas, norm=2.0, delta_theta=1.2)
        np.testing.assert_allclose(ang, 1.0 / 2.0, atol=1e-6)
        np.testing.assert_allclose(cos, np.sin(thetas) / 2.0, rtol=0.02)

    def test_cos_form_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(18)
        found = 0
        for _ in range(10):
            Ws = [rng.standard_normal((3, 4)) for _ in range(3)]

            def loss(stack, d=1.0):
                c = centroids(list(stack))
                v, g = cnc_loss_cos(c, list(stack), d)
                return v, np.stack(g)

            if loss(np.stack(Ws))[0] > 1e-3:
                assert fd_check(loss, Ws)
                found += 1
        assert found >= 3

    def test_cos_form_inactive_hinge_zero(self):
        Ws = unit_rows([1.0, 0.0], [-1.0, 0.0])
        v, _ = cnc_loss_cos(centroids(Ws), Ws, delta_theta=1.0)
        assert v == 0.0


class TestNcrGradientLaw:
    def test_linear_in_deviation_with_r_squared(self):
        target = repulsion_target(2)
        sweep = target + np.linspace(-1.2, 1.2, 13)
        sweep = sweep[np.abs(sweep - target) > 1e-12]
        devs, norms = measure_ncr_gradient_norms(sweep, norm=2.0)
        slope = float(np.sum(devs * norms) / np.sum(devs * devs))
        resid = norms - slope * devs
        r2 = 1.0 - float(np.sum(resid ** 2) / np.sum((norms - norms.mean()) ** 2))
        assert r2 > 0.999
        # constant = 2/norm for the symmetric pair
        assert slope == pytest.approx(2.0 / 2.0, rel=1e-6)

    def test_norm_vanishes_at_target(self):
        target = repulsion_target(2)
        _, norms = measure_ncr_gradient_norms([target], norm=2.0)
        assert norms[0] < 1e-6


class TestDrLoss:
    def test_fixed_point_with_inactive_hinges_is_zero(self):
        frame = equiangular_frame(3, 4).frame
        stack = np.stack([frame[:, i][None, :] for i in range(3)])
        cfg = DRConfig(n_factors=3, lam=0.01, kappa=1.75, variant="dr")
        res = dr_loss([stack], cfg)
        assert res.total == pytest.approx(0.0, abs=1e-6)

    def test_single_layer_equals_component_sum(self):
        rng = np.random.default_rng(19)
        stack = rng.standard_normal((3, 4, 5))
        cfg = DRConfig(n_factors=3, variant="dr")
        res = dr_loss([stack], cfg)
        c = centroids(list(stack))
        expect = ncr_loss(c)[0] + cnc_loss(c, list(stack), cfg.delta_theta)[0]
        assert res.total == pytest.approx(expect, abs=1e-12)

    def test_three_layers_equal_manual_sum(self):
        rng = np.random.default_rng(20)
        stacks = [rng.standard_normal((3, m, d)) for m, d in [(4, 6), (3, 4), (1, 3)]]
        cfg = DRConfig(n_factors=3, variant="dr")
        res = dr_loss(stacks, cfg)
        manual = sum(dr_loss([s], cfg).total for s in stacks)
        assert res.total == pytest.approx(manual, abs=1e-12)

    @pytest.mark.parametrize("variant", ["dr", "mma_cnc", "ncr", "ncr_cnccos", "orth", "none"])
    def test_variants_run_and_report_components(self, variant):
        rng = np.random.default_rng(21)
        stacks = [rng.standard_normal((3, 4, 5))]
        res = dr_loss(stacks, DRConfig(n_factors=3, variant=variant))
        assert np.isfinite(res.total)
        assert np.isfinite(res.ncr) and np.isfinite(res.cnc)
        if variant == "none":
            assert res.total == 0.0
            assert np.all(res.layer_grads[0] == 0.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DRConfig(n_factors=3, lam=-1.0)
        with pytest.raises(ValueError):
            DRConfig(n_factors=3, kappa=0.5)
        with pytest.raises(ValueError):
            DRConfig(n_factors=3, variant="bogus")
        with pytest.raises(ValueError):
            DRConfig(n_factors=1, variant="dr")
        cfg = DRConfig(n_factors=7, kappa=1.75)
        assert cfg.delta_theta == pytest.approx(math.acos(1.0 / (1 - 7)) / 1.75, abs=1e-12)
        assert 0.0 < cfg.delta_theta < repulsion_target(7)


class TestEquiangularFrame:
    def test_two_vectors_on_a_line(self):
        eg = equiangular_frame(2, 1)
        assert eg.residual < 1e-10
        vals = sorted(eg.frame[0])
        assert vals == pytest.approx([-1.0, 1.0], abs=1e-12)

    def test_three_in_plane_at_120(self):
        eg = equiangular_frame(3, 2)
        assert eg.residual < 1e-10
        gram = eg.frame.T @ eg.frame
        np.testing.assert_allclose(gram, eg.gram_target, atol=1e-10)
        for i in range(3):
            for j in range(i + 1, 3):
                ang = safe_angle(eg.frame[:, i], eg.frame[:, j])
                assert ang == pytest.approx(2 * math.pi / 3, abs=1e-6)

    def test_tetrahedral_four(self):
        eg = equiangular_frame(4, 3)
        assert eg.residual < 1e-10
        np.testing.assert_allclose(eg.frame.T @ eg.frame, eg.gram_target, atol=1e-10)
        assert eg.gram_target[0, 1] == pytest.approx(-1.0 / 3.0, abs=1e-15)

    def test_infeasible_dimension(self):
        with pytest.raises(InfeasibleDimensionError):
            equiangular_frame(4, 2)


def test_descent_reaches_equiangular_configuration():
    # smoke version of the constructive convergence check
    for n in (2, 4):
        dev = descend_ncr(n, 8, seed=0, steps=3000)
        assert dev < 1e-2
