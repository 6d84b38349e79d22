import math

import numpy as np
import pytest

from geen.density import (
    BandwidthSpec,
    DegenerateScaleError,
    KdeContext,
    context_bandwidths,
    gaussian_kernel,
    log_kde_full_joint,
    log_kde_marginal,
    log_kde_pair,
    silverman_bandwidth,
)

INV_SQRT_2PI = 0.3989422804014327  # 1/sqrt(2*pi)
K_AT_1 = 0.24197072451914337  # exp(-1/2)/sqrt(2*pi)
N500_RULE = 0.2885399811814427  # exp(-ln(500)/5)


def kernel_oracle(u):
    return math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def make_context(m=6, k=3, seed=0, w=1.0):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(m, k))
    lat = rng.normal(size=m)
    return KdeContext(pts, lat, context_bandwidths(pts, lat, w))


class TestGaussianKernel:
    def test_at_zero(self):
        assert gaussian_kernel(0.0) == pytest.approx(INV_SQRT_2PI, abs=1e-12)

    def test_at_one(self):
        assert gaussian_kernel(1.0) == pytest.approx(K_AT_1, abs=1e-12)

    @pytest.mark.parametrize("u", [0.3, 1.7, 4.0])
    def test_symmetry(self, u):
        assert gaussian_kernel(-u) == gaussian_kernel(u)

    def test_matches_oracle_on_grid(self):
        u = np.linspace(-6, 6, 101)
        expected = np.array([kernel_oracle(v) for v in u])
        np.testing.assert_allclose(gaussian_kernel(u), expected, rtol=1e-14)


class TestSilvermanBandwidth:
    def test_n_one(self):
        assert silverman_bandwidth(1.0, 1.0, 1) == 1.0

    def test_n_500(self):
        assert silverman_bandwidth(1.0, 1.0, 500) == pytest.approx(N500_RULE, abs=1e-10)

    def test_scale_window_cancellation(self):
        assert silverman_bandwidth(2.0, 0.5, 500) == pytest.approx(N500_RULE, abs=1e-10)

    def test_zero_sigma(self):
        with pytest.raises(DegenerateScaleError):
            silverman_bandwidth(0.0, 1.0, 10)


class TestBandwidthSpec:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            BandwidthSpec(h=np.array([1.0, 0.0]), h_star=1.0, w=1.0)
        with pytest.raises(ValueError):
            BandwidthSpec(h=np.array([1.0]), h_star=-1.0, w=1.0)

    def test_context_bandwidths_matches_rule(self):
        # columns normalized to sample std exactly 1
        rng = np.random.default_rng(3)
        m = 500
        pts = rng.normal(size=(m, 3))
        pts = (pts - pts.mean(axis=0)) / pts.std(axis=0, ddof=1)
        lat = rng.normal(size=m)
        lat = (lat - lat.mean()) / lat.std(ddof=1)
        bw = context_bandwidths(pts, lat, w=1.0)
        np.testing.assert_allclose(bw.h, N500_RULE, atol=1e-9)
        assert bw.h_star == pytest.approx(N500_RULE, abs=1e-9)

    def test_window_linearity(self):
        rng = np.random.default_rng(4)
        pts = rng.normal(size=(40, 3))
        lat = rng.normal(size=40)
        b1 = context_bandwidths(pts, lat, w=1.0)
        b2 = context_bandwidths(pts, lat, w=2.0)
        np.testing.assert_allclose(b2.h, 2.0 * b1.h, rtol=1e-14)
        assert b2.h_star == pytest.approx(2.0 * b1.h_star, rel=1e-14)

    def test_constant_latents_degenerate(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(10, 3))
        with pytest.raises(DegenerateScaleError, match="latents"):
            context_bandwidths(pts, np.ones(10), w=1.0)

    def test_constant_column_degenerate(self):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(10, 3))
        pts[:, 1] = 7.0
        with pytest.raises(DegenerateScaleError, match="x2"):
            context_bandwidths(pts, rng.normal(size=10), w=1.0)

    def test_bandwidth_n_override(self):
        rng = np.random.default_rng(7)
        pts = rng.normal(size=(50, 3))
        lat = rng.normal(size=50)
        b_m = context_bandwidths(pts, lat, w=1.0)
        b_n = context_bandwidths(pts, lat, w=1.0, n=500)
        np.testing.assert_allclose(b_n.h / b_m.h, (500 / 50) ** -0.2, rtol=1e-12)


class TestLogKdeMarginal:
    def test_single_center(self):
        assert log_kde_marginal(np.array([0.0]), 1.0, 0.0) == pytest.approx(
            math.log(INV_SQRT_2PI), abs=1e-12
        )

    def test_two_centers(self):
        # both kernels evaluate at distance 1
        val = log_kde_marginal(np.array([-1.0, 1.0]), 1.0, 0.0)
        assert val == pytest.approx(math.log(K_AT_1), abs=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(8)
        centers = rng.normal(size=9)
        h = 0.7
        for x in (-2.0, 0.3, 4.0):
            expected = math.log(
                sum(kernel_oracle((c - x) / h) / h for c in centers) / len(centers)
            )
            assert log_kde_marginal(centers, h, x) == pytest.approx(expected, abs=1e-12)

    def test_quadrature_normalization(self):
        rng = np.random.default_rng(9)
        centers = rng.uniform(-2, 2, size=50)
        grid = np.arange(-10.0, 10.0 + 1e-9, 0.01)
        dens = np.exp(log_kde_marginal(centers, 0.5, grid))
        integral = np.trapezoid(dens, grid)
        assert integral == pytest.approx(1.0, abs=1e-3)

    def test_vectorized_matches_scalar(self):
        centers = np.array([0.0, 1.0, -0.5])
        xs = np.array([-1.0, 0.0, 2.5])
        vec = log_kde_marginal(centers, 0.8, xs)
        scal = [log_kde_marginal(centers, 0.8, x) for x in xs]
        np.testing.assert_allclose(vec, scal, rtol=1e-15)


class TestLogKdePair:
    def test_single_center_product(self):
        val = log_kde_pair(np.array([0.0]), np.array([0.0]), 1.0, 1.0, 0.0, 0.0)
        assert val == pytest.approx(2.0 * math.log(INV_SQRT_2PI), abs=1e-12)

    def test_factorizes_when_latent_centers_equal(self):
        rng = np.random.default_rng(10)
        cx = rng.normal(size=7)
        cs = np.full(7, 0.4)
        hx, hs = 0.9, 0.6
        x, s = 0.2, -0.3
        got = log_kde_pair(cx, cs, hx, hs, x, s)
        expected = log_kde_marginal(cx, hx, x) + math.log(
            kernel_oracle((0.4 - s) / hs) / hs
        )
        assert got == pytest.approx(expected, abs=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        cx = rng.normal(size=4)
        cs = rng.normal(size=4)
        hx, hs = 0.5, 0.8
        x, s = 0.7, -1.2
        expected = math.log(
            sum(
                kernel_oracle((cxi - x) / hx) / hx * kernel_oracle((csi - s) / hs) / hs
                for cxi, csi in zip(cx, cs)
            )
            / 4.0
        )
        assert log_kde_pair(cx, cs, hx, hs, x, s) == pytest.approx(expected, abs=1e-12)


class TestLogKdeFullJoint:
    def test_all_unit_bandwidths_at_center(self):
        pts = np.array([[0.5, -0.2, 1.0]])
        lat = np.array([0.3])
        ctx = KdeContext(pts, lat, BandwidthSpec(h=np.ones(3), h_star=1.0, w=1.0))
        val = log_kde_full_joint(ctx, pts[0], lat[0])
        assert val == pytest.approx(4.0 * math.log(INV_SQRT_2PI), abs=1e-12)

    def test_k1_reduces_to_pair(self):
        rng = np.random.default_rng(12)
        pts = rng.normal(size=(5, 1))
        lat = rng.normal(size=5)
        ctx = KdeContext(pts, lat, BandwidthSpec(h=np.array([0.7]), h_star=0.9, w=1.0))
        for x, s in [(0.0, 0.0), (1.5, -0.5)]:
            full = log_kde_full_joint(ctx, np.array([x]), s)
            pair = log_kde_pair(pts[:, 0], lat, 0.7, 0.9, x, s)
            assert full == pytest.approx(pair, abs=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(13)
        m, k = 5, 4
        pts = rng.normal(size=(m, k))
        lat = rng.normal(size=m)
        h = rng.uniform(0.5, 1.5, size=k)
        hs = 0.8
        ctx = KdeContext(pts, lat, BandwidthSpec(h=h, h_star=hs, w=1.0))
        point = rng.normal(size=k)
        s = 0.25
        total = 0.0
        for i in range(m):
            term = kernel_oracle((lat[i] - s) / hs) / hs
            for j in range(k):
                term *= kernel_oracle((pts[i, j] - point[j]) / h[j]) / h[j]
            total += term
        expected = math.log(total / m)
        assert log_kde_full_joint(ctx, point, s) == pytest.approx(expected, abs=1e-12)

    def test_wrong_point_length(self):
        ctx = make_context(k=3)
        with pytest.raises(ValueError):
            log_kde_full_joint(ctx, np.zeros(2), 0.0)


class TestDensityInvariants:
    def test_self_center_always_finite(self):
        ctx = make_context(m=8, k=4, seed=14)
        for l in range(ctx.m):
            val = log_kde_full_joint(ctx, ctx.points[l], ctx.latents[l])
            assert np.isfinite(val)

    def test_extreme_offset_no_nan(self):
        rng = np.random.default_rng(15)
        centers = rng.normal(size=20) + 1e6
        val = log_kde_marginal(centers, 0.5, 0.0)
        assert not np.isnan(val)  # huge distance: -inf underflow is documented
        near = log_kde_marginal(centers, 0.5, 1e6)
        assert np.isfinite(near)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(16)
        ctx = make_context(m=12, k=3, seed=16)
        perm = rng.permutation(ctx.m)
        ctx_p = KdeContext(ctx.points[perm], ctx.latents[perm], ctx.bandwidths)
        x, s = ctx.points[3], ctx.latents[3]
        assert log_kde_full_joint(ctx, x, s) == pytest.approx(
            log_kde_full_joint(ctx_p, x, s), abs=1e-12
        )
        assert log_kde_marginal(ctx.latents, 0.8, 0.1) == pytest.approx(
            log_kde_marginal(ctx.latents[perm], 0.8, 0.1), abs=1e-12
        )

    def test_factorization_identity(self):
        # conditional-product route equals sum(pairs) - (k-1) * marginal
        ctx = make_context(m=10, k=4, seed=17)
        bw = ctx.bandwidths
        for l in (0, 4, 9):
            x, s = ctx.points[l], ctx.latents[l]
            log_marg = log_kde_marginal(ctx.latents, bw.h_star, s)
            pairs = [
                log_kde_pair(ctx.points[:, j], ctx.latents, bw.h[j], bw.h_star, x[j], s)
                for j in range(ctx.k)
            ]
            via_conditionals = sum(p - log_marg for p in pairs) + log_marg
            via_identity = sum(pairs) - (ctx.k - 1) * log_marg
            assert via_conditionals == pytest.approx(via_identity, abs=1e-10)
