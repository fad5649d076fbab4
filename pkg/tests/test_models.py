"""Model geometry tests: likelihood formulas, contour maps, evidence oracles.

Truth routes used here, in decreasing independence from the implementation:
closed forms (Gaussian evidence, posterior moments via the conjugate
posterior width), scipy distribution functions, and the radius-domain
quadrature which shares no code with the ln X route.
"""

import math

import numpy as np
import pytest
from scipy.stats import chi2

from varlive import models as md
from varlive.models import ModelSpec

G10 = ModelSpec(md.GAUSSIAN, 10, 10.0)
G3 = ModelSpec(md.GAUSSIAN, 3, 10.0)
EP2 = ModelSpec(md.EXP_POWER, 10, 10.0, b=2.0)
EP34 = ModelSpec(md.EXP_POWER, 10, 10.0, b=0.75)
C10 = ModelSpec(md.CAUCHY, 10, 10.0)

# ln Gamma(5.5) - 5.5 ln(pi), evaluated independently with math.lgamma
CAUCHY_D10_PEAK = -2.3382004045529845


class TestModelSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelSpec("triangle", 10, 10.0)
        with pytest.raises(ValueError):
            ModelSpec(md.GAUSSIAN, 0, 10.0)
        with pytest.raises(ValueError):
            ModelSpec(md.GAUSSIAN, 10, -1.0)
        with pytest.raises(ValueError):
            ModelSpec(md.EXP_POWER, 10, 10.0, b=0.0)

    def test_round_trip_dict(self):
        for m in [G10, EP2, C10]:
            assert ModelSpec.from_dict(m.to_dict()) == m

    def test_hashable_immutable(self):
        assert len({G10, ModelSpec(md.GAUSSIAN, 10, 10.0)}) == 1
        with pytest.raises(Exception):
            G10.d = 5


class TestLogLikelihood:
    def test_gaussian_peak(self):
        assert md.log_likelihood_at_radius(G10, 0.0) == pytest.approx(
            -5.0 * math.log(2.0 * math.pi), abs=1e-12)

    def test_gaussian_r2(self):
        peak = md.log_likelihood_at_radius(G10, 0.0)
        assert md.log_likelihood_at_radius(G10, 2.0) == pytest.approx(peak - 2.0, abs=1e-12)

    def test_cauchy_peak(self):
        assert md.log_likelihood_at_radius(C10, 0.0) == pytest.approx(
            CAUCHY_D10_PEAK, abs=1e-12)

    def test_exp_power_reduces_to_gaussian_at_b1(self):
        ep1 = ModelSpec(md.EXP_POWER, 10, 10.0, b=1.0)
        r = np.linspace(0.0, 8.0, 50)
        assert md.log_likelihood_at_radius(ep1, r) == pytest.approx(
            md.log_likelihood_at_radius(G10, r), abs=1e-10)

    def test_strictly_decreasing_in_radius(self):
        r = np.linspace(0.0, 50.0, 2000)
        for m in [G10, EP2, EP34, C10]:
            v = md.log_likelihood_at_radius(m, r)
            assert np.all(np.diff(v) < 0.0)

    def test_rejects_negative_radius(self):
        with pytest.raises(ValueError):
            md.log_likelihood_at_radius(G10, -1.0)


class TestRadiusInversion:
    def test_peak_maps_to_zero(self):
        peak = md.log_likelihood_at_radius(G10, 0.0)
        assert md.radius_from_log_likelihood(G10, peak) == 0.0

    def test_gaussian_two_below_peak(self):
        peak = md.log_likelihood_at_radius(G10, 0.0)
        assert md.radius_from_log_likelihood(G10, peak - 2.0) == pytest.approx(2.0, rel=1e-12)

    def test_exp_power_hand_case(self):
        peak = md.log_likelihood_at_radius(EP2, 0.0)
        # r^(2b)/2 = 8 at b=2 gives r = 2
        assert md.radius_from_log_likelihood(EP2, peak - 8.0) == pytest.approx(2.0, rel=1e-12)

    def test_round_trip_all_families(self):
        # below r ~ 0.05 the b=2 drop r^4/2 cancels against the stored
        # normalization constant, so start where the drop is representable
        for m in [G10, EP2, EP34, C10]:
            r = np.geomspace(0.05, 40.0, 200)
            logl = md.log_likelihood_at_radius(m, r)
            back = md.radius_from_log_likelihood(m, logl)
            assert np.all(np.abs(back - r) <= 1e-10 * r)

    def test_rejects_above_peak(self):
        with pytest.raises(ValueError):
            md.radius_from_log_likelihood(G10, 1.0)


class TestVolumeMaps:
    def test_boundaries(self):
        assert md.log_x_from_radius(G10, 0.0) == -np.inf
        assert md.log_x_from_radius(G10, np.inf) == 0.0
        assert md.radius_from_log_x(G10, -np.inf) == 0.0
        assert md.radius_from_log_x(G10, 0.0) == np.inf
        assert md.log_likelihood_from_log_x(G10, 0.0) == -np.inf
        assert md.log_likelihood_from_log_x(C10, 0.0) == -np.inf

    def test_half_mass_radius(self):
        # r^2/(2 sigma^2) = 4.6709 is the Gamma(5,1) median
        assert md.log_x_from_radius(G10, 30.565) == pytest.approx(math.log(0.5), abs=1e-3)

    def test_composition(self):
        direct = md.log_likelihood_at_radius(G10, 30.565)
        via_x = md.log_likelihood_from_log_x(G10, md.log_x_from_radius(G10, 30.565))
        assert via_x == pytest.approx(direct, abs=1e-6)

    def test_round_trip_radius_logx(self):
        # ln X rounds to -0.0 once 1 - X underflows (r beyond ~39 sigma at
        # d=10); such points cannot round trip in double and are skipped
        for m in [G10, G3, EP2, C10, ModelSpec(md.GAUSSIAN, 2, 0.1)]:
            r = np.geomspace(1e-3 * m.sigma_pi, 40.0 * m.sigma_pi, 120)
            lx = md.log_x_from_radius(m, r)
            representable = lx < 0.0
            assert np.all(r[~representable] > 38.0 * m.sigma_pi)
            back = md.radius_from_log_x(m, lx[representable])
            assert np.all(np.abs(back - r[representable]) <= 1e-8 * r[representable])

    def test_monotone_on_random_pairs(self):
        rng = np.random.default_rng(8)
        lx = -rng.uniform(1e-6, 60.0, 10_000)
        perm = rng.permutation(10_000)
        l1 = md.log_likelihood_from_log_x(G10, lx)
        l2 = l1[perm]
        lower = lx[perm] < lx
        assert np.all((l2 > l1)[lower])

    def test_rejects_positive_logx(self):
        with pytest.raises(ValueError):
            md.radius_from_log_x(G10, 0.5)


class TestEvidence:
    def test_closed_form_d10(self):
        assert md.analytic_log_evidence(G10) == pytest.approx(
            -5.0 * math.log(2.0 * math.pi * 101.0), abs=1e-12)
        assert md.analytic_log_evidence(G10) == pytest.approx(-32.264988, abs=1e-5)

    def test_closed_form_d3(self):
        assert md.analytic_log_evidence(G3) == pytest.approx(-9.6797, abs=5e-4)

    def test_quadrature_matches_closed_form(self):
        for d in [2, 3, 10, 100]:
            m = ModelSpec(md.GAUSSIAN, d, 10.0)
            assert md.log_evidence_quadrature(m) == pytest.approx(
                md.analytic_log_evidence(m), abs=1e-6)

    def test_quadrature_node_convergence(self):
        for m in [G10, EP2, C10]:
            a = md.log_evidence_quadrature(m, 1_000_001)
            b = md.log_evidence_quadrature(m, 4_000_001)
            assert a == pytest.approx(b, abs=1e-7)

    def test_independent_radius_route(self):
        for m in [G10, G3, EP2, EP34, C10]:
            assert md.log_evidence_radius_quadrature(m) == pytest.approx(
                md.log_evidence_quadrature(m), abs=1e-8)

    def test_non_gaussian_regression_values(self):
        # frozen from the two agreeing quadrature routes
        assert md.analytic_log_evidence(EP2) == pytest.approx(-32.2258688, abs=1e-6)
        assert md.analytic_log_evidence(EP34) == pytest.approx(-32.3749961, abs=1e-6)
        assert md.analytic_log_evidence(C10) == pytest.approx(-32.5212479, abs=1e-6)


class TestPosteriorMass:
    def test_boundary_zero(self):
        assert md.relative_posterior_mass(G10, 0.0) == 0.0

    def test_total_mass_is_evidence(self):
        ratio = md.posterior_mass_remaining(G10, 0.0) / math.exp(md.analytic_log_evidence(G10))
        assert ratio == pytest.approx(1.0, abs=1e-6)

    def test_remaining_monotone(self):
        lx = np.linspace(-60.0, -0.01, 500)
        vals = md.posterior_mass_remaining(G10, lx)
        assert np.all(np.diff(vals) >= 0.0)

    def test_argmax_is_stationary(self):
        xstar = md.argmax_log_x_relative_posterior_mass(G10)
        h = 1e-4
        deriv = (md.log_relative_posterior_mass(G10, xstar + h)
                 - md.log_relative_posterior_mass(G10, xstar - h)) / (2.0 * h)
        assert abs(deriv) < 1e-3
        # rough location: within a few units of -d ln(sigma_pi)
        assert -25.0 < xstar < -15.0

    def test_integrates_to_evidence(self):
        # direct check that L(X) X integrates (in ln X) to exp(ln Z)
        lx = np.linspace(-90.0, -1e-6, 400_001)
        f = md.relative_posterior_mass(G10, np.array([-20.0]))  # warm the map
        g = md.posterior_grid(G10)
        total = float(np.sum(np.exp(g.log_l + g.log_x))) * (g.log_x[1] - g.log_x[0])
        assert total == pytest.approx(math.exp(md.analytic_log_evidence(G10)), rel=1e-5)
        assert f[0] > 0.0


class TestContourMap:
    def test_matches_exact_paths(self):
        # interpolation error concentrates where the contour height dives
        # toward ln X = 0 (slope ~ 1e4 per ln-unit); everything carrying
        # posterior weight sits far below that, so the tight band applies
        # to lx <= -0.1 and a loose one to the dive
        cmap = md.get_contour_map(G10, -60.0)
        lx = np.linspace(-55.0, -0.5, 50)
        exact_logl = np.array([md.log_likelihood_from_log_x(G10, v) for v in lx])
        assert np.max(np.abs(cmap.log_l(lx) - exact_logl)) < 1e-7
        exact_r = np.array([md.radius_from_log_x(G10, v) for v in lx])
        assert np.max(np.abs(cmap.radius(lx) - exact_r) / exact_r) < 1e-10
        steep = np.geomspace(0.4, 1e-4, 20)
        exact_steep = np.array([md.log_likelihood_from_log_x(G10, -v) for v in steep])
        assert np.max(np.abs(cmap.log_l(-steep) - exact_steep)) < 0.05

    def test_inverse_consistency(self):
        cmap = md.get_contour_map(G10, -60.0)
        lx = np.linspace(-55.0, -0.01, 5000)
        back = cmap.log_x(cmap.log_l(lx))
        assert np.max(np.abs(back - lx)) < 1e-6

    def test_out_of_range_raises(self):
        cmap = md.get_contour_map(G10, -60.0)
        with pytest.raises(ValueError):
            cmap.log_l(cmap.log_x_floor - 50.0)

    def test_cache_reuses_deepest(self):
        a = md.get_contour_map(G3, -40.0)
        b = md.get_contour_map(G3, -30.0)
        assert b is a
        c = md.get_contour_map(G3, 2.0 * a.log_x_floor)
        assert c is not a
        assert c.log_x_floor <= 2.0 * a.log_x_floor


class TestPosteriorGridTruths:
    """Conjugate-posterior closed forms vs the quadrature grid (Gaussian)."""

    def test_d3_moments(self):
        g = md.posterior_grid(G3)
        sig_post = math.sqrt(100.0 / 101.0)
        mean_r = float(np.sum(g.weight * g.radius))
        expect = sig_post * math.sqrt(2.0) * math.gamma(2.0) / math.gamma(1.5)
        assert mean_r == pytest.approx(expect, rel=1e-8)
        m2 = float(np.sum(g.weight * g.radius ** 2)) / 3.0
        assert m2 == pytest.approx(sig_post ** 2, rel=1e-8)

    def test_d3_median_radius(self):
        g = md.posterior_grid(G3)
        order = np.argsort(g.radius)
        cw = np.cumsum(g.weight[order])
        med = float(np.interp(0.5, cw, g.radius[order]))
        sig_post = math.sqrt(100.0 / 101.0)
        assert med == pytest.approx(sig_post * math.sqrt(chi2.ppf(0.5, 3)), abs=1e-3)

    def test_weights_normalized(self):
        for m in [G10, EP2]:
            g = md.posterior_grid(m)
            assert float(np.sum(g.weight)) == pytest.approx(1.0, abs=1e-12)
            assert g.log_z == pytest.approx(md.analytic_log_evidence(m), abs=1e-6)
