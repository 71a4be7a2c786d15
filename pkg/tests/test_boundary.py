import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from sparsecavity.boundary import (boundary_a2, boundary_residuals, bp_alpha_c, bp_boundary_parametric,
                                   bp_sparse_asymptote, critical_alpha, en_boundary, en_boundary_parametric,
                                   en_excess)
from sparsecavity.errors import ParameterDomainError
from sparsecavity.priors import SignalPrior
from sparsecavity.scalar import big_a0, big_a2, gauss_ccdf, gauss_pdf

GAUSS = SignalPrior.gaussian(1.0)


def bisection_alpha_c(rho, excess=0.0):
    """Independent oracle: brentq on the closed-form rho(tau) of the curve, then alpha from A0."""
    g = lambda t: 2 * (gauss_pdf(t) - t * gauss_ccdf(t)) / ((1 + excess) * t + 2 * (gauss_pdf(t) - t * gauss_ccdf(t))) - rho
    tau = optimize.brentq(g, 1e-9, 40.0, xtol=1e-15, rtol=1e-15)
    return float(big_a0(rho, tau)), tau


class TestParametric:
    def test_endpoint(self):
        pt = bp_boundary_parametric(0.0)
        assert (pt.alpha_c, pt.rho_c) == (1.0, 1.0)
        near = bp_boundary_parametric(1e-12)
        assert abs(near.alpha_c - 1) < 1e-10 and abs(near.rho_c - 1) < 1e-10

    def test_deep_sparse(self):
        pt = bp_boundary_parametric(8.0)
        assert 0 < pt.alpha_c < 1e-12 and 0 < pt.rho_c < 1e-12

    @pytest.mark.parametrize("tau", [0.01, 0.5, 1.0, 2.0, 5.0])
    def test_closed_forms(self, tau):
        pt = bp_boundary_parametric(tau)
        phi, cc = gauss_pdf(tau), gauss_ccdf(tau)
        assert pt.alpha_c == pytest.approx(2 * phi / (tau + 2 * (phi - tau * cc)), rel=1e-12)
        assert pt.rho_c / pt.alpha_c == pytest.approx(1 - tau * cc / phi, rel=1e-10)

    @pytest.mark.parametrize("tau", [0.05, 1.0, 3.0])
    def test_residuals(self, tau):
        pt = bp_boundary_parametric(tau)
        r1, r2 = boundary_residuals(pt.alpha_c, pt.rho_c, tau)
        assert abs(r1) < 1e-12 and abs(r2) < 1e-12

    def test_monotone_in_tau(self):
        pts = [bp_boundary_parametric(t) for t in np.logspace(-3, math.log10(8), 200)]
        a = np.array([p.alpha_c for p in pts])
        r = np.array([p.rho_c for p in pts])
        assert np.all(np.diff(a) < 0) and np.all(np.diff(r) < 0)

    def test_negative_tau(self):
        with pytest.raises(ParameterDomainError):
            bp_boundary_parametric(-1.0)


class TestInversion:
    def test_rho_one(self):
        assert bp_alpha_c(1.0)[0] == 1.0

    def test_rho_point_two_against_oracle(self):
        a, tau = bp_alpha_c(0.2)
        a_ref, tau_ref = bisection_alpha_c(0.2)
        assert a == pytest.approx(a_ref, abs=1e-10) and tau == pytest.approx(tau_ref, abs=1e-9)
        r1, r2 = boundary_residuals(a, 0.2, tau)
        assert abs(r1) < 1e-10 and abs(r2) < 1e-14

    @pytest.mark.parametrize("tau", np.logspace(-3, math.log10(8), 15))
    def test_round_trip(self, tau):
        pt = bp_boundary_parametric(tau)
        assert bp_alpha_c(pt.rho_c)[0] == pytest.approx(pt.alpha_c, abs=1e-9)

    def test_increasing_in_rho(self):
        a = [bp_alpha_c(r)[0] for r in np.linspace(0.01, 1, 40)]
        assert np.all(np.diff(a) > 0)

    def test_limits(self):
        assert bp_alpha_c(0.999)[0] > 0.99
        assert bp_alpha_c(1e-5)[0] < 1e-3

    @pytest.mark.parametrize("rho", [0.0, -0.1, 1.2])
    def test_bad_rho(self, rho):
        with pytest.raises(ParameterDomainError):
            bp_alpha_c(rho)

    def test_sparse_asymptote_at_small_rho(self):
        a, _ = bp_alpha_c(1e-4)
        assert bp_sparse_asymptote(a) == pytest.approx(1e-4, rel=0.15)

    def test_critical_alpha_zero_rho(self):
        assert critical_alpha(0.0) == (0.0, math.inf)

    def test_fast(self):
        t0 = time.perf_counter()
        bp_boundary_parametric(1e-3)
        assert time.perf_counter() - t0 < 1e-3


class TestAsymptote:
    def test_examples(self):
        assert bp_sparse_asymptote(1 / math.e) == pytest.approx(0.18393972058572117, rel=1e-14)
        assert bp_sparse_asymptote(0.01) == pytest.approx(0.01 / (2 * math.log(100)), rel=1e-15)

    def test_out_of_regime_mismatch(self):
        # the asymptote is not meant to hold away from the sparse limit
        a = 0.9
        tau = optimize.brentq(lambda t: bp_boundary_parametric(t).alpha_c - a, 1e-6, 8)
        assert abs(bp_sparse_asymptote(a) / bp_boundary_parametric(tau).rho_c - 1) > 0.15

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_domain(self, alpha):
        with pytest.raises(ParameterDomainError):
            bp_sparse_asymptote(alpha)


class TestElasticNet:
    def test_excess(self):
        m = GAUSS.moments()
        assert en_excess(0.4, GAUSS) == pytest.approx(2 * 0.4 * m.m1_abs + 0.16 * m.m2, rel=1e-15)
        assert en_excess(0.0, GAUSS) == 0.0
        with pytest.raises(ParameterDomainError):
            en_excess(-0.1, GAUSS)

    @pytest.mark.parametrize("rho", [0.05, 0.15, 0.5])
    def test_reduces_to_bp(self, rho):
        assert en_boundary(rho, 0.0, GAUSS)[0] == pytest.approx(bp_alpha_c(rho)[0], abs=1e-12)

    def test_ordering(self):
        a = [en_boundary(0.15, r, GAUSS)[0] for r in (0.0, 0.4, 0.8)]
        assert a[0] < a[1] < a[2]

    def test_residuals_and_oracle(self):
        a, tau = en_boundary(0.15, 0.4, GAUSS)
        k = en_excess(0.4, GAUSS)
        r1, r2 = boundary_residuals(a, 0.15, tau, k)
        assert abs(r1) < 1e-12 and abs(r2) < 1e-12
        assert a == pytest.approx(bisection_alpha_c(0.15, k)[0], abs=1e-10)

    def test_parametric_matches_inversion(self):
        a, tau = en_boundary(0.3, 0.8, GAUSS)
        pt = en_boundary_parametric(tau, 0.8, GAUSS)
        assert pt.alpha_c == pytest.approx(a, abs=1e-10) and pt.rho_c == pytest.approx(0.3, abs=1e-12)

    def test_depends_on_prior(self):
        assert en_boundary(0.15, 0.4, SignalPrior.gapped())[0] != pytest.approx(en_boundary(0.15, 0.4, GAUSS)[0])


class TestSlopeAtCriticality:
    @pytest.mark.parametrize("rho", [0.05, 0.2, 0.6])
    def test_bp_slope_vanishes(self, rho):
        _, tau = bp_alpha_c(rho)
        h = 1e-6
        slope = (big_a2(rho, tau + h) - big_a2(rho, tau - h)) / (2 * h)
        assert abs(slope) < 1e-6

    @pytest.mark.parametrize("ratio", [0.4, 0.8])
    def test_en_slope_also_vanishes(self, ratio):
        # d/dtau of A2 + rho tau^2 K equals 2 (A2_EN - A0) / tau, which is zero where both meet
        rho = 0.15
        k = en_excess(ratio, GAUSS)
        _, tau = en_boundary(rho, ratio, GAUSS)
        h = 1e-6
        slope = (boundary_a2(rho, tau + h, k) - boundary_a2(rho, tau - h, k)) / (2 * h)
        assert abs(slope) < 1e-6

    @given(st.floats(min_value=0.05, max_value=5), st.floats(min_value=0, max_value=1),
           st.floats(min_value=0, max_value=3))
    def test_en_slope_identity(self, tau, rho, k):
        h = 1e-5
        fd = (boundary_a2(rho, tau + h, k) - boundary_a2(rho, tau - h, k)) / (2 * h)
        ident = 2 * (boundary_a2(rho, tau, k) - big_a0(rho, tau)) / tau
        assert fd == pytest.approx(ident, rel=1e-6, abs=1e-9)
