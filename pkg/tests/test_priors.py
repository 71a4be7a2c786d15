import math

import mpmath
import numpy as np
import pytest

from sparsecavity.errors import ParameterDomainError
from sparsecavity.priors import SignalPrior, average, moments, sample
from sparsecavity.scalar import psi_theta, psi_xi

PRIORS = [SignalPrior.gaussian(1.0), SignalPrior.gaussian(2.5), SignalPrior.power_law(0.0),
          SignalPrior.power_law(1.0, cutoff=2.0), SignalPrior.power_law(-0.5), SignalPrior.gapped(1.0, 1.0)]


class TestConstruction:
    @pytest.mark.parametrize("kwargs", [dict(kind="gaussian", variance=0.0), dict(kind="power_law", gamma=-1.0),
                                        dict(kind="power_law", cutoff=0.0), dict(kind="gapped", gap=0.0),
                                        dict(kind="gapped", width=-1.0), dict(kind="cauchy")])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterDomainError):
            SignalPrior(**kwargs)

    @pytest.mark.parametrize("prior", PRIORS)
    def test_dict_round_trip(self, prior):
        assert SignalPrior.from_dict(prior.to_dict()) == prior

    @pytest.mark.parametrize("prior", PRIORS)
    def test_density_normalized(self, prior):
        lo, hi = prior.support()
        total = 2 * float(mpmath.quad(lambda x: float(prior.pdf(float(x))), [lo, (lo + hi) / 2, hi]))
        assert total == pytest.approx(1.0, rel=1e-6)

    def test_gapped_density_vanishes_in_gap(self):
        p = SignalPrior.gapped(1.0, 1.0)
        assert np.all(p.pdf(np.linspace(-0.999, 0.999, 101)) == 0)


class TestMoments:
    def test_examples(self):
        m = moments(SignalPrior.gaussian(1.0))
        assert m.m2 == 1.0 and m.m1_abs == pytest.approx(0.7978845608028654, rel=1e-15)
        m = moments(SignalPrior.gapped(1.0, 1.0))
        assert m.m1_abs == pytest.approx(1.5) and m.m2 == pytest.approx(7 / 3, rel=1e-15)
        m = moments(SignalPrior.power_law(0.0, 1.0))
        assert m.m1_abs == pytest.approx(0.5) and m.m2 == pytest.approx(1 / 3, rel=1e-15)

    @pytest.mark.parametrize("prior", PRIORS)
    def test_against_quadrature_and_jensen(self, prior):
        m = prior.moments()
        assert m.m1_abs == pytest.approx(average(prior, 1.0, np.abs), rel=1e-10)
        assert m.m2 == pytest.approx(average(prior, 1.0, np.square), rel=1e-10)
        assert m.m2 >= m.m1_abs ** 2 >= 0
        if prior.kind == "gapped":
            assert m.m1_abs >= prior.gap


class TestSample:
    def test_zero_density(self):
        assert np.all(sample(SignalPrior.gaussian(), 0.0, 100, 1) == 0)

    def test_gaussian_second_moment(self):
        x = sample(SignalPrior.gaussian(), 1.0, 100_000, 2)
        se = (x ** 2).std() / math.sqrt(x.size)
        assert abs((x ** 2).mean() - 1.0) < 3 * se

    def test_gapped_support(self):
        x = sample(SignalPrior.gapped(1.0, 1.0), 1.0, 10_000, 3)
        assert np.abs(x).min() >= 1.0 and np.abs(x).max() <= 2.0

    @pytest.mark.parametrize("rho", [0.05, 0.3, 0.9])
    def test_nonzero_fraction(self, rho):
        n = 50_000
        x = sample(SignalPrior.power_law(1.0), rho, n, 4)
        assert abs(np.mean(x != 0) - rho) < 3 * math.sqrt(rho * (1 - rho) / n)

    def test_deterministic(self):
        p = SignalPrior.gapped()
        assert np.array_equal(sample(p, 0.4, 1000, 9), sample(p, 0.4, 1000, 9))

    @pytest.mark.parametrize("rho", [-0.1, 1.1])
    def test_bad_rho(self, rho):
        with pytest.raises(ParameterDomainError):
            sample(SignalPrior.gaussian(), rho, 10, 0)


class TestAverage:
    @pytest.mark.parametrize("prior", PRIORS)
    @pytest.mark.parametrize("sigma", [1e-3, 0.1, 3.0])
    def test_normalization(self, prior, sigma):
        assert average(prior, sigma, np.ones_like) == pytest.approx(1.0, rel=1e-10)

    @pytest.mark.parametrize("sigma", [0.05, 1.0])
    def test_second_moment_scaling(self, sigma):
        p = SignalPrior.gaussian(1.0)
        assert average(p, sigma, np.square) == pytest.approx(1.0 / sigma ** 2, rel=1e-10)

    def test_knee_window_matches_full_rule(self):
        p = SignalPrior.gaussian()
        f = lambda t: psi_xi(t, 1.2)
        assert average(p, 0.1, f, knee=1.2) == pytest.approx(average(p, 0.1, f), rel=1e-9)

    def test_psi_theta_against_sampling(self):
        # 1e7-sample Monte Carlo of [psi_theta(x0 / sigma, 1)] with x0 ~ N(0, 1)
        p, sigma = SignalPrior.gaussian(1.0), 0.1
        rng = np.random.default_rng(5)
        vals = psi_theta(rng.standard_normal(10_000_000) / sigma, 1.0)
        se = vals.std() / math.sqrt(vals.size)
        assert abs(average(p, sigma, lambda t: psi_theta(t, 1.0), knee=1.0) - vals.mean()) < 3 * se

    def test_rejects_bad_sigma(self):
        with pytest.raises(ParameterDomainError):
            average(SignalPrior.gaussian(), 0.0, np.ones_like)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.5])
    def test_small_sigma_power_law(self, gamma):
        # [psi_xi] ~ sigma^(gamma + 1) as sigma -> 0
        p = SignalPrior.power_law(gamma)
        r = [average(p, s, lambda t: psi_xi(t, 1.0), knee=1.0) / s ** (gamma + 1) for s in (1e-2, 1e-3)]
        assert r[0] == pytest.approx(r[1], rel=0.05)

    def test_gapped_faster_than_any_power(self):
        p = SignalPrior.gapped(1.0, 1.0)
        sig = np.array([0.15, 0.2, 0.25, 0.3, 0.4])
        vals = np.array([average(p, s, lambda t: psi_xi(t, 1.0), knee=1.0) for s in sig])
        slope, _ = np.polyfit(1 / sig ** 2, np.log(vals), 1)
        resid = np.log(vals) - np.polyval([slope, _], 1 / sig ** 2)
        assert slope < 0 and np.max(np.abs(resid)) < 0.1 * np.ptp(np.log(vals))
