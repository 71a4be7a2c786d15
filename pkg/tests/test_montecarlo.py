import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsecavity import montecarlo as mc
from sparsecavity.cavity import EnsembleSpec, solve_ridge
from sparsecavity.errors import NonConvergenceError, ParameterDomainError, SolverFailure
from sparsecavity.priors import SignalPrior
from sparsecavity.scalar import soft_threshold


def limit_spec(alpha, rho, **kw):
    return EnsembleSpec(alpha=alpha, rho=rho, limit=True, **kw)


class TestInstance:
    def test_reference_sizes(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.15), 200, 0)
        assert inst.h.shape == (100, 200) and np.count_nonzero(inst.x0) == 30

    def test_zero_signal(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.0, sigma_zeta_sq=0.1), 50, 3)
        assert not inst.x0.any()
        np.testing.assert_array_equal(inst.y, inst.zeta)

    def test_noise_is_exact_residual(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.2, sigma_zeta_sq=0.01), 80, 4)
        np.testing.assert_allclose(inst.y - inst.h @ inst.x0, inst.zeta, atol=1e-14)

    def test_deterministic(self):
        a = mc.generate_instance(limit_spec(0.4, 0.1, sigma_zeta_sq=0.1), 60, (7, 2))
        b = mc.generate_instance(limit_spec(0.4, 0.1, sigma_zeta_sq=0.1), 60, (7, 2))
        for f in ("h", "x0", "y", "zeta"):
            assert getattr(a, f).tobytes() == getattr(b, f).tobytes()

    def test_different_trials_differ(self):
        a = mc.generate_instance(limit_spec(0.4, 0.1), 60, (7, 0))
        b = mc.generate_instance(limit_spec(0.4, 0.1), 60, (7, 1))
        assert not np.array_equal(a.h, b.h)

    def test_entry_statistics(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.1), 400, 1)
        h = inst.h.ravel()
        m = inst.m
        # entries have mean 0 and variance 1/M; the sample variance has variance 2/M^2 per entry
        assert abs(h.mean()) < 3 * math.sqrt(1 / m / h.size)
        assert abs(h.var() - 1 / m) < 3 * math.sqrt(2 / h.size) / m

    @pytest.mark.parametrize("alpha,n", [(0.001, 100), (0.5, 0)])
    def test_bad_dimensions(self, alpha, n):
        with pytest.raises(ParameterDomainError):
            mc.generate_instance(limit_spec(alpha, 0.1), n, 0)


def random_instance(m, n, seed, noise=0.01):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((m, n)) / math.sqrt(m)
    x0 = np.where(rng.random(n) < 0.3, rng.standard_normal(n), 0.0)
    zeta = math.sqrt(noise) * rng.standard_normal(m)
    return mc.Instance(h=h, x0=x0, y=h @ x0 + zeta, zeta_sigma_sq=noise, zeta=zeta)


def kkt_ok(inst, x, l1, l2, tol):
    g = inst.h.T @ (inst.y - inst.h @ x) - l2 * x
    zero = x == 0
    return (np.all(np.abs(g[zero]) <= l1 + tol)
            and np.all(np.abs(g[~zero] - l1 * np.sign(x[~zero])) <= tol))


class TestElasticNet:
    def test_huge_penalty_gives_zero(self):
        inst = random_instance(20, 40, 0)
        lam = 1.01 * np.max(np.abs(inst.h.T @ inst.y))
        assert not mc.solve_elastic_net(inst, lam, 0.3).any()

    @pytest.mark.parametrize("l1,l2", [(0.1, 0.0), (0.3, 0.5), (0.0, 1.0)])
    def test_orthonormal_closed_form(self, l1, l2):
        q, _ = np.linalg.qr(np.random.default_rng(2).standard_normal((2, 2)))
        y = np.array([0.7, -0.2])
        inst = mc.Instance(h=q, x0=np.zeros(2), y=y, zeta_sigma_sq=0.0, zeta=y)
        expect = soft_threshold(q.T @ y, l1) / (1 + l2)
        np.testing.assert_allclose(mc.solve_elastic_net(inst, l1, l2, tol=1e-12), expect, atol=1e-11)

    @pytest.mark.parametrize("l1,l2", [(0.05, 0.0), (0.01, 0.02), (1e-4, 0.0)])
    def test_matches_oracle_objective(self, l1, l2):
        inst = random_instance(20, 40, 5)
        x = mc.solve_elastic_net(inst, l1, l2, tol=1e-10)
        _, oracle = mc.objective_oracle(inst, l1, l2)
        assert mc.objective(inst, x, l1, l2) == pytest.approx(oracle, abs=1e-6)
        assert mc.objective(inst, x, l1, l2) <= oracle + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 10 ** 6),
           st.floats(1e-4, 1.0), st.sampled_from([0.0, 0.1, 1.0]))
    def test_certificate(self, m, n, seed, l1, ratio):
        inst = random_instance(m, n, seed)
        x = mc.solve_elastic_net(inst, l1, ratio * l1, tol=1e-8)
        assert kkt_ok(inst, x, l1, ratio * l1, 1e-8)
        assert mc.kkt_violation(inst, x, l1, ratio * l1) <= 1e-8

    def test_nonconvergence_carries_iterate(self):
        inst = random_instance(30, 60, 1)
        with pytest.raises(NonConvergenceError) as info:
            mc.solve_elastic_net(inst, 1e-6, 0.0, tol=1e-300, max_sweeps=10)
        assert info.value.best_iterate.shape == (60,) and info.value.kkt_violation > 0

    def test_bad_arguments(self):
        inst = random_instance(5, 10, 0)
        with pytest.raises(ParameterDomainError):
            mc.solve_elastic_net(inst, -1.0)
        with pytest.raises(ParameterDomainError):
            mc.solve_elastic_net(inst, 1.0, tol=0.0)

    def test_scaled_tolerance(self):
        assert mc.scaled_tol(1e-8) == pytest.approx(1e-11)
        assert mc.scaled_tol(1.0) == 1e-8
        assert mc.scaled_tol(1e-14) == 1e-13


class TestRidge:
    def test_interpolates(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.2), 100, 0)
        x = mc.solve_ridge_direct(inst, 0.0)
        np.testing.assert_allclose(inst.h @ x, inst.y, atol=1e-8)

    def test_projection_is_idempotent(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.2), 100, 1)
        px = mc.solve_ridge_direct(inst, 0.0)
        again = mc.Instance(h=inst.h, x0=px, y=inst.h @ px, zeta_sigma_sq=0.0, zeta=np.zeros(inst.m))
        np.testing.assert_allclose(mc.solve_ridge_direct(again, 0.0), px, atol=1e-10)

    def test_large_penalty_shrinks_to_zero(self):
        inst = mc.generate_instance(limit_spec(0.5, 0.2), 100, 2)
        assert np.max(np.abs(mc.solve_ridge_direct(inst, 1e12))) < 1e-10

    def test_matches_normal_equations(self):
        inst = random_instance(15, 30, 3)
        lam = 0.3
        expect = np.linalg.solve(inst.h.T @ inst.h + lam * np.eye(30), inst.h.T @ inst.y)
        np.testing.assert_allclose(mc.solve_ridge_direct(inst, lam), expect, atol=1e-10)

    def test_negative_penalty(self):
        with pytest.raises(ParameterDomainError):
            mc.solve_ridge_direct(random_instance(5, 10, 0), -1.0)

    def test_closer_to_theory_at_larger_n(self):
        # per-trial errors concentrate on q as N grows (same seeds at both sizes)
        spec = EnsembleSpec(alpha=0.5, rho=0.2, lambda1=0.0, lambda2=1.0, limit=True)
        q = solve_ridge(spec).q
        dev = {}
        for n in (200, 2000):
            errs = [float(np.mean((mc.solve_ridge_direct(inst, 0.0) - inst.x0) ** 2))
                    for inst in (mc.generate_instance(spec, n, (9, i)) for i in range(20))]
            dev[n] = np.mean(np.abs(np.array(errs) - q))
        assert dev[2000] < dev[200]


class TestRhoHat:
    def test_examples(self):
        assert mc.empirical_rho_hat(np.zeros(5)) == 0.0
        v = np.zeros(10)
        v[[1, 4, 7]] = [1, -1, 1]
        assert mc.empirical_rho_hat(v) == pytest.approx(0.3)

    def test_threshold_must_be_positive(self):
        with pytest.raises(ParameterDomainError):
            mc.empirical_rho_hat(np.ones(3), 0.0)

    def test_below_boundary_uses_every_measurement(self):
        # in the error phase the l1 limit keeps as many nonzeros as measurements
        spec = limit_spec(0.35, 0.15)
        inst = mc.generate_instance(spec, 400, 0)
        x = mc.solve_elastic_net(inst, mc.LIMIT_LAMBDA1, 0.0, mc.scaled_tol(mc.LIMIT_LAMBDA1))
        assert mc.empirical_rho_hat(x) == pytest.approx(0.35, abs=0.01)


class TestTrials:
    def test_perfect_phase(self):
        est = mc.run_trials(limit_spec(0.6, 0.15), 100, 4, seed=1)
        assert est.mse_mean < 1e-10 and est.success_rate == 1.0 and est.excluded == 0
        assert est.kkt_max_violation <= mc.scaled_tol(mc.LIMIT_LAMBDA1)

    def test_reproducible(self):
        spec = EnsembleSpec(alpha=0.4, rho=0.2, lambda1=0.05, sigma_zeta_sq=0.01)
        assert mc.run_trials(spec, 60, 5, seed=3) == mc.run_trials(spec, 60, 5, seed=3)
        assert mc.run_trials(spec, 60, 5, seed=3) != mc.run_trials(spec, 60, 5, seed=4)

    def test_parallel_matches_serial(self):
        spec = EnsembleSpec(alpha=0.4, rho=0.2, lambda1=0.05, sigma_zeta_sq=0.01)
        assert mc.run_trials(spec, 60, 6, seed=3, workers=2) == mc.run_trials(spec, 60, 6, seed=3)

    def test_needs_two_trials(self):
        with pytest.raises(ParameterDomainError):
            mc.run_trials(limit_spec(0.5, 0.1), 20, 1, seed=0)

    def test_too_many_exclusions_fail(self, monkeypatch):
        def stall(*args, **kwargs):
            raise NonConvergenceError("stalled", np.zeros(1), 1.0)
        monkeypatch.setattr(mc, "solve_elastic_net", stall)
        with pytest.raises(SolverFailure):
            mc.run_trials(limit_spec(0.5, 0.1), 20, 4, seed=0)

    def test_penalties_for(self):
        assert mc.penalties_for(limit_spec(0.5, 0.1)) == ("en", 1e-8, 0.0)
        assert mc.penalties_for(EnsembleSpec(0.5, 0.1, lambda1=1.0, lambda2=0.4, limit=True)) == \
            ("en", 1e-8, pytest.approx(4e-9))
        assert mc.penalties_for(EnsembleSpec(0.5, 0.1, lambda1=0.0, lambda2=2.0)) == ("ridge", 0.0, 2.0)

    def test_agrees(self):
        est = mc.McEstimate(mse_mean=1.0, mse_stderr=0.1, rho_hat_mean=0.5, trials=10, kkt_max_violation=0.0)
        assert mc.agrees(est, 1.25) and not mc.agrees(est, 1.35)
        zero = mc.McEstimate(mse_mean=1e-14, mse_stderr=0.0, rho_hat_mean=0.1, trials=10, kkt_max_violation=0.0)
        assert mc.agrees(zero, 0.0)


class TestTransition:
    def test_interpolates_crossing(self):
        assert mc.empirical_transition([0.1, 0.2, 0.3, 0.4], [0, 0.2, 0.6, 1]) == pytest.approx(0.275)

    def test_no_crossing(self):
        assert math.isnan(mc.empirical_transition([0.1, 0.2, 0.3], [0, 0.1, 0.2]))

    def test_bad_grid(self):
        with pytest.raises(ParameterDomainError):
            mc.empirical_transition([0.3, 0.2], [0, 1])
