"""Self-consistent cavity solution for Ridge, Basis Pursuit and the Elastic Net.

Every coordinate of the estimate behaves like the solution of a scalar
problem: the true value ``x0`` is observed through Gaussian noise of variance
``sigma_xi^2`` and passed through the proximal map of the penalty. For the
Elastic Net that map is ``soft(x0 + xi; theta) / c`` with
``theta = lambda1 * sigma_eff^2`` and ``c = 1 + lambda2 * sigma_eff^2``.

Writing ``tau = theta / sigma_xi`` and ``r = lambda2 / lambda1``, the
macroscopic state is fixed by two equations in ``(tau, sigma_xi)``::

    alpha * (1 - sigma_zeta^2 / sigma_xi^2) = Q(tau, sigma_xi)
    alpha * c * (1 - vartheta / theta)      = rho_hat(tau, sigma_xi)

where ``Q`` is the mean squared error of the scalar channel in units of
``sigma_xi^2`` and ``rho_hat`` its fraction of nonzero outputs. Basis
Pursuit is ``r = 0``. ``vartheta = lambda1 * sigma^2``; in the limit mode
(``vartheta -> 0``) the penalty term is dropped. That mode is taken as
``sigma^2 -> 0`` at fixed ``lambda``, so ``sigma_eff^2 = theta / lambda``
stays finite in both phases (``lambda = 1`` when none is given).

The reported ``theta`` is always the threshold acting on ``x0 + xi`` before
the ridge rescaling, so ``tau = theta / sigma_xi`` holds for every penalty.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .boundary import boundary_a2, critical_alpha, en_excess
from .errors import ParameterDomainError, PhaseDomainError, SolverFailure
from .priors import SignalPrior
from .scalar import big_a0, big_a2, gauss_ccdf, psi_shrink, psi_theta, psi_xi, tail_moment

RESIDUAL_TOL = 1e-10
_POINTS_PER_DECADE = 4
_SIGMA_FLOOR = 1e-12  # relative to the signal scale; smaller errors count as zero


@dataclass(frozen=True)
class EnsembleSpec:
    """Macroscopic parameters of one reconstruction problem.

    ``limit=True`` selects the ``vartheta -> 0`` equations; a spec with
    ``lambda1 = lambda2 = 0`` is treated the same way.
    """

    alpha: float
    rho: float
    lambda1: float = 1.0
    lambda2: float = 0.0
    sigma_sq: float = 1.0
    sigma_zeta_sq: float = 0.0
    prior: SignalPrior = field(default_factory=SignalPrior.gaussian)
    limit: bool = False

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ParameterDomainError(f"alpha={self.alpha} outside (0, 1]")
        if not 0.0 <= self.rho <= 1.0:
            raise ParameterDomainError(f"rho={self.rho} outside [0, 1]")
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise ParameterDomainError("penalties must be nonnegative")
        if not self.sigma_sq > 0:
            raise ParameterDomainError("sigma_sq must be positive")
        if not self.sigma_zeta_sq >= 0:
            raise ParameterDomainError("sigma_zeta_sq must be nonnegative")

    @property
    def is_limit(self) -> bool:
        return self.limit or (self.lambda1 == 0.0 and self.lambda2 == 0.0)

    @property
    def vartheta(self) -> float:
        """``lambda1 * sigma^2``; zero in the limit mode."""
        return 0.0 if self.is_limit else self.lambda1 * self.sigma_sq

    @property
    def penalty(self) -> str:
        if self.lambda1 == 0.0 and self.lambda2 > 0.0:
            return "ridge"
        return "bp" if self.lambda2 == 0.0 else "en"

    @property
    def lambda_ratio(self) -> float:
        if self.lambda2 == 0.0:
            return 0.0
        if self.lambda1 == 0.0:
            raise ParameterDomainError("lambda2/lambda1 undefined with lambda1 = 0")
        return self.lambda2 / self.lambda1

    def with_(self, **changes) -> "EnsembleSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["prior"] = self.prior.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        d = dict(d)
        if "prior" in d and not isinstance(d["prior"], SignalPrior):
            d["prior"] = SignalPrior.from_dict(d["prior"])
        return cls(**d)


@dataclass(frozen=True)
class CavityState:
    """Macroscopic solution.

    ``phase`` is ``"perfect"`` (zero error without noise), ``"error"`` or
    ``"ridge"``. ``multiple_roots`` is set when the root scan saw more than
    one crossing; ``residuals`` are the two equation residuals.
    """

    tau: float
    sigma_xi_sq: float
    theta: float
    rho_hat: float
    chi_bar: float
    sigma_eff_sq: float
    q: float
    phase: str = "error"
    multiple_roots: bool = False
    residuals: tuple = (0.0, 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["residuals"] = list(self.residuals)
        return d


# ---------------------------------------------------------------------------
# ridge


def _ridge_lambda(spec: EnsembleSpec) -> float:
    lam = spec.lambda2 if spec.lambda2 > 0 else spec.lambda1
    if lam > 0:
        return lam
    if spec.is_limit:
        return 1.0
    raise ParameterDomainError("ridge needs lambda2 > 0 unless the limit mode is selected")


def solve_ridge(spec: EnsembleSpec) -> CavityState:
    """Closed-form state of the quadratic penalty ``(lambda/2)|x|^2``.

    ``lambda`` is ``spec.lambda2``. The estimate is ``(x0 + xi) / (1 + theta)``;
    in the limit mode ``theta = 1/alpha - 1`` and without noise
    ``sigma_xi^2 = (1 - alpha) rho [x0^2] / alpha``.
    """
    alpha, rho = spec.alpha, spec.rho
    lam = _ridge_lambda(spec)
    vt = 0.0 if spec.is_limit else lam * spec.sigma_sq
    m2 = spec.prior.moments().m2 if rho > 0 else 0.0
    # alpha (1 + theta)(theta - vt) = theta
    b = alpha - 1.0 - alpha * vt
    theta = (-b + math.sqrt(b * b + 4.0 * alpha * alpha * vt)) / (2.0 * alpha)
    gain = alpha * (1.0 + theta) ** 2
    num = spec.sigma_zeta_sq * gain + theta * theta * rho * m2
    den = gain - 1.0
    if num == 0.0:
        sxi = 0.0
    elif den <= 0.0:
        raise PhaseDomainError("ridge error diverges at alpha = 1 with noise and no penalty")
    else:
        sxi = num / den
    q = max(alpha * (sxi - spec.sigma_zeta_sq), 0.0)
    s_eff = theta / lam
    tau = theta / math.sqrt(sxi) if sxi > 0 else math.inf
    return CavityState(tau=tau, sigma_xi_sq=sxi, theta=theta, rho_hat=1.0,
                       chi_bar=s_eff / (1.0 + theta), sigma_eff_sq=s_eff, q=q,
                       phase="ridge")


def ridge_threshold_rates(spec: EnsembleSpec, threshold: float) -> tuple[float, float]:
    """False positive and false negative rates of thresholding the ``vartheta -> 0`` ridge estimate.

    Each coordinate of the minimum-norm estimate is Gaussian with mean
    ``alpha * x0`` and variance ``(1 - alpha) alpha rho [x0^2]``; a coordinate
    is declared nonzero when its magnitude exceeds ``threshold``.
    """
    if not threshold >= 0:
        raise ParameterDomainError("threshold must be nonnegative")
    alpha = spec.alpha
    var = (1.0 - alpha) * alpha * spec.rho * spec.prior.moments().m2
    if math.isinf(threshold):
        return 0.0, 1.0
    if var == 0.0:
        fpr = 0.0
        sd = 0.0
    else:
        sd = math.sqrt(var)
        fpr = float(2.0 * gauss_ccdf(threshold / sd))
    if threshold == 0.0:
        return (1.0 if var > 0 else 0.0), 0.0
    if sd == 0.0:
        # deterministic estimate alpha * x0
        t, w = spec.prior.rule(1.0)
        return fpr, float(np.dot(w, alpha * np.abs(t) <= threshold))
    # P(|alpha x0 + sd Z| <= thr) = psi_theta evaluated at the scaled mean
    t, w = spec.prior.rule(sd / alpha, knee=threshold / sd)
    fnr = float(np.dot(w, psi_theta(t, threshold / sd)))
    return fpr, fnr


# ---------------------------------------------------------------------------
# the scalar channel averaged over the prior


class _Channel:
    """Residuals of the two state equations for one spec."""

    def __init__(self, spec: EnsembleSpec):
        if spec.penalty == "ridge":
            raise ParameterDomainError("use solve_ridge for the quadratic penalty")
        self.spec = spec
        self.alpha = spec.alpha
        self.rho = spec.rho
        self.r = spec.lambda_ratio
        self.vt = spec.vartheta
        self.noise = spec.sigma_zeta_sq
        self.prior = spec.prior
        self.excess = en_excess(self.r, spec.prior) if self.r > 0 else 0.0

    def _rule(self, tau, sigma):
        return self.prior.rule(sigma, knee=tau)

    def rho_hat(self, tau, sigma):
        out = float(big_a0(self.rho, tau))
        if self.rho > 0 and sigma > 0:
            t, w = self._rule(tau, sigma)
            if t.size:
                out -= self.rho * float(np.dot(w, psi_theta(t, tau)))
        return out

    def c(self, tau, sigma):
        return 1.0 + self.r * tau * sigma

    def f2(self, tau, sigma):
        c = self.c(tau, sigma)
        if self.vt > 0:
            theta = tau * sigma
            pen = 1.0 - self.vt / theta if theta > 0 else -math.inf
        else:
            pen = 1.0
        return self.alpha * c * pen - self.rho_hat(tau, sigma)

    def q_norm(self, tau, sigma):
        """Mean squared error of the scalar channel over ``sigma_xi^2``."""
        c = self.c(tau, sigma)
        val = float(big_a2(self.rho, tau)) + self.rho * tau * tau * self.excess
        if self.rho > 0 and sigma > 0:
            t, w = self._rule(tau, sigma)
            if t.size:
                val -= self.rho * float(np.dot(w, psi_xi(t, tau)))
                if self.r > 0:
                    val -= 2.0 * self.rho * self.r * tau * sigma * float(np.dot(w, psi_shrink(t, tau)))
        return val / (c * c)

    def f1(self, tau, sigma):
        return self.alpha * (1.0 - self.noise / (sigma * sigma)) - self.q_norm(tau, sigma)

    def residuals(self, tau, sigma):
        return self.f1(tau, sigma), self.f2(tau, sigma)

    # -- nested solve ----------------------------------------------------

    def tau_of_sigma(self, sigma):
        """Root of the sparsity equation at fixed ``sigma_xi`` (increasing in tau)."""
        lo = self.vt / sigma if self.vt > 0 else 0.0
        f_lo = self.f2(lo, sigma) if lo > 0 else self.f2(0.0, sigma)
        if f_lo >= 0.0:
            return lo
        hi = max(2.0 * lo, 1.0)
        # the threshold tau * sigma may have to reach the signal scale itself
        cap = max(1e8, 1e3 * (self.prior.support()[1] + 1.0) / sigma)
        while self.f2(hi, sigma) <= 0.0:
            lo, hi = hi, 2.0 * hi
            if hi > cap:
                raise SolverFailure("sparsity equation has no root", sigma=sigma, bracket=(lo, hi))
        return optimize.brentq(self.f2, lo, hi, args=(sigma,), xtol=1e-300, rtol=4 * np.finfo(float).eps,
                               maxiter=200)

    def g(self, log_sigma):
        sigma = math.exp(log_sigma)
        return self.f1(self.tau_of_sigma(sigma), sigma)

    def scale(self):
        m2 = self.prior.moments().m2
        return math.sqrt(max(self.rho * m2 / self.alpha, 1e-300) + self.noise) or 1.0

    def bracket_range(self):
        ref = max(self.scale(), self.prior.scale * self.rho, math.sqrt(self.noise), 1e-300)
        if self.noise > 0:
            lo = math.sqrt(self.noise) * (1.0 + 1e-9)
        elif self.vt > 0:
            lo = min(1e-4 * self.vt, _SIGMA_FLOOR * ref)
        else:
            lo = _SIGMA_FLOOR * max(ref, self.prior.scale)
        hi = 10.0 * max(ref, self.vt, self.prior.scale)
        return lo, hi

    def scan_roots(self):
        """All sign changes of the error equation along ``log sigma_xi``.

        Returns ``(roots, g_lo)`` with roots sorted by increasing sigma and
        ``g_lo`` the residual at the bottom of the scan.
        """
        lo, hi = self.bracket_range()
        x_lo, x_hi = math.log(lo), math.log(hi)
        g_hi = self.g(x_hi)
        grow = 0
        while g_hi <= 0.0:
            x_hi += math.log(4.0)
            g_hi = self.g(x_hi)
            grow += 1
            if grow > 40:
                raise SolverFailure("error equation stays negative", sigma_hi=math.exp(x_hi), residual=g_hi)
        n = max(8, int(math.ceil((x_hi - x_lo) / math.log(10.0) * _POINTS_PER_DECADE)))
        xs = np.linspace(x_lo, x_hi, n + 1)
        gs = [self.g(x) for x in xs[:-1]] + [g_hi]
        roots = []
        for i in range(n):
            a, b = gs[i], gs[i + 1]
            if a == 0.0:
                roots.append((xs[i], a < b))
            elif a * b < 0.0:
                x = optimize.brentq(self.g, xs[i], xs[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps,
                                    maxiter=200)
                roots.append((x, a < b))
        return roots, gs[0]

    def newton(self, tau, sigma, max_iter=40):
        """Damped Newton on ``(tau, log sigma)``; returns None when it stalls."""
        x = np.array([tau, math.log(sigma)])

        def resid(v):
            t, s = v[0], math.exp(v[1])
            if t < 0 or (self.vt > 0 and t * s <= self.vt) or s * s <= self.noise:
                return None
            return np.array(self.residuals(t, s))

        f = resid(x)
        if f is None:
            return None
        for _ in range(max_iter):
            norm = np.max(np.abs(f))
            if norm < 1e-13:
                break
            jac = np.empty((2, 2))
            for j in range(2):
                h = 1e-6 * max(1.0, abs(x[j]))
                e = np.zeros(2)
                e[j] = h
                fp, fm = resid(x + e), resid(x - e)
                if fp is None or fm is None:
                    return None
                jac[:, j] = (fp - fm) / (2 * h)
            try:
                step = np.linalg.solve(jac, -f)
            except np.linalg.LinAlgError:
                return None
            t = 1.0
            while t > 1e-6:
                trial = x + t * step
                ft = resid(trial)
                if ft is not None and np.max(np.abs(ft)) < norm:
                    x, f = trial, ft
                    break
                t *= 0.5
            else:
                break
        if np.max(np.abs(f)) > RESIDUAL_TOL:
            return None
        return float(x[0]), math.exp(x[1])


# ---------------------------------------------------------------------------
# states


def _lambda_unit(spec: EnsembleSpec) -> float:
    return spec.lambda1 if spec.lambda1 > 0 else 1.0


def _state(ch: _Channel, tau, sigma, multiple=False) -> CavityState:
    spec = ch.spec
    theta = tau * sigma
    c = ch.c(tau, sigma)
    rho_hat = ch.rho_hat(tau, sigma)
    s_eff = theta / _lambda_unit(spec)
    res = ch.residuals(tau, sigma)
    return CavityState(tau=float(tau), sigma_xi_sq=sigma * sigma, theta=theta, rho_hat=rho_hat,
                       chi_bar=rho_hat * s_eff / c, sigma_eff_sq=s_eff,
                       q=max(spec.alpha * (sigma * sigma - spec.sigma_zeta_sq), 0.0),
                       phase="error", multiple_roots=multiple, residuals=tuple(float(v) for v in res))


def _perfect_tau(spec: EnsembleSpec, alpha_c: float, tau_c: float, excess: float) -> float:
    rho, alpha = spec.rho, spec.alpha
    if rho == 0.0:
        if alpha >= 1.0:
            return 0.0
        return optimize.brentq(lambda t: 2.0 * tail_moment(2, t) - alpha, 0.0, 40.0, xtol=1e-15)
    if alpha == alpha_c:
        return tau_c

    def f(t):
        return float(boundary_a2(rho, t, excess)) - alpha

    hi = max(2.0 * tau_c, 1.0)
    while f(hi) <= 0.0:
        hi *= 2.0
    return optimize.brentq(f, tau_c, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def _perfect_state(spec: EnsembleSpec) -> CavityState:
    r = spec.lambda_ratio
    excess = en_excess(r, spec.prior) if r > 0 else 0.0
    alpha_c, tau_c = critical_alpha(spec.rho, r, spec.prior)
    tau = _perfect_tau(spec, alpha_c, tau_c, excess)
    return CavityState(tau=tau, sigma_xi_sq=0.0, theta=0.0, rho_hat=float(big_a0(spec.rho, tau)),
                       chi_bar=0.0, sigma_eff_sq=0.0, q=0.0, phase="perfect")


def solve_bp_perfect_phase(spec: EnsembleSpec) -> CavityState:
    """State above the critical curve without noise in the limit mode.

    ``tau`` is the root of ``alpha = A2(tau)`` beyond the critical threshold.
    """
    if spec.sigma_zeta_sq != 0.0:
        raise PhaseDomainError("the perfect phase needs sigma_zeta_sq = 0")
    if not spec.is_limit:
        raise PhaseDomainError("the perfect phase exists only in the limit mode")
    alpha_c, _ = critical_alpha(spec.rho, spec.lambda_ratio, spec.prior)
    if spec.alpha <= alpha_c:
        raise PhaseDomainError(f"alpha={spec.alpha} is not above alpha_c={alpha_c}; use solve_bp_full")
    return _perfect_state(spec)


def _zero_signal_state(spec: EnsembleSpec) -> CavityState:
    if spec.is_limit:
        return _perfect_state(spec)
    # nothing crosses the threshold: x_hat = 0 and sigma_eff^2 = sigma^2
    s_eff = spec.sigma_sq
    return CavityState(tau=math.inf, sigma_xi_sq=0.0, theta=spec.lambda1 * s_eff, rho_hat=0.0,
                       chi_bar=0.0, sigma_eff_sq=s_eff, q=0.0, phase="perfect")


def _solve(spec: EnsembleSpec, guess: CavityState | None = None) -> CavityState:
    if spec.rho == 0.0 and spec.sigma_zeta_sq == 0.0:
        return _zero_signal_state(spec)
    ch = _Channel(spec)
    noiseless_limit = spec.is_limit and spec.sigma_zeta_sq == 0.0
    if noiseless_limit:
        alpha_c, _ = critical_alpha(spec.rho, ch.r, spec.prior)
        if spec.alpha >= alpha_c:
            return _perfect_state(spec)
    if guess is not None and guess.sigma_xi_sq > 0 and math.isfinite(guess.tau):
        hit = ch.newton(guess.tau, math.sqrt(guess.sigma_xi_sq))
        if hit is not None:
            return _state(ch, *hit)
    roots, g_lo = ch.scan_roots()
    rising = [x for x, up in roots if up]
    if not rising:
        if noiseless_limit and g_lo > 0:
            return _perfect_state(spec)
        raise SolverFailure("no root of the state equations in the scanned region",
                            roots=[math.exp(x) for x, _ in roots], residual_at_floor=g_lo)
    sigma = math.exp(rising[0])
    tau = ch.tau_of_sigma(sigma)
    hit = ch.newton(tau, sigma, max_iter=6)
    if hit is not None and abs(hit[1] / sigma - 1.0) < 1e-6:
        tau, sigma = hit
    state = _state(ch, tau, sigma, multiple=len(roots) > 1)
    if max(abs(v) for v in state.residuals) > RESIDUAL_TOL:
        raise SolverFailure("state equations not satisfied to tolerance", residuals=state.residuals,
                            tau=tau, sigma_xi=sigma)
    return state


def solve_bp_full(spec: EnsembleSpec, guess: CavityState | None = None) -> CavityState:
    """Basis Pursuit state for any noise level and penalty.

    In the limit mode without noise and at or above the critical curve the
    perfect-phase state is returned. ``guess`` (a neighbouring solution)
    enables a Newton solve before falling back to the root scan.
    """
    if spec.lambda2 != 0.0:
        raise ParameterDomainError("Basis Pursuit has lambda2 = 0; use solve_en_full")
    return _solve(spec, guess)


def solve_en_full(spec: EnsembleSpec, guess: CavityState | None = None) -> CavityState:
    """Elastic Net state; identical to :func:`solve_bp_full` when ``lambda2 = 0``."""
    if spec.lambda1 == 0.0 and spec.lambda2 > 0.0:
        raise ParameterDomainError("lambda1 = 0 is the ridge penalty; use solve_ridge")
    return _solve(spec, guess)


def solve(spec: EnsembleSpec, guess: CavityState | None = None) -> CavityState:
    """Dispatch on the penalty encoded in ``spec``."""
    if spec.penalty == "ridge":
        return solve_ridge(spec)
    return _solve(spec, guess)


def sweep(spec: EnsembleSpec, name: str, values: Sequence[float]) -> list:
    """Solve along one parameter with continuation from the previous point.

    Returns one entry per value: a :class:`CavityState`, or the exception
    raised at that point.
    """
    out = []
    prev = None
    for v in values:
        try:
            state = solve(spec.with_(**{name: float(v)}), guess=prev)
            prev = state if state.phase == "error" else None
            out.append(state)
        except (SolverFailure, PhaseDomainError, ParameterDomainError) as exc:
            prev = None
            out.append(exc)
    return out


def scalar_channel_mse(theta: float, sigma_xi: float, rho: float, prior: SignalPrior,
                       lambda_ratio: float = 0.0) -> float:
    """Mean squared error of ``soft(x0 + xi; theta) / (1 + r theta)`` over the signal and noise."""
    tau = theta / sigma_xi
    ch = _Channel(EnsembleSpec(alpha=1.0, rho=rho, lambda1=1.0, lambda2=lambda_ratio, prior=prior))
    return ch.q_norm(tau, sigma_xi) * sigma_xi * sigma_xi


def scalar_channel_nonzero(theta: float, sigma_xi: float, rho: float, prior: SignalPrior) -> float:
    """Probability that ``soft(x0 + xi; theta)`` is nonzero."""
    ch = _Channel(EnsembleSpec(alpha=1.0, rho=rho, prior=prior))
    return ch.rho_hat(theta / sigma_xi, sigma_xi)
