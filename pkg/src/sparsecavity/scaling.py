"""Critical scaling of the error near the transition and the optimal penalty under noise.

The error vanishes at the critical curve as a power of the distance to it
(``alpha_c - alpha``), of the penalty ``lambda`` or of the noise variance.
With a gapped signal density the power laws turn into ``1/ln`` laws. The
sweeps here solve the cavity equations along one of these directions and fit
the exponent on a window well inside the asymptotic regime.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .boundary import critical_alpha
from .cavity import CavityState, EnsembleSpec, solve, sweep
from .errors import CavityError, ParameterDomainError, SweepError
from .priors import SignalPrior

APPROACH_WINDOW = (1e-4, 1e-2)  # relative distance (alpha_c - alpha) / alpha_c
LAMBDA_WINDOW = (1e-6, 1e-3)
NOISE_WINDOW = (1e-6, 1e-3)
DEFAULT_POINTS = 9
DEFAULT_EN_RATIO = 0.4


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares line ``ln y = exponent * ln x + ln prefactor``."""

    exponent: float
    prefactor: float
    r_squared: float
    window: tuple
    points_used: int
    exponent_stderr: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


@dataclass(frozen=True)
class LogLawFit:
    """Least-squares line ``1/y = slope * ln(1/x) + intercept``."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple
    points_used: int
    slope_stderr: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _line(u, v):
    """Slope, intercept, r^2 and slope standard error of a least-squares line."""
    slope, intercept = np.polyfit(u, v, 1)
    resid = v - (slope * u + intercept)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    sxx = float(np.sum((u - u.mean()) ** 2))
    se = math.sqrt(ss_res / (u.size - 2) / sxx) if sxx > 0 else 0.0
    return float(slope), float(intercept), min(max(r2, 0.0), 1.0), se


def _check_xy(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ParameterDomainError("xs and ys must be 1-d of equal length")
    if xs.size < 4:
        raise ParameterDomainError("a fit needs at least 4 points")
    if np.any(xs <= 0) or np.any(ys <= 0) or not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ParameterDomainError("fit inputs must be positive and finite")
    return xs, ys


def fit_power_law(xs, ys) -> ScalingFit:
    xs, ys = _check_xy(xs, ys)
    slope, intercept, r2, se = _line(np.log(xs), np.log(ys))
    return ScalingFit(slope, math.exp(intercept), r2, (float(xs.min()), float(xs.max())), int(xs.size), se)


def fit_log_law(xs, ys) -> LogLawFit:
    """Fit ``1/y`` against ``ln(1/x)``: the form taken by the gapped-prior laws."""
    xs, ys = _check_xy(xs, ys)
    slope, intercept, r2, se = _line(np.log(1.0 / xs), 1.0 / ys)
    return LogLawFit(slope, intercept, r2, (float(xs.min()), float(xs.max())), int(xs.size), se)


def expected_exponent(regime: str, penalty: str, gamma: float) -> float:
    """Exponents as tabulated for the two penalties (density ``~|x|^gamma`` at 0).

    The Elastic Net ``lambda`` entry is the tabulated ``2/(2+gamma)``; the
    equations solved here give ``4/(3+gamma)`` for both penalties.
    """
    if regime == "alpha":
        return 2.0 / (1.0 + gamma)
    if regime == "noise":
        return 2.0 / (3.0 + gamma)
    if regime == "lambda":
        return 4.0 / (3.0 + gamma) if penalty == "bp" else 2.0 / (2.0 + gamma)
    raise ParameterDomainError(f"unknown regime {regime!r}")


def _ratio(penalty: str, lambda_ratio: float | None) -> float:
    if penalty == "bp":
        return 0.0
    if penalty == "en":
        return DEFAULT_EN_RATIO if lambda_ratio is None else float(lambda_ratio)
    raise ParameterDomainError(f"unknown penalty {penalty!r}")


def _grid(window, points):
    lo, hi = window
    if not 0 < lo < hi:
        raise ParameterDomainError("window must satisfy 0 < low < high")
    return np.logspace(math.log10(lo), math.log10(hi), points)


def _collect(xs, results, what):
    good_x, good_q, failed = [], [], []
    for x, res in zip(xs, results):
        if isinstance(res, CavityState) and res.q > 0:
            good_x.append(float(x))
            good_q.append(res.q)
        else:
            failed.append((float(x), str(res) if not isinstance(res, CavityState) else "zero error"))
    if failed:
        raise SweepError(f"{what} sweep", failed, list(zip(good_x, good_q)))
    return np.array(good_x), np.array(good_q)


def _fit(prior, xs, qs):
    return fit_log_law(xs, qs) if prior.kind == "gapped" else fit_power_law(xs, qs)


def approach_sweep(penalty, rho, prior, window=APPROACH_WINDOW, points=DEFAULT_POINTS, lambda_ratio=None):
    """Noiseless ``vartheta -> 0`` error against the absolute distance ``alpha_c - alpha``."""
    r = _ratio(penalty, lambda_ratio)
    alpha_c, _ = critical_alpha(rho, r, prior)
    rel = _grid(window, points)[::-1]  # approach the boundary so continuation moves toward it
    base = EnsembleSpec(alpha=alpha_c, rho=rho, lambda1=1.0, lambda2=r, prior=prior, limit=True)
    results = sweep(base, "alpha", alpha_c * (1.0 - rel))
    return _collect(alpha_c * rel, results, "alpha")


def exponent_alpha_approach(penalty: str, rho: float, prior: SignalPrior, window=APPROACH_WINDOW,
                            points=DEFAULT_POINTS, lambda_ratio=None):
    """Fit the error against ``alpha_c - alpha`` (power law, or 1/ln law if gapped)."""
    xs, qs = approach_sweep(penalty, rho, prior, window, points, lambda_ratio)
    return _fit(prior, xs, qs)


def noise_sweep(penalty, rho, prior, window=NOISE_WINDOW, points=DEFAULT_POINTS, lambda_ratio=None):
    r = _ratio(penalty, lambda_ratio)
    alpha_c, _ = critical_alpha(rho, r, prior)
    noise = _grid(window, points)
    base = EnsembleSpec(alpha=alpha_c, rho=rho, lambda1=1.0, lambda2=r, prior=prior, limit=True)
    results = sweep(base, "sigma_zeta_sq", noise)
    return _collect(noise, results, "noise")


def exponent_noise(penalty: str, rho: float, prior: SignalPrior, window=NOISE_WINDOW,
                   points=DEFAULT_POINTS, lambda_ratio=None):
    """At ``alpha = alpha_c`` and ``vartheta -> 0``, fit the error against the noise variance."""
    xs, qs = noise_sweep(penalty, rho, prior, window, points, lambda_ratio)
    return _fit(prior, xs, qs)


def lambda_sweep(penalty, rho, prior, window=LAMBDA_WINDOW, points=DEFAULT_POINTS, lambda_ratio=None,
                 sigma_zeta_sq=0.0, alpha=None):
    r = _ratio(penalty, lambda_ratio)
    if alpha is None:
        alpha, _ = critical_alpha(rho, r, prior)
    lams = _grid(window, points)
    out = []
    prev = None
    for lam in lams:
        spec = EnsembleSpec(alpha=alpha, rho=rho, lambda1=lam, lambda2=r * lam,
                            sigma_zeta_sq=sigma_zeta_sq, prior=prior)
        try:
            prev = solve(spec, guess=prev)
            out.append(prev)
        except CavityError as exc:  # collected and reported by _collect
            prev = None
            out.append(exc)
    return _collect(lams, out, "lambda")


def exponent_lambda(penalty: str, rho: float, prior: SignalPrior, window=LAMBDA_WINDOW,
                    points=DEFAULT_POINTS, lambda_ratio=None):
    """At ``alpha = alpha_c`` without noise, fit the error against ``lambda`` (``sigma^2 = 1``).

    For the Elastic Net ``lambda`` is ``lambda1`` with ``lambda2 / lambda1`` held fixed.
    """
    xs, qs = lambda_sweep(penalty, rho, prior, window, points, lambda_ratio)
    return _fit(prior, xs, qs)


# ---------------------------------------------------------------------------
# optimal penalty


@dataclass(frozen=True)
class OptimalLambda:
    """``lambda_star = 0`` with ``monotone=True`` means any penalty increases the error."""

    lambda_star: float
    q_min: float
    monotone: bool
    q_at_zero: float

    def to_dict(self):
        return asdict(self)


def error_vs_lambda(rho, alpha, sigma_zeta_sq, prior, lambdas, lambda_ratio=0.0):
    """Error at each penalty on a grid, solved with continuation in ``lambda``."""
    out = []
    prev = None
    for lam in lambdas:
        spec = EnsembleSpec(alpha=alpha, rho=rho, lambda1=lam, lambda2=lambda_ratio * lam,
                            sigma_zeta_sq=sigma_zeta_sq, prior=prior)
        prev = solve(spec, guess=prev)
        out.append(prev.q)
    return np.array(out)


def optimal_lambda(rho: float, alpha: float, sigma_zeta_sq: float, prior: SignalPrior,
                   lambda_range=(1e-9, 1.0), grid_points=28, lambda_ratio=0.0) -> OptimalLambda:
    """Penalty minimizing the error at fixed noise.

    The error is tabulated on a log grid of ``lambda`` and compared with the
    ``vartheta -> 0`` value. If it increases along the whole grid the result
    is ``lambda_star = 0`` flagged monotone; otherwise a golden-section
    search in ``ln lambda`` refines the grid minimum.
    """
    if not sigma_zeta_sq > 0:
        raise ParameterDomainError("optimal_lambda needs sigma_zeta_sq > 0")
    q0 = solve(EnsembleSpec(alpha=alpha, rho=rho, lambda1=1.0, lambda2=lambda_ratio,
                            sigma_zeta_sq=sigma_zeta_sq, prior=prior, limit=True)).q
    lams = _grid(lambda_range, grid_points)
    qs = error_vs_lambda(rho, alpha, sigma_zeta_sq, prior, lams, lambda_ratio)
    if np.all(np.diff(qs) > 0) and qs[0] > q0:
        return OptimalLambda(0.0, q0, True, q0)
    i = int(np.argmin(qs))
    if qs[i] >= q0 * (1 - 1e-12):
        # lower than every finite penalty tried; no interior minimum
        return OptimalLambda(0.0, q0, False, q0)
    if i == len(lams) - 1:
        return OptimalLambda(float(lams[i]), float(qs[i]), False, q0)
    logs = np.log(lams)
    lo = logs[i - 1] if i > 0 else logs[0] - 2.0
    cache = {}

    def f(u):
        if u not in cache:
            lam = math.exp(u)
            cache[u] = solve(EnsembleSpec(alpha=alpha, rho=rho, lambda1=lam, lambda2=lambda_ratio * lam,
                                          sigma_zeta_sq=sigma_zeta_sq, prior=prior)).q
        return cache[u]

    res = optimize.minimize_scalar(f, bracket=(lo, logs[i], logs[i + 1]), method="golden", tol=1e-6)
    return OptimalLambda(float(math.exp(res.x)), float(res.fun), False, q0)


def tradeoff_slope(rho: float, alpha_factor: float, noise_levels: Sequence[float], prior: SignalPrior,
                   lambda_ratio=0.0):
    """Fit ``ln lambda_star`` against ``ln sigma_zeta^2`` at ``alpha = alpha_factor * alpha_c``."""
    alpha_c, _ = critical_alpha(rho, lambda_ratio, prior)
    alpha = alpha_factor * alpha_c
    opts = [optimal_lambda(rho, alpha, s, prior, lambda_ratio=lambda_ratio) for s in noise_levels]
    stars = [o.lambda_star for o in opts]
    if any(s <= 0 for s in stars):
        raise SweepError("trade-off", [(s, "no interior optimum") for s, o in zip(noise_levels, opts)
                                       if o.lambda_star <= 0], [])
    return fit_power_law(noise_levels, stars), opts


def certify_monotone(rho: float, alpha: float, sigma_zeta_sq: float, prior: SignalPrior,
                     lambdas=None, lambda_ratio=0.0) -> bool:
    """True when the error increases strictly along a log grid of ``lambda`` starting at 0."""
    if lambdas is None:
        lambdas = _grid((1e-9, 1.0), 28)
    q0 = solve(EnsembleSpec(alpha=alpha, rho=rho, lambda1=1.0, lambda2=lambda_ratio,
                            sigma_zeta_sq=sigma_zeta_sq, prior=prior, limit=True)).q
    qs = error_vs_lambda(rho, alpha, sigma_zeta_sq, prior, lambdas, lambda_ratio)
    return bool(qs[0] > q0 and np.all(np.diff(qs) > 0))
