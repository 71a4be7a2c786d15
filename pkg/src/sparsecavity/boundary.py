"""Critical curve alpha_c(rho) of Basis Pursuit and the Elastic Net.

On the curve the normalized error ``A2`` of the noiseless channel meets the
fraction of nonzero outputs ``A0``. Both are functions of the reduced
threshold ``tau``; eliminating ``tau`` gives the curve, and sweeping ``tau``
gives it in parametric form.

For the Elastic Net the nonzero entries pick up an extra error
``rho * tau^2 * K`` with ``K = 2 r [|x0|] + r^2 [x0^2]`` and
``r = lambda2 / lambda1``; ``K = 0`` is Basis Pursuit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError
from .priors import SignalPrior
from .scalar import big_a0, big_a2, gauss_ccdf, tail_moment


@dataclass(frozen=True)
class BoundaryPoint:
    tau_c: float
    alpha_c: float
    rho_c: float


def en_excess(lambda_ratio: float, prior: SignalPrior) -> float:
    """Coefficient K of the extra ``rho * tau^2 * K`` error the ridge term adds."""
    if lambda_ratio < 0:
        raise ParameterDomainError("lambda ratio must be nonnegative")
    if lambda_ratio == 0:
        return 0.0
    m = prior.moments()
    return 2.0 * lambda_ratio * m.m1_abs + lambda_ratio ** 2 * m.m2


def boundary_a2(rho, tau, excess: float = 0.0):
    """``A2`` including the Elastic Net excess."""
    tau = np.asarray(tau, dtype=float)
    return big_a2(rho, tau) + rho * tau * tau * excess


def _parametric(tau: float, excess: float) -> BoundaryPoint:
    if tau == 0.0:
        return BoundaryPoint(0.0, 1.0, 1.0)
    g1 = float(tail_moment(1, tau))
    ccdf = float(gauss_ccdf(tau))
    k = 1.0 + excess
    den = k * tau + 2.0 * g1
    rho = 2.0 * g1 / den
    alpha = 2.0 * (k * tau * ccdf + g1) / den
    return BoundaryPoint(float(tau), alpha, rho)


def bp_boundary_parametric(tau: float) -> BoundaryPoint:
    """Point of the Basis Pursuit curve labelled by the critical threshold ``tau``."""
    if not tau >= 0:
        raise ParameterDomainError("tau must be nonnegative")
    return _parametric(float(tau), 0.0)


def en_boundary_parametric(tau: float, lambda_ratio: float, prior: SignalPrior) -> BoundaryPoint:
    if not tau >= 0:
        raise ParameterDomainError("tau must be nonnegative")
    return _parametric(float(tau), en_excess(lambda_ratio, prior))


def _invert(rho: float, excess: float) -> tuple[float, float]:
    if not 0.0 < rho <= 1.0:
        raise ParameterDomainError(f"rho={rho} outside (0, 1]")
    if rho == 1.0:
        return 1.0, 0.0
    lo, hi = 0.0, 1.0
    while _parametric(hi, excess).rho_c > rho:
        lo, hi = hi, 2.0 * hi
        if hi > 64.0:
            raise ParameterDomainError(f"rho={rho} too small to resolve")
    log_rho = math.log(rho)
    # bisect to the last representable midpoint
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if math.log(_parametric(mid, excess).rho_c) > log_rho:
            lo = mid
        else:
            hi = mid
    tau = 0.5 * (lo + hi)
    # alpha from the given rho so the A0 equation holds exactly
    return float(big_a0(rho, tau)), tau


def bp_alpha_c(rho: float) -> tuple[float, float]:
    """``(alpha_c, tau_c)`` of Basis Pursuit at sparsity ``rho``."""
    return _invert(float(rho), 0.0)


def en_boundary(rho: float, lambda_ratio: float, prior: SignalPrior) -> tuple[float, float]:
    """``(alpha_c, tau_c)`` of the Elastic Net with ``lambda2 / lambda1 = lambda_ratio``."""
    return _invert(float(rho), en_excess(lambda_ratio, prior))


def boundary_residuals(alpha: float, rho: float, tau: float, excess: float = 0.0) -> tuple[float, float]:
    """Residuals of the two boundary equations (error balance, sparsity balance)."""
    return (float(alpha - boundary_a2(rho, tau, excess)), float(alpha - big_a0(rho, tau)))


def bp_sparse_asymptote(alpha: float) -> float:
    """Extreme-sparsity form ``rho ~ alpha / (2 ln(1/alpha))`` of the curve."""
    if not 0.0 < alpha < 1.0:
        raise ParameterDomainError("alpha must lie in (0, 1)")
    return alpha / (2.0 * math.log(1.0 / alpha))


def critical_alpha(rho: float, lambda_ratio: float = 0.0,
                   prior: SignalPrior | None = None) -> tuple[float, float]:
    """``(alpha_c, tau_c)`` for either penalty; ``rho = 0`` gives ``(0, inf)``."""
    if rho == 0.0:
        return 0.0, math.inf
    if lambda_ratio == 0.0:
        return bp_alpha_c(rho)
    return en_boundary(rho, lambda_ratio, prior or SignalPrior.gaussian())
