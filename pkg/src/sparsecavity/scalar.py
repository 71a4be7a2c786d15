"""Elementary functions of the scalar soft-threshold channel.

Convention: ``gauss_ccdf`` is the *upper* tail ``P(Z > x)`` of a standard
normal. Every formula in the package is written in terms of it.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import special

SQRT2 = np.sqrt(2.0)
INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

# Above this point the tail moments are evaluated by Gauss-Laguerre on the
# scaled integral instead of the closed forms, which cancel catastrophically.
_TAIL_SWITCH = 1.5
_LAGUERRE_NODES = 80


def gauss_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return INV_SQRT_2PI * np.exp(-0.5 * x * x)


def gauss_ccdf(x):
    """Standard normal upper tail ``P(Z > x)``."""
    x = np.asarray(x, dtype=float)
    return 0.5 * special.erfc(x / SQRT2)


def mills_ratio(x):
    """``gauss_ccdf(x) / gauss_pdf(x)``, accurate for large positive x."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.pi / 2.0) * special.erfcx(x / SQRT2)


@lru_cache(maxsize=None)
def _laguerre(k: int):
    nodes, weights = special.roots_genlaguerre(_LAGUERRE_NODES, k)
    return nodes, weights


def tail_moment(k: int, t):
    """``E[(Z - t)_+^k]`` for k in {0, 1, 2}.

    k=0 is ``gauss_ccdf``; k=1 is ``pdf - t*ccdf``; k=2 is
    ``(1+t^2)*ccdf - t*pdf``.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.empty_like(t)
    small = t < _TAIL_SWITCH
    ts = t[small]
    if k == 0:
        out[small] = gauss_ccdf(ts)
    elif k == 1:
        out[small] = gauss_pdf(ts) - ts * gauss_ccdf(ts)
    elif k == 2:
        out[small] = (1.0 + ts * ts) * gauss_ccdf(ts) - ts * gauss_pdf(ts)
    else:
        raise ValueError(f"tail moment of order {k} not supported")
    big = ~small
    if np.any(big):
        # E[(Z-t)_+^k] = pdf(t) t^{-(k+1)} int_0^inf v^k e^{-v} e^{-v^2/(2t^2)} dv
        tb = t[big]
        nodes, weights = _laguerre(k)
        integral = np.exp(-0.5 * np.square(nodes[None, :] / tb[:, None])) @ weights
        out[big] = gauss_pdf(tb) * integral / tb ** (k + 1)
    return out[0] if scalar else out


def soft_threshold(t, theta):
    """Soft thresholding: shrink toward zero by ``theta``, zero inside the dead zone."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("threshold must be nonnegative")
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.maximum(np.abs(t) - theta, 0.0)


def big_a2(rho, tau):
    """Normalized MSE of the channel when every nonzero sits far from the threshold."""
    rho = np.asarray(rho, dtype=float)
    tau = np.asarray(tau, dtype=float)
    return 2.0 * (1.0 - rho) * tail_moment(2, tau) + rho * (1.0 + tau * tau)


def big_a0(rho, tau):
    """Fraction of nonzero outputs when every nonzero sits far from the threshold."""
    rho = np.asarray(rho, dtype=float)
    return 2.0 * (1.0 - rho) * gauss_ccdf(tau) + rho


def psi_theta(tau0, tau):
    """Deficit of the nonzero-output probability for a signal at ``tau0``.

    Equals ``1 - ccdf(tau + tau0) - ccdf(tau - tau0)``; written through the
    difference of the two upper tails so large ``|tau0|`` does not cancel.
    """
    a = np.abs(np.asarray(tau0, dtype=float))
    tau = np.asarray(tau, dtype=float)
    return gauss_ccdf(a - tau) - gauss_ccdf(a + tau)


def psi_xi(tau0, tau):
    """Deficit of the squared error for a signal at ``tau0`` relative to ``1 + tau^2``.

    ``1 + tau^2 - psi_xi(tau0, tau)`` is ``E[(soft(tau0 + Z; tau) - tau0)^2]``.
    """
    a = np.abs(np.asarray(tau0, dtype=float))
    tau = np.asarray(tau, dtype=float)
    return ((1.0 + tau * tau - a * a) * psi_theta(a, tau)
            + (tau - a) * gauss_pdf(tau + a)
            + (tau + a) * gauss_pdf(tau - a))


def psi_shrink(tau0, tau):
    """``|tau0| * (E[soft(tau0 + Z; tau)] - tau0 + tau*sign(tau0))``, localized near the knee.

    It is the part of the signal-bias correlation that the ridge term of the
    Elastic Net couples to; it vanishes for ``|tau0| >> tau``.
    """
    a = np.abs(np.asarray(tau0, dtype=float))
    tau = np.asarray(tau, dtype=float)
    return a * (_tail1_signed(a - tau) - _tail1_signed(a + tau))


def _tail1_signed(x):
    # E[(Z - x)_+] for arguments of either sign
    x = np.asarray(x, dtype=float)
    return gauss_pdf(x) - x * gauss_ccdf(x)


def channel_error(tau0, tau):
    """``E[(soft(tau0 + Z; tau) - tau0)^2]`` in units of the noise variance."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 + tau * tau - psi_xi(tau0, tau)
