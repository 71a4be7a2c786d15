"""Distribution of the nonzero signal entries and averages over it.

The signal is ``p0(x) = rho * pi(x) + (1 - rho) * delta(x)``; this module
represents the continuous part ``pi`` and integrates functions of the
rescaled amplitude ``x / sigma_xi`` against it.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .errors import ParameterDomainError, QuadratureError

KINDS = ("gaussian", "power_law", "gapped")

_GAUSS_SUPPORT_SD = 15.0  # density below 1e-49 beyond this
_KNEE_HALFWIDTH = 12.0  # ccdf(12) ~ 2e-33: integrands are polynomial outside
_GL_ORDER = 10


@dataclass(frozen=True)
class PriorMoments:
    m1_abs: float
    m2: float


@dataclass(frozen=True)
class SignalPrior:
    """Symmetric density of the nonzero entries.

    Build with :meth:`gaussian`, :meth:`power_law` or :meth:`gapped`.
    ``power_law`` is ``|x|**gamma`` on ``[-cutoff, cutoff]``; ``gapped`` is
    uniform on ``gap <= |x| <= gap + width``.
    """

    kind: str
    variance: float = 1.0
    gamma: float = 0.0
    cutoff: float = 1.0
    gap: float = 1.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterDomainError(f"unknown prior kind {self.kind!r}")
        if self.kind == "gaussian" and not self.variance > 0:
            raise ParameterDomainError("gaussian prior needs variance > 0")
        if self.kind == "power_law":
            if not self.gamma > -1:
                raise ParameterDomainError("power_law prior needs gamma > -1")
            if not self.cutoff > 0:
                raise ParameterDomainError("power_law prior needs cutoff > 0")
        if self.kind == "gapped" and not (self.gap > 0 and self.width > 0):
            raise ParameterDomainError("gapped prior needs gap > 0 and width > 0")

    @classmethod
    def gaussian(cls, variance: float = 1.0) -> "SignalPrior":
        return cls("gaussian", variance=float(variance))

    @classmethod
    def power_law(cls, gamma: float, cutoff: float = 1.0) -> "SignalPrior":
        return cls("power_law", gamma=float(gamma), cutoff=float(cutoff))

    @classmethod
    def gapped(cls, gap: float = 1.0, width: float = 1.0) -> "SignalPrior":
        return cls("gapped", gap=float(gap), width=float(width))

    def to_dict(self) -> dict:
        keep = {"gaussian": ("variance",), "power_law": ("gamma", "cutoff"),
                "gapped": ("gap", "width")}[self.kind]
        d = asdict(self)
        return {"kind": self.kind, **{k: d[k] for k in keep}}

    @classmethod
    def from_dict(cls, d: dict) -> "SignalPrior":
        d = dict(d)
        kind = d.pop("kind")
        return cls(kind, **{k: float(v) for k, v in d.items()})

    # -- density ---------------------------------------------------------

    @property
    def exponent(self) -> float | None:
        """Behaviour ``pi(x) ~ |x|**gamma`` at the origin; None for a gap."""
        return {"gaussian": 0.0, "power_law": self.gamma, "gapped": None}[self.kind]

    @property
    def scale(self) -> float:
        """Length over which the density itself varies."""
        return {"gaussian": math.sqrt(self.variance), "power_law": self.cutoff,
                "gapped": self.width}[self.kind]

    @property
    def amplitude(self) -> float:
        """Prefactor F of ``pi(x) ~ F |x|**gamma`` near the origin (0 if gapped)."""
        if self.kind == "gaussian":
            return 1.0 / math.sqrt(2 * math.pi * self.variance)
        if self.kind == "power_law":
            return (self.gamma + 1) / (2 * self.cutoff ** (self.gamma + 1))
        return 0.0

    def support(self) -> tuple[float, float]:
        """Bounds of ``|x|`` carrying (numerically) all the mass."""
        if self.kind == "gaussian":
            return 0.0, _GAUSS_SUPPORT_SD * self.scale
        if self.kind == "power_law":
            return 0.0, self.cutoff
        return self.gap, self.gap + self.width

    def pdf(self, x):
        x = np.abs(np.asarray(x, dtype=float))
        if self.kind == "gaussian":
            return np.exp(-0.5 * x * x / self.variance) / math.sqrt(2 * math.pi * self.variance)
        if self.kind == "power_law":
            with np.errstate(divide="ignore"):
                dens = self.amplitude * x ** self.gamma
            return np.where(x <= self.cutoff, dens, 0.0)
        inside = (x >= self.gap) & (x <= self.gap + self.width)
        return np.where(inside, 0.5 / self.width, 0.0)

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` independent draws from the continuous part."""
        if self.kind == "gaussian":
            return rng.normal(0.0, math.sqrt(self.variance), n)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        u = rng.random(n)
        if self.kind == "power_law":
            return sign * self.cutoff * u ** (1.0 / (self.gamma + 1.0))
        return sign * (self.gap + self.width * u)

    def moments(self) -> PriorMoments:
        return moments(self)

    # -- quadrature ------------------------------------------------------

    def rule(self, sigma_xi: float, knee: float | None = None, level: int = 0):
        """Nodes ``t`` (in units of ``sigma_xi``) and weights for ``[f(x/sigma_xi)]``.

        With ``knee`` given the integrand is assumed to vanish beyond
        ``|t| > knee + 12`` and to be polynomial below ``knee - 12``; only the
        knee window is resolved on the ``sigma_xi`` scale. Without it, the
        first 40 noise widths are resolved and the rest of the support on the
        prior's own scale. ``level`` halves every panel that many times.
        """
        lo, hi = self.support()
        s = float(sigma_xi)
        coarse = self.scale / 8.0
        fine = min(0.5 * s, coarse)
        if knee is None:
            win_lo, win_hi = lo, min(hi, 40.0 * s)
        else:
            centre = knee * s
            win_lo = max(lo, centre - _KNEE_HALFWIDTH * s)
            win_hi = min(hi, centre + _KNEE_HALFWIDTH * s)
            hi = win_hi
        if hi <= lo:
            return np.empty(0), np.empty(0)
        pieces = []
        if win_lo > lo:
            pieces.append(_grid(lo, min(win_lo, hi), coarse))
        if win_hi > win_lo:
            pieces.append(_grid(win_lo, win_hi, fine))
        if hi > win_hi and knee is None:
            pieces.append(_grid(max(win_hi, lo), hi, coarse))
        edges = np.unique(np.concatenate(pieces))
        for _ in range(level):
            mids = 0.5 * (edges[1:] + edges[:-1])
            edges = np.sort(np.concatenate([edges, mids]))
        x, w = _panel_nodes(self, edges)
        return x / s, w


@lru_cache(maxsize=None)
def _legendre(n):
    return special.roots_legendre(n)


@lru_cache(maxsize=None)
def _jacobi(n, gamma):
    return special.roots_jacobi(n, 0.0, gamma)


def _grid(a, b, h):
    n = max(1, int(math.ceil((b - a) / h - 1e-9)))
    return np.linspace(a, b, n + 1)


def _panel_nodes(prior: SignalPrior, edges: np.ndarray):
    """Gauss-Legendre nodes on every panel; weights include ``2 * pi(x)``."""
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u, wu = _legendre(_GL_ORDER)
    x = (mid[:, None] + half[:, None] * u[None, :])
    w = half[:, None] * wu[None, :] * 2.0 * prior.pdf(x)
    if prior.kind == "power_law" and a[0] == 0.0:
        # first panel carries the |x|^gamma behaviour exactly
        uj, wj = _jacobi(_GL_ORDER, prior.gamma)
        h = b[0] - a[0]
        x[0] = 0.5 * h * (1.0 + uj)
        w[0] = (0.5 * h) ** (prior.gamma + 1.0) * wj * 2.0 * prior.amplitude
    return x.ravel(), w.ravel()


def moments(prior: SignalPrior) -> PriorMoments:
    """``[|x0|]`` and ``[x0^2]`` over the continuous part, in closed form."""
    if prior.kind == "gaussian":
        v = prior.variance
        return PriorMoments(math.sqrt(2.0 * v / math.pi), v)
    if prior.kind == "power_law":
        g, c = prior.gamma, prior.cutoff
        return PriorMoments((g + 1) / (g + 2) * c, (g + 1) / (g + 3) * c * c)
    d, w = prior.gap, prior.width
    return PriorMoments(d + 0.5 * w, ((d + w) ** 3 - d ** 3) / (3.0 * w))


def sample(prior: SignalPrior, rho: float, n: int, rng_seed: int) -> np.ndarray:
    """Draw ``n`` iid entries from ``rho * pi + (1 - rho) * delta``."""
    if not 0.0 <= rho <= 1.0:
        raise ParameterDomainError(f"rho={rho} outside [0, 1]")
    if n < 1:
        raise ParameterDomainError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    mask = rng.random(n) < rho
    values = prior.draw(rng, n)
    return np.where(mask, values, 0.0)


def average(prior: SignalPrior, sigma_xi: float, integrand: Callable,
            knee: float | None = None, rtol: float = 1e-10, max_level: int = 6) -> float:
    """``int pi(x0) f(x0 / sigma_xi) dx0`` for an even integrand ``f``.

    Panels are halved until two successive estimates agree to ``rtol``.
    Pass ``knee`` when ``f`` decays beyond ``tau0 ~ knee`` (the psi functions
    decay past ``tau``) so the integration stops there.
    """
    if not sigma_xi > 0:
        raise ParameterDomainError("sigma_xi must be positive")
    prev = None
    for level in range(max_level + 1):
        t, w = prior.rule(sigma_xi, knee=knee, level=level)
        val = float(np.dot(w, integrand(t))) if t.size else 0.0
        if prev is not None:
            resid = abs(val - prev)
            if resid <= rtol * max(abs(val), 1e-300):
                return val
        prev = val
    raise QuadratureError("prior average did not converge", resid)
