"""Direct simulation: random Gaussian designs and the actual penalized regression.

The regression solved is::

    minimize  1/2 |y - H x|^2 + lambda1 |x|_1 + lambda2/2 |x|^2

(``sigma^2 = 1``). Coordinate descent along a decreasing ``lambda1`` path
finds the support; an active-set iteration then solves the problem exactly
and every accepted solution is checked against the optimality conditions.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit
from scipy import linalg, optimize

from .cavity import EnsembleSpec
from .errors import NonConvergenceError, ParameterDomainError, SolverFailure

KKT_TOL = 1e-8
LIMIT_LAMBDA1 = 1e-8  # lambda1 used for the vartheta -> 0 limit
ZERO_MSE = 1e-10  # errors below this count as exact recovery
RHO_HAT_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Instance:
    h: np.ndarray
    x0: np.ndarray
    y: np.ndarray
    zeta_sigma_sq: float
    zeta: np.ndarray

    @property
    def m(self):
        return self.h.shape[0]

    @property
    def n(self):
        return self.h.shape[1]


@dataclass(frozen=True)
class McEstimate:
    mse_mean: float
    mse_stderr: float
    rho_hat_mean: float
    trials: int
    kkt_max_violation: float
    excluded: int = 0
    success_rate: float = 0.0

    def to_dict(self):
        return asdict(self)


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def dimensions(spec: EnsembleSpec, n: int) -> tuple[int, int]:
    if n < 1:
        raise ParameterDomainError("n must be >= 1")
    m = int(round(spec.alpha * n))
    k = int(round(spec.rho * n))
    if m < 1:
        raise ParameterDomainError(f"alpha * n = {spec.alpha * n} rounds to no measurements")
    if k > n:
        raise ParameterDomainError("more nonzeros than coordinates")
    return m, k


def generate_instance(spec: EnsembleSpec, n: int, seed) -> Instance:
    """Design with iid ``N(0, 1/M)`` entries and a signal with exactly ``round(rho n)`` nonzeros.

    ``seed`` is anything :class:`numpy.random.SeedSequence` accepts; trial
    ``i`` of a run uses ``(master_seed, i)``.
    """
    m, k = dimensions(spec, n)
    rng = _rng(seed)
    h = rng.standard_normal((m, n)) / math.sqrt(m)
    x0 = np.zeros(n)
    if k:
        support = rng.choice(n, size=k, replace=False)
        x0[support] = spec.prior.draw(rng, k)
    zeta = rng.standard_normal(m) * math.sqrt(spec.sigma_zeta_sq)
    y = h @ x0 + zeta
    return Instance(h=h, x0=x0, y=y, zeta_sigma_sq=spec.sigma_zeta_sq, zeta=zeta)


# ---------------------------------------------------------------------------
# elastic net


@njit(cache=True)
def _cd(gram, b, x, grad, lam1, lam2, max_sweeps, tol):
    """Cyclic coordinate descent; ``grad = b - gram @ x`` is kept current."""
    n = x.size
    for sweep in range(max_sweeps):
        biggest = 0.0
        for a in range(n):
            gaa = gram[a, a]
            z = grad[a] + gaa * x[a]
            if z > lam1:
                new = (z - lam1) / (gaa + lam2)
            elif z < -lam1:
                new = (z + lam1) / (gaa + lam2)
            else:
                new = 0.0
            d = new - x[a]
            if d != 0.0:
                for k in range(n):
                    grad[k] -= gram[a, k] * d
                x[a] = new
                step = abs(d) * (gaa + lam2)
                if step > biggest:
                    biggest = step
        if biggest < tol:
            return sweep + 1
    return max_sweeps


def objective(inst: Instance, x, lambda1, lambda2) -> float:
    r = inst.y - inst.h @ x
    return 0.5 * float(r @ r) + lambda1 * float(np.abs(x).sum()) + 0.5 * lambda2 * float(x @ x)


def kkt_violation(inst: Instance, x, lambda1, lambda2) -> float:
    """Largest violation of the coordinate-wise optimality conditions."""
    g = inst.h.T @ (inst.y - inst.h @ x) - lambda2 * x
    nz = x != 0
    v_nz = np.abs(g[nz] - lambda1 * np.sign(x[nz]))
    v_z = np.abs(g[~nz]) - lambda1
    worst = 0.0
    if v_nz.size:
        worst = max(worst, float(v_nz.max()))
    if v_z.size:
        worst = max(worst, float(v_z.max()))
    return worst


def _restricted_solve(gram_a, rhs, lam2):
    """Minimizer of the smooth restricted problem, or a flat descent direction."""
    mat = gram_a + lam2 * np.eye(len(rhs))
    try:
        fac = linalg.cho_factor(mat, lower=True, check_finite=False)
        diag = np.abs(np.diag(fac[0]))
        if diag.min() > 1e-6 * diag.max():
            return linalg.cho_solve(fac, rhs, check_finite=False), None
    except linalg.LinAlgError:
        pass
    w, v = linalg.eigh(mat)
    cut = 1e-11 * max(w[-1], 1e-300)
    if w[0] > cut:
        return v @ ((v.T @ rhs) / w), None
    return None, v[:, 0]


def _polish(gram, b, lam1, lam2, x, tol, max_iter):
    """Active-set iteration with sign-consistent line searches.

    Each step solves the smooth problem on the current support with fixed
    signs; if that flips signs, the best of the zero crossings along the way
    is taken instead (feature-sign search). Otherwise the worst optimality
    violator joins the support. The objective decreases at every step.
    """
    x = x.copy()
    n = x.size
    for _ in range(max_iter):
        act = np.flatnonzero(x)
        sign = np.sign(x[act])
        if act.size:
            sol, null = _restricted_solve(gram[np.ix_(act, act)], b[act] - lam1 * sign, lam2)
            cur = x[act]
            if sol is None:
                # singular support: move along a flat direction that does not raise the l1 term
                d = null if sign @ null <= 0 else -null
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = np.where(cur * d < 0, -cur / d, np.inf)
                j = int(np.argmin(t))
                x[act] = cur + t[j] * d
                x[act[j]] = 0.0
                continue
            flip = np.sign(sol) != sign
            if flip.any():
                new = _line_search(gram[np.ix_(act, act)], b[act], lam1, lam2, cur, sol)
                if np.array_equal(new, cur):
                    return x, False
                x[act] = new
                continue
            x[:] = 0.0
            x[act] = sol
        g = b - gram @ x - lam2 * x
        excess = np.where(x == 0, np.abs(g) - lam1, -np.inf)
        a = int(np.argmax(excess))
        if excess[a] <= 0.5 * tol:
            return x, True
        # enter at the coordinate-wise minimizer
        x[a] = np.sign(g[a]) * (abs(g[a]) - lam1) / (gram[a, a] + lam2)
    return x, False


def _line_search(gram_a, b_a, lam1, lam2, cur, sol):
    """Exact minimizer of the (convex, piecewise quadratic) objective on ``cur -> sol``."""
    d = sol - cur
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = -cur / d
    knots = np.unique(np.concatenate([[0.0, 1.0], cross[(cross > 0) & (cross < 1)]]))
    gd = gram_a @ d
    gc = gram_a @ cur
    quad = 0.5 * (d @ gd + lam2 * d @ d)
    lin0 = d @ gc - b_a @ d + lam2 * cur @ d

    def f(t):
        v = cur + t * d
        return t * t * quad + t * lin0 + lam1 * np.abs(v).sum()

    best_t, best_f = 0.0, f(0.0)
    for lo, hi in zip(knots[:-1], knots[1:]):
        sgn = np.sign(cur + 0.5 * (lo + hi) * d)
        slope = lin0 + lam1 * (sgn @ d)
        cands = [lo, hi]
        if quad > 0:
            cands.append(min(max(-slope / (2 * quad), lo), hi))
        for t in cands:
            val = f(t)
            if val < best_f:
                best_t, best_f = t, val
    v = cur + best_t * d
    v[np.isclose(cross, best_t, rtol=0, atol=1e-15)] = 0.0
    return v


def _kkt_from_gram(gram, b, x, lam1, lam2):
    g = b - gram @ x - lam2 * x
    nz = x != 0
    worst = 0.0
    if nz.any():
        worst = float(np.max(np.abs(g[nz] - lam1 * np.sign(x[nz]))))
    if (~nz).any():
        worst = max(worst, float(np.max(np.abs(g[~nz]) - lam1)))
    return worst


def solve_elastic_net(inst: Instance, lambda1: float, lambda2: float = 0.0, tol: float = KKT_TOL,
                      max_sweeps: int = 20000, path_steps: int = 60) -> np.ndarray:
    """Exact Elastic Net solution certified to ``tol`` on the optimality conditions.

    Raises :class:`NonConvergenceError` (with the best iterate) when neither
    coordinate descent nor the active-set polish reaches ``tol``.
    """
    if not (lambda1 >= 0 and lambda2 >= 0 and tol > 0):
        raise ParameterDomainError("need lambda1, lambda2 >= 0 and tol > 0")
    h, y = inst.h, inst.y
    gram = h.T @ h
    b = h.T @ y
    n = b.size
    x = np.zeros(n)
    lam_max = float(np.max(np.abs(b))) if n else 0.0
    if lambda1 >= lam_max:
        return x
    grad = b.copy()
    start = max(lam_max, lambda1)
    path = np.geomspace(start, max(lambda1, 1e-300), path_steps) if lambda1 > 0 else \
        np.concatenate([np.geomspace(start, start * 1e-10, path_steps), [0.0]])
    for lam in path[1:]:
        _cd(gram, b, x, grad, lam, lambda2, 200, 1e-3 * max(lam, tol))
    _cd(gram, b, x, grad, lambda1, lambda2, max_sweeps // 10, 0.1 * tol)
    best, best_v = x.copy(), _kkt_from_gram(gram, b, x, lambda1, lambda2)
    if best_v <= tol:
        return best
    polished, ok = _polish(gram, b, lambda1, lambda2, x, tol, max_iter=4 * n + 50)
    v = _kkt_from_gram(gram, b, polished, lambda1, lambda2)
    if v < best_v:
        best, best_v = polished, v
    if best_v <= tol:
        return best
    # last resort: more sweeps from the best point, then polish again
    x = best.copy()
    grad = b - gram @ x
    _cd(gram, b, x, grad, lambda1, lambda2, max_sweeps, 0.01 * tol)
    polished, _ = _polish(gram, b, lambda1, lambda2, x, tol, max_iter=4 * n + 50)
    for cand in (x, polished):
        v = _kkt_from_gram(gram, b, cand, lambda1, lambda2)
        if v < best_v:
            best, best_v = cand.copy(), v
    if best_v <= tol:
        return best
    raise NonConvergenceError("elastic net solve stalled", best, best_v)


def objective_oracle(inst: Instance, lambda1: float, lambda2: float = 0.0) -> tuple[np.ndarray, float]:
    """Independent reference solve: L-BFGS-B on the split ``x = p - q`` with ``p, q >= 0``."""
    h, y = inst.h, inst.y
    n = h.shape[1]

    def fun(z):
        p, q = z[:n], z[n:]
        x = p - q
        r = h @ x - y
        g = h.T @ r + lambda2 * x
        val = 0.5 * r @ r + lambda1 * z.sum() + 0.5 * lambda2 * x @ x
        return val, np.concatenate([g + lambda1, -g + lambda1])

    res = optimize.minimize(fun, np.zeros(2 * n), jac=True, method="L-BFGS-B",
                            bounds=[(0.0, None)] * (2 * n),
                            options={"maxiter": 100000, "maxfun": 200000, "ftol": 1e-16, "gtol": 1e-12})
    x = res.x[:n] - res.x[n:]
    return x, objective(inst, x, lambda1, lambda2)


# ---------------------------------------------------------------------------
# ridge


def solve_ridge_direct(inst: Instance, lam: float) -> np.ndarray:
    """Ridge estimate ``H^T (H H^T + lam I)^{-1} y``; ``lam = 0`` is the minimum-norm interpolant.

    The ``M``-dimensional system is solved by Cholesky with one step of
    iterative refinement, and the residual of that system is checked.
    """
    if not lam >= 0:
        raise ParameterDomainError("lambda must be nonnegative")
    h, y = inst.h, inst.y
    k = h @ h.T
    if lam:
        k[np.diag_indices_from(k)] += lam
    fac = linalg.cho_factor(k, lower=True, check_finite=False)
    w = linalg.cho_solve(fac, y, check_finite=False)
    w += linalg.cho_solve(fac, y - k @ w, check_finite=False)
    resid = float(np.linalg.norm(k @ w - y)) / max(float(np.linalg.norm(y)), 1e-300)
    if resid > 1e-10:
        raise SolverFailure("ridge system residual too large", residual=resid)
    return h.T @ w


# ---------------------------------------------------------------------------
# trials


def empirical_rho_hat(xhat, rel_threshold: float = RHO_HAT_THRESHOLD) -> float:
    """Fraction of entries above ``rel_threshold * max|xhat|``."""
    if not rel_threshold > 0:
        raise ParameterDomainError("rel_threshold must be positive")
    xhat = np.asarray(xhat, dtype=float)
    top = float(np.max(np.abs(xhat))) if xhat.size else 0.0
    if top == 0.0:
        return 0.0
    return float(np.mean(np.abs(xhat) > rel_threshold * top))


def penalties_for(spec: EnsembleSpec) -> tuple[str, float, float]:
    """``(kind, lambda1, lambda2)`` actually used by the simulation of ``spec``."""
    if spec.penalty == "ridge":
        return "ridge", 0.0, (0.0 if spec.is_limit else spec.lambda2)
    if spec.is_limit:
        return "en", LIMIT_LAMBDA1, spec.lambda_ratio * LIMIT_LAMBDA1
    return "en", spec.lambda1, spec.lambda2


def scaled_tol(lambda1: float, tol: float = KKT_TOL) -> float:
    """KKT tolerance for a given ``lambda1``: at most 0.1% of it, never below 1e-13.

    An absolute tolerance comparable to ``lambda1`` would accept any
    interpolant in the small-penalty limit.
    """
    return max(min(tol, 1e-3 * lambda1), 1e-13)


def run_one(spec: EnsembleSpec, n: int, seed, tol: float = KKT_TOL):
    """One trial: ``(mse, rho_hat, kkt, relative_error)`` or raises on non-convergence."""
    inst = generate_instance(spec, n, seed)
    kind, l1, l2 = penalties_for(spec)
    if kind == "ridge":
        xhat = solve_ridge_direct(inst, l2)
        kkt = 0.0
    else:
        xhat = solve_elastic_net(inst, l1, l2, scaled_tol(l1, tol))
        kkt = kkt_violation(inst, xhat, l1, l2)
    err = xhat - inst.x0
    mse = float(np.mean(err * err))
    norm0 = float(np.mean(inst.x0 * inst.x0))
    rel = mse / norm0 if norm0 > 0 else mse
    return mse, empirical_rho_hat(xhat), kkt, rel


def _trial_task(args):
    spec, n, seed, i, tol = args
    try:
        return i, run_one(spec, n, (seed, i), tol), None
    except NonConvergenceError as exc:
        return i, None, exc.kkt_violation


def run_trials(spec: EnsembleSpec, n: int, trials: int, seed: int, workers: int = 1,
               tol: float = KKT_TOL, success_rel: float = 1e-6) -> McEstimate:
    """Average over independent instances; trial ``i`` is seeded by ``(seed, i)``.

    Non-converged trials are excluded and counted; more than 10% of them
    fails the run. ``success_rate`` is the fraction of trials whose squared
    error is below ``success_rel`` times the signal power.
    """
    if trials < 2:
        raise ParameterDomainError("need at least 2 trials")
    tasks = [(spec, n, seed, i, tol) for i in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_task, tasks, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_trial_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    ok = [r[1] for r in results if r[1] is not None]
    excluded = trials - len(ok)
    if excluded > 0.1 * trials or len(ok) < 2:
        raise SolverFailure("too many non-converged trials", excluded=excluded, trials=trials)
    mses = [r[0] for r in ok]
    k = len(ok)
    mean = math.fsum(mses) / k
    var = math.fsum((v - mean) ** 2 for v in mses) / (k - 1)
    return McEstimate(mse_mean=mean, mse_stderr=math.sqrt(var / k),
                      rho_hat_mean=math.fsum(r[1] for r in ok) / k, trials=k,
                      kkt_max_violation=max(r[2] for r in ok), excluded=excluded,
                      success_rate=sum(r[3] < success_rel for r in ok) / k)


def agrees(mc: McEstimate, theory_q: float, nsigma: float = 3.0) -> bool:
    """MC mean within ``nsigma`` standard errors of theory, or both numerically zero."""
    if mc.mse_mean < ZERO_MSE and theory_q < ZERO_MSE:
        return True
    return abs(mc.mse_mean - theory_q) <= nsigma * mc.mse_stderr


def ridge_coordinate_stats(spec: EnsembleSpec, n: int, trials: int, seed: int) -> dict:
    """Per-trial gain ``<xhat x0>/<x0^2>`` and spread ``<(xhat - alpha x0)^2>`` of the min-norm ridge estimate.

    Returns trial means with standard errors, plus the MSE statistics.
    """
    gains, spreads, mses = [], [], []
    for i in range(trials):
        inst = generate_instance(spec, n, (seed, i))
        xhat = solve_ridge_direct(inst, 0.0)
        x0 = inst.x0
        gains.append(float(xhat @ x0) / float(x0 @ x0))
        spreads.append(float(np.mean((xhat - spec.alpha * x0) ** 2)))
        mses.append(float(np.mean((xhat - x0) ** 2)))

    def stat(v):
        v = np.asarray(v)
        return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))

    return {"gain": stat(gains), "spread": stat(spreads), "mse": stat(mses)}


def empirical_transition(alphas, success_rates, level: float = 0.5) -> float:
    """First ``alpha`` where the success rate crosses ``level``, linearly interpolated.

    Returns ``nan`` when the rate never crosses (all above or all below).
    """
    a = np.asarray(alphas, dtype=float)
    s = np.asarray(success_rates, dtype=float)
    if a.shape != s.shape or a.size < 2 or np.any(np.diff(a) <= 0):
        raise ParameterDomainError("need increasing alphas with one rate each")
    for i in range(a.size - 1):
        if s[i] < level <= s[i + 1]:
            return float(a[i] + (level - s[i]) * (a[i + 1] - a[i]) / (s[i + 1] - s[i]))
    return math.nan
