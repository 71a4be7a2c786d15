"""Command-line entry point: ``sparsecavity <command> [options]``.

Every command writes one table (CSV with a ``.json`` provenance sidecar, or
a single JSON object ``{config, results, failures, version}``), logs one
line per computed point on stderr and optionally renders an SVG plot.

Options may also come from a JSON file given with ``--config``; flags given
on the command line take precedence over it. Relative output paths are
resolved under ``$SPARSECAVITY_OUTPUT_DIR`` when that variable is set.

Exit codes: 0 ok, 2 invalid configuration, 3 solver failure (partial
results are still written, with the failures listed), 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from . import montecarlo as mc
from . import scaling
from .boundary import bp_sparse_asymptote, critical_alpha, en_excess, _parametric
from .cavity import CavityState, EnsembleSpec, solve, sweep
from .errors import CavityError, ParameterDomainError
from .priors import SignalPrior
from .svg import Series, render

log = logging.getLogger("sparsecavity")

OUTPUT_DIR_ENV = "SPARSECAVITY_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("boundary", "solve", "sweep", "exponents", "tradeoff", "mc", "compare")
SWEEP_VARIABLES = ("alpha", "rho", "lambda1", "lambda2", "sigma_zeta_sq", "sigma_sq")

SPEC_DEFAULTS = {
    "alpha": 0.5, "rho": 0.2, "lambda1": 1.0, "lambda2": 0.0, "lambda2_ratio": None,
    "sigma_sq": 1.0, "sigma_zeta_sq": 0.0, "limit": False,
    "prior": "gaussian", "prior_variance": 1.0, "gamma": 0.0, "cutoff": 1.0, "gap": 1.0, "width": 1.0,
}
COMMON_DEFAULTS = {"output": None, "format": "csv", "plot": None, "seed": 0, "workers": None, "trials": 50}
COMMAND_DEFAULTS = {
    "boundary": {"tau_grid": "log:1e-3:8:200"},
    "solve": {},
    "sweep": {"var": "alpha", "grid": "lin:0.1:0.9:17"},
    "exponents": {"regime": "lambda", "penalty": "bp", "window": None, "points": scaling.DEFAULT_POINTS,
                  "prior": None},
    "tradeoff": {"alpha_factor": 1.05, "noise_grid": "log:1e-6:1e-2:5", "lambda_grid": "log:1e-9:1:28"},
    "mc": {"n": 200, "var": None, "grid": None},
    "compare": {"rho": 0.15, "lambda2_ratio": "0,0.4,0.8", "n": 200, "lambda1": 1e-8,
                "alpha_grid": "lin:0.1:0.8:15"},
}


class ConfigError(ParameterDomainError):
    """Invalid command-line or file configuration."""

    exit_code = EXIT_CONFIG


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class GridAxis:
    """``scale:low:high:points`` with ``scale`` in ``{lin, log}``."""

    scale: str
    low: float
    high: float
    points: int

    @classmethod
    def parse(cls, text: str) -> "GridAxis":
        parts = str(text).split(":")
        if len(parts) != 4 or parts[0] not in ("lin", "log"):
            raise ConfigError(f"grid {text!r} is not of the form lin|log:low:high:points")
        try:
            low, high, points = float(parts[1]), float(parts[2]), int(parts[3])
        except ValueError as exc:
            raise ConfigError(f"grid {text!r}: {exc}") from None
        if points < 1:
            raise ConfigError(f"grid {text!r} is empty")
        if not (low < high or (points == 1 and low == high)):
            raise ConfigError(f"grid {text!r} must satisfy low < high")
        if parts[0] == "log" and not low > 0:
            raise ConfigError(f"log grid {text!r} needs a positive lower end")
        return cls(parts[0], low, high, points)

    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([self.low])
        if self.scale == "log":
            return np.logspace(math.log10(self.low), math.log10(self.high), self.points)
        return np.linspace(self.low, self.high, self.points)

    def __str__(self):
        return f"{self.scale}:{self.low!r}:{self.high!r}:{self.points}"


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.options[key]

    def spec(self) -> EnsembleSpec:
        o = self.options
        lambda2 = o["lambda2"]
        ratio = o.get("lambda2_ratio")
        if ratio is not None and not isinstance(ratio, str):
            lambda2 = float(ratio) * o["lambda1"]
        return EnsembleSpec(alpha=o["alpha"], rho=o["rho"], lambda1=o["lambda1"], lambda2=lambda2,
                            sigma_sq=o["sigma_sq"], sigma_zeta_sq=o["sigma_zeta_sq"],
                            prior=self.prior(), limit=o["limit"])

    def prior(self, kind: str | None = None) -> SignalPrior:
        o = self.options
        kind = kind or o["prior"] or "gaussian"
        if kind == "gaussian":
            return SignalPrior.gaussian(o["prior_variance"])
        if kind == "power_law":
            return SignalPrior.power_law(o["gamma"], o["cutoff"])
        if kind == "gapped":
            return SignalPrior.gapped(o["gap"], o["width"])
        raise ConfigError(f"unknown prior {kind!r}")

    def to_dict(self) -> dict:
        return {"command": self.command, **{k: self.options[k] for k in sorted(self.options)}}


def _float_list(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad number list {text!r}: {exc}") from None


def _add_spec_options(p):
    g = p.add_argument_group("ensemble")
    g.add_argument("--alpha", type=float, help="measurement ratio M/N")
    g.add_argument("--rho", type=float, help="fraction of nonzero signal entries")
    g.add_argument("--lambda1", type=float, help="l1 penalty")
    g.add_argument("--lambda2", type=float, help="l2 penalty")
    g.add_argument("--lambda2-ratio", dest="lambda2_ratio",
                   help="lambda2 / lambda1 (a comma list for compare)")
    g.add_argument("--sigma-sq", dest="sigma_sq", type=float, help="temperature-like variance sigma^2")
    g.add_argument("--sigma-zeta-sq", dest="sigma_zeta_sq", type=float, help="measurement noise variance")
    g.add_argument("--limit", action="store_true", help="use the vartheta -> 0 equations")
    g.add_argument("--prior", choices=("gaussian", "power_law", "gapped"))
    g.add_argument("--prior-variance", dest="prior_variance", type=float)
    g.add_argument("--gamma", type=float, help="power_law exponent of the density at 0")
    g.add_argument("--cutoff", type=float, help="power_law support half-width")
    g.add_argument("--gap", type=float, help="gapped prior inner edge")
    g.add_argument("--width", type=float, help="gapped prior band width")


def _add_common_options(p):
    p.add_argument("--config", help="JSON file with option values (flags override it)")
    p.add_argument("--output", "-o", help="output file (default <command>.<format>)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--plot", help="also write an SVG plot to this path")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: available CPUs)")
    p.add_argument("--trials", type=int)
    p.add_argument("--quiet", "-q", action="store_true", help="suppress per-point log lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsecavity", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"sparsecavity {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "boundary": "critical curve alpha_c(rho) on a tau grid",
        "solve": "macroscopic state at one parameter point",
        "sweep": "macroscopic state along one parameter",
        "exponents": "critical scaling exponent fit",
        "tradeoff": "error against lambda at several noise levels, with optima",
        "mc": "Monte Carlo estimate of the reconstruction error",
        "compare": "cavity theory against Monte Carlo along alpha for several lambda2/lambda1",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], argument_default=argparse.SUPPRESS)
        _add_common_options(p)
        _add_spec_options(p)
        if name == "boundary":
            p.add_argument("--tau-grid", dest="tau_grid", help="grid of critical thresholds tau")
        if name in ("sweep", "mc"):
            p.add_argument("--var", choices=SWEEP_VARIABLES, help="parameter to sweep")
            p.add_argument("--grid", help="sweep grid lin|log:low:high:points")
        if name == "exponents":
            p.add_argument("--regime", choices=("alpha", "noise", "lambda"))
            p.add_argument("--penalty", choices=("bp", "en"))
            p.add_argument("--window", help="fit window low:high")
            p.add_argument("--points", type=int)
        if name == "tradeoff":
            p.add_argument("--alpha-factor", dest="alpha_factor", type=float, help="alpha / alpha_c")
            p.add_argument("--noise-grid", dest="noise_grid")
            p.add_argument("--lambda-grid", dest="lambda_grid")
        if name in ("mc", "compare"):
            p.add_argument("--n", type=int, help="signal dimension N")
        if name == "compare":
            p.add_argument("--alpha-grid", dest="alpha_grid")
    return parser


def resolve_config(argv) -> RunConfig:
    """Defaults, then the JSON file, then explicit flags."""
    try:
        args = vars(build_parser().parse_args(argv))
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        raise ConfigError("invalid command line") from None
    command = args.pop("command")
    merged = {**SPEC_DEFAULTS, **COMMON_DEFAULTS, **COMMAND_DEFAULTS[command]}
    path = args.pop("config", None)
    quiet = args.pop("quiet", False)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(from_file, dict):
            raise ConfigError("config file must hold a JSON object")
        from_file = {k.replace("-", "_"): v for k, v in from_file.items()}
        from_file.pop("command", None)
        unknown = sorted(set(from_file) - set(merged))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(from_file)
    merged.update(args)
    if command != "compare" and isinstance(merged.get("lambda2_ratio"), str):
        merged["lambda2_ratio"] = _float_list(merged["lambda2_ratio"])[0]
    if merged["workers"] is None:
        merged["workers"] = os.cpu_count() or 1
    if merged["workers"] < 1:
        raise ConfigError("--workers must be at least 1")
    if merged["trials"] < 2:
        raise ConfigError("--trials must be at least 2")
    if merged["output"] is None:
        merged["output"] = f"{command}.{merged['format']}"
    cfg = RunConfig(command, merged)
    cfg.options["_quiet"] = quiet
    return cfg


# ---------------------------------------------------------------------------
# output


def _plain(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def output_path(path: str) -> str:
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def write_atomic(path: str, text: str) -> None:
    """Write through a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


@dataclass
class Result:
    """What a command produced: table rows, extra summary, failures, plot."""

    columns: list
    rows: list
    summary: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    plot: str | None = None


def write_result(cfg: RunConfig, res: Result) -> list:
    path = output_path(cfg["output"])
    config = {k: v for k, v in cfg.to_dict().items() if not k.startswith("_")}
    written = []
    if cfg["format"] == "json":
        write_atomic(path, json_text({"config": config, "results": {"rows": res.rows, **res.summary},
                                      "failures": res.failures, "version": __version__}))
        written.append(path)
    else:
        write_atomic(path, csv_text(res.columns, res.rows))
        sidecar = path + ".json"
        write_atomic(sidecar, json_text({"config": config, "columns": res.columns, "summary": res.summary,
                                         "failures": res.failures, "version": __version__}))
        written += [path, sidecar]
    if cfg["plot"]:
        if res.plot is None:
            log.info("no plot for command %s", cfg.command)
        else:
            plot_path = output_path(cfg["plot"])
            write_atomic(plot_path, res.plot)
            written.append(plot_path)
    return written


def _point(cfg, text, *args):
    if not cfg.options.get("_quiet"):
        log.info(text, *args)


# ---------------------------------------------------------------------------
# commands

STATE_COLUMNS = ["phase", "q", "tau", "sigma_xi_sq", "theta", "rho_hat", "chi_bar", "sigma_eff_sq",
                 "multiple_roots", "residual_1", "residual_2"]


def _state_row(state: CavityState) -> dict:
    d = state.to_dict()
    r1, r2 = d.pop("residuals")
    return {**d, "residual_1": r1, "residual_2": r2}


def run_boundary(cfg: RunConfig) -> Result:
    taus = GridAxis.parse(cfg["tau_grid"]).values()
    ratio = cfg["lambda2_ratio"] or 0.0
    excess = en_excess(float(ratio), cfg.prior()) if ratio else 0.0
    rows = []
    for tau in taus:
        pt = _parametric(float(tau), excess)
        asym = bp_sparse_asymptote(pt.alpha_c) if 0.0 < pt.alpha_c < 1.0 else math.nan
        rows.append({"tau": pt.tau_c, "alpha_c": pt.alpha_c, "rho_c": pt.rho_c, "rho_asymptote": asym})
        _point(cfg, "tau=%.6g alpha_c=%.6g rho_c=%.6g", pt.tau_c, pt.alpha_c, pt.rho_c)
    curve = Series([r["alpha_c"] for r in rows], [r["rho_c"] for r in rows], label="rho_c(alpha)")
    asym = Series([r["alpha_c"] for r in rows], [r["rho_asymptote"] for r in rows],
                  label="alpha / (2 ln(1/alpha))", dashed=True)
    plot = render([curve, asym], title="critical curve", xlabel="alpha", ylabel="rho",
                  logx=True, logy=True)
    return Result(["tau", "alpha_c", "rho_c", "rho_asymptote"], rows,
                  {"lambda2_ratio": float(ratio)}, plot=plot)


def run_solve(cfg: RunConfig) -> Result:
    spec = cfg.spec()
    state = solve(spec)
    _point(cfg, "alpha=%.6g rho=%.6g phase=%s q=%.6g", spec.alpha, spec.rho, state.phase, state.q)
    return Result(["alpha", "rho"] + STATE_COLUMNS,
                  [{"alpha": spec.alpha, "rho": spec.rho, **_state_row(state)}],
                  {"penalty": spec.penalty})


def run_sweep(cfg: RunConfig) -> Result:
    spec, var = cfg.spec(), cfg["var"]
    if var not in SWEEP_VARIABLES:
        raise ConfigError(f"cannot sweep {var!r}")
    values = GridAxis.parse(cfg["grid"]).values()
    try:
        spec.with_(**{var: float(values[0])})
        spec.with_(**{var: float(values[-1])})
    except ParameterDomainError as exc:
        raise ConfigError(f"sweep grid leaves the parameter domain: {exc}") from None
    rows, failures = [], []
    for v, res in zip(values, sweep(spec, var, values)):
        if isinstance(res, CavityState):
            rows.append({var: float(v), **_state_row(res)})
            _point(cfg, "%s=%.6g phase=%s q=%.6g", var, v, res.phase, res.q)
        else:
            failures.append({var: float(v), "error": type(res).__name__, "message": str(res)})
            _point(cfg, "%s=%.6g FAILED %s", var, v, res)
    plot = render([Series([r[var] for r in rows], [r["q"] for r in rows], label="q", markers=True)],
                  title=f"error along {var}", xlabel=var, ylabel="q",
                  logx=GridAxis.parse(cfg["grid"]).scale == "log", logy=True)
    return Result([var] + STATE_COLUMNS, rows, {"penalty": spec.penalty}, failures, plot)


def _window(cfg, regime):
    if cfg["window"] is None:
        return {"alpha": scaling.APPROACH_WINDOW, "noise": scaling.NOISE_WINDOW,
                "lambda": scaling.LAMBDA_WINDOW}[regime]
    lo_hi = [float(v) for v in str(cfg["window"]).split(":")]
    if len(lo_hi) != 2 or not 0 < lo_hi[0] < lo_hi[1]:
        raise ConfigError("--window must be low:high with 0 < low < high")
    return tuple(lo_hi)


def exponent_record(regime: str, penalty: str, prior: SignalPrior, rho: float, window, points: int,
                    lambda_ratio=None) -> tuple[dict, np.ndarray, np.ndarray]:
    """Fit one critical exponent; returns the summary record and the fitted data."""
    sweeps = {"alpha": scaling.approach_sweep, "noise": scaling.noise_sweep, "lambda": scaling.lambda_sweep}
    xs, qs = sweeps[regime](penalty, rho, prior, window, points, lambda_ratio)
    gapped = prior.kind == "gapped"
    fit = scaling.fit_log_law(xs, qs) if gapped else scaling.fit_power_law(xs, qs)
    value = fit.slope if gapped else fit.exponent
    se = fit.slope_stderr if gapped else fit.exponent_stderr
    half = float(stats.t.ppf(0.975, xs.size - 2)) * se
    gamma = prior.gamma if prior.kind == "power_law" else 0.0
    record = {
        "regime": regime, "penalty": penalty, "prior": prior.to_dict(), "gamma": gamma, "rho": rho,
        "law": "inverse_log" if gapped else "power",
        "expected": None if gapped else scaling.expected_exponent(regime, penalty, gamma),
        "fitted": value, "ci": [value - half, value + half], "r2": fit.r_squared,
        "window": list(window), "points": int(xs.size),
    }
    return record, xs, qs


def run_exponents(cfg: RunConfig) -> Result:
    regime, penalty = cfg["regime"], cfg["penalty"]
    if cfg["points"] < 4:
        raise ConfigError("--points must be at least 4")
    kind = cfg["prior"]
    prior = cfg.prior(kind) if kind else SignalPrior.power_law(cfg["gamma"], cfg["cutoff"])
    ratio = cfg["lambda2_ratio"] if penalty == "en" else None
    record, xs, qs = exponent_record(regime, penalty, prior, cfg["rho"], _window(cfg, regime),
                                     cfg["points"], ratio)
    rows = [{"x": float(x), "q": float(q)} for x, q in zip(xs, qs)]
    for r in rows:
        _point(cfg, "%s x=%.6g q=%.6g", regime, r["x"], r["q"])
    _point(cfg, "fitted %.6g expected %s r2 %.6g", record["fitted"], record["expected"], record["r2"])
    series = [Series(xs, qs, label="cavity", markers=True)]
    if record["law"] == "power":
        pref = math.exp(float(np.mean(np.log(qs)) - record["fitted"] * np.mean(np.log(xs))))
        series.append(Series(xs, pref * xs ** record["fitted"], label=f"slope {record['fitted']:.4f}"))
    plot = render(series, title=f"{penalty} {regime} scaling", xlabel=regime, ylabel="q",
                  logx=True, logy=record["law"] == "power")
    return Result(["x", "q"], rows, record, plot=plot)


def _tradeoff_task(args):
    rho, alpha, s, prior, lambdas = args
    qs = scaling.error_vs_lambda(rho, alpha, s, prior, lambdas)
    opt = scaling.optimal_lambda(rho, alpha, s, prior)
    return qs, opt


def _pool_map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def run_tradeoff(cfg: RunConfig) -> Result:
    rho, prior = cfg["rho"], cfg.prior()
    noise = GridAxis.parse(cfg["noise_grid"]).values()
    lambdas = GridAxis.parse(cfg["lambda_grid"]).values()
    if not noise[0] > 0:
        raise ConfigError("noise levels must be positive")
    alpha_c, _ = critical_alpha(rho, 0.0, prior)
    alpha = cfg["alpha_factor"] * alpha_c
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha_factor gives alpha={alpha} outside (0, 1]")
    out = _pool_map(_tradeoff_task, [(rho, alpha, float(s), prior, lambdas) for s in noise], cfg["workers"])
    rows, optima, series = [], [], []
    for s, (qs, opt) in zip(noise, out):
        for lam, q in zip(lambdas, qs):
            rows.append({"sigma_zeta_sq": float(s), "lambda": float(lam), "ln_lambda": math.log(lam),
                         "q": float(q)})
        optima.append({"sigma_zeta_sq": float(s), **opt.to_dict()})
        _point(cfg, "sigma_zeta_sq=%.6g lambda_star=%.6g q_min=%.6g q0=%.6g", s, opt.lambda_star,
               opt.q_min, opt.q_at_zero)
        series.append(Series(lambdas, qs, label=f"sigma_zeta^2={s:.3g}"))
    summary = {"alpha": alpha, "alpha_c": alpha_c, "optima": optima, "slope": None}
    stars = [o["lambda_star"] for o in optima]
    if len(stars) >= 4 and all(v > 0 for v in stars):
        summary["slope"] = scaling.fit_power_law(noise, stars).to_dict()
    plot = render(series, title=f"error against lambda at alpha={alpha:.4g}", xlabel="lambda",
                  ylabel="q", logx=True, logy=True)
    return Result(["sigma_zeta_sq", "lambda", "ln_lambda", "q"], rows, summary, plot=plot)


MC_COLUMNS = ["rho", "lambda1", "lambda2", "sigma_zeta_sq", "n", "mse_mean", "mse_stderr", "rho_hat_mean", "success_rate", "trials", "excluded",
              "kkt_max_violation", "q_theory", "agrees"]


def _derived_seed(seed: int, *keys) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def _mc_row(spec, n, trials, seed, workers):
    est = mc.run_trials(spec, n, trials, seed, workers=workers)
    try:
        q = solve(spec).q
    except CavityError:
        q = math.nan
    _, l1, l2 = mc.penalties_for(spec)
    return {"alpha": spec.alpha, "rho": spec.rho, "lambda1": l1, "lambda2": l2,
            "sigma_zeta_sq": spec.sigma_zeta_sq, "n": n, **est.to_dict(), "q_theory": q,
            "agrees": bool(math.isfinite(q) and mc.agrees(est, q))}


def run_mc(cfg: RunConfig) -> Result:
    spec, n = cfg.spec(), cfg["n"]
    var = cfg["var"]
    values = [None] if var is None else GridAxis.parse(cfg["grid"]).values()
    rows, failures = [], []
    for k, v in enumerate(values):
        point = spec if v is None else spec.with_(**{var: float(v)})
        key = {} if v is None else {var: float(v)}
        try:
            row = _mc_row(point, n, cfg["trials"], _derived_seed(cfg["seed"], k), cfg["workers"])
        except CavityError as exc:
            failures.append({**key, "error": type(exc).__name__, "message": str(exc)})
            _point(cfg, "%s FAILED %s", key, exc)
            continue
        rows.append({**key, **row})
        _point(cfg, "%s mse=%.6g +- %.3g theory=%.6g", key or "point", row["mse_mean"],
               row["mse_stderr"], row["q_theory"])
    cols = ["alpha"] + MC_COLUMNS
    if var and var not in cols:
        cols.insert(0, var)
    plot = None
    if var:
        xs = [r[var] for r in rows]
        plot = render([Series(xs, [r["q_theory"] for r in rows], label="cavity"),
                       Series(xs, [r["mse_mean"] for r in rows], label="Monte Carlo", markers=True,
                              yerr=[r["mse_stderr"] for r in rows])],
                      title=f"N={n}", xlabel=var, ylabel="MSE")
    return Result(cols, rows, {"n": n, "penalty": mc.penalties_for(spec)[0]}, failures, plot)


def compare_dataset(rho: float, ratios, alphas, n: int, trials: int, seed: int, lambda1: float = 1e-8,
                    prior: SignalPrior | None = None, workers: int = 1, progress=None) -> dict:
    """Cavity error against Monte Carlo along ``alpha`` for several ``lambda2 / lambda1``.

    Theory and simulation use the same small finite penalties
    ``(lambda1, r * lambda1)`` with ``sigma^2 = 1`` and no noise. Returns
    the per-point rows, per-ratio summaries (agreement fraction, theoretical
    and empirical transition) and failures.
    """
    prior = prior or SignalPrior.gaussian()
    rows, summaries, failures = [], [], []
    for j, r in enumerate(ratios):
        alpha_c, _ = critical_alpha(rho, float(r), prior)
        mine = []
        for k, a in enumerate(alphas):
            spec = EnsembleSpec(alpha=float(a), rho=rho, lambda1=lambda1, lambda2=float(r) * lambda1,
                                prior=prior)
            try:
                row = _mc_row(spec, n, trials, _derived_seed(seed, j, k), workers)
            except CavityError as exc:
                failures.append({"lambda2_ratio": float(r), "alpha": float(a), "error": type(exc).__name__,
                                 "message": str(exc)})
                continue
            row = {"lambda2_ratio": float(r), "alpha": float(a), "alpha_c": alpha_c, **row}
            mine.append(row)
            if progress:
                progress(row)
        rows += mine
        rates = [m["success_rate"] for m in mine]
        trans = (mc.empirical_transition([m["alpha"] for m in mine], rates)
                 if len(mine) >= 2 else math.nan)
        summaries.append({"lambda2_ratio": float(r), "alpha_c": alpha_c, "empirical_transition": trans,
                          "points": len(mine),
                          "agree_fraction": sum(m["agrees"] for m in mine) / max(len(mine), 1)})
    return {"rows": rows, "summary": summaries, "failures": failures}


def run_compare(cfg: RunConfig) -> Result:
    ratios = _float_list(cfg["lambda2_ratio"])
    if not ratios or any(r < 0 for r in ratios):
        raise ConfigError("--lambda2-ratio needs nonnegative values")
    alphas = GridAxis.parse(cfg["alpha_grid"]).values()
    if not (alphas[0] > 0 and alphas[-1] <= 1):
        raise ConfigError("alpha grid must lie in (0, 1]")

    def progress(row):
        _point(cfg, "r=%.3g alpha=%.4g mse=%.6g +- %.3g theory=%.6g success=%.3f", row["lambda2_ratio"],
               row["alpha"], row["mse_mean"], row["mse_stderr"], row["q_theory"], row["success_rate"])

    data = compare_dataset(cfg["rho"], ratios, alphas, cfg["n"], cfg["trials"], cfg["seed"],
                           cfg["lambda1"], cfg.prior(), cfg["workers"], progress)
    series = []
    for r in ratios:
        mine = [row for row in data["rows"] if row["lambda2_ratio"] == r]
        series.append(Series([m["alpha"] for m in mine], [m["q_theory"] for m in mine],
                             label=f"theory r={r:g}"))
        series.append(Series([m["alpha"] for m in mine], [m["mse_mean"] for m in mine],
                             label=f"MC r={r:g}", markers=True, yerr=[m["mse_stderr"] for m in mine]))
    plot = render(series, title=f"rho={cfg['rho']:g}, N={cfg['n']}", xlabel="alpha", ylabel="MSE")
    cols = ["lambda2_ratio", "alpha", "alpha_c"] + MC_COLUMNS
    return Result(cols, data["rows"], {"per_ratio": data["summary"]}, data["failures"], plot)


RUNNERS = {"boundary": run_boundary, "solve": run_solve, "sweep": run_sweep, "exponents": run_exponents,
           "tradeoff": run_tradeoff, "mc": run_mc, "compare": run_compare}


def _report_error(category: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": category, "type": type(exc).__name__, "message": str(exc)},
                                sort_keys=True) + "\n")


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        res = RUNNERS[cfg.command](cfg)
    except ParameterDomainError as exc:  # includes ConfigError
        _report_error("config", exc)
        return EXIT_CONFIG
    except CavityError as exc:
        _report_error("solver", exc)
        return EXIT_SOLVER
    try:
        for path in write_result(cfg, res):
            log.info("wrote %s", path)
    except OSError as exc:
        _report_error("io", exc)
        return EXIT_IO
    if res.failures:
        _report_error("solver", CavityError(f"{len(res.failures)} point(s) failed; see failures in output"))
        return EXIT_SOLVER
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(argv)
    except ConfigError as exc:
        _report_error("config", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
