"""Experiment orchestration: configs, worker pools, reports.

A run is deterministic given (config, seed): all randomness flows through
counter-based streams keyed by purpose/replication/step, work items are
independent, and aggregation sorts by key before any reduction.  CSV and
JSON outputs are byte-identical for any worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coupling import (
    DEFAULT_M_REF,
    ErrorSeries,
    d_from_delta_samples,
    kalman_bucy_law,
    kalman_law,
    reference_law,
    reference_law_continuous,
    run_coupled_continuous,
    run_coupled_discrete,
    stopped_sup_delta_sq,
)
from .errors import ConfigError
from .filters import Ensemble, TransformVariant, analysis, audit_identities, default_variant, forecast
from .la import spectral_norm, sqrt_psd, symmetrize, trace
from .models import (
    CONTINUOUS,
    DISCRETE,
    BUILTIN_NAMES,
    ObservationSeries,
    StateSpaceModel,
    builtin_model,
    linear_model,
    simulate_continuous,
    simulate_discrete,
)
from .rates import bootstrap_se, bootstrap_slope_ci, fit_rate
from .reference import GaussianBelief, kf_filter
from .rng import NoiseStream
from .spde import spde_terms

KINDS = (
    "convergence-discrete",
    "convergence-continuous",
    "consistency",
    "spde-audit",
    "transforms-audit",
)
DEFAULT_M_SWEEP = (8, 16, 32, 64, 128, 256, 512, 1024)
DEFAULT_BAND = {
    "convergence-discrete": (-0.70, -0.30),
    "convergence-continuous": (-0.75, -0.25),
}
DEFAULT_REPLICATIONS = {"convergence-discrete": 64, "convergence-continuous": 16}
CANONICAL_VARIANTS = ("EAKF", "ETKF_direct", "Whitaker")


@dataclass
class ExperimentConfig:
    kind: str
    model: str = "scalar-linear"
    variant: str = "auto"
    variants: tuple[str, ...] = CANONICAL_VARIANTS     # consistency kind only
    m_list: tuple[int, ...] = DEFAULT_M_SWEEP
    steps: int = 10
    horizon: float = 1.0
    dt: float = 1e-3
    replications: int = 0                              # 0 -> kind default
    p_order: float = 2.0
    seed: int = 0
    out_dir: str = ""
    mref: int = DEFAULT_M_REF
    band: tuple[float, float] | None = None
    stop_threshold: float = 0.0                        # 0 -> default formula
    sweeps: int = 200
    dim: int = 6
    n_boot: int = 1000
    inline: dict = field(default_factory=dict)         # inline linear model matrices

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if any(m < 2 for m in self.m_list):
            raise ConfigError("all ensemble sizes must be >= 2")
        if self.replications == 0:
            self.replications = DEFAULT_REPLICATIONS.get(self.kind, 1)
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.kind == "convergence-continuous" and self.dt <= 0.0:
            raise ConfigError("dt must be positive for continuous experiments")
        if self.band is None:
            self.band = DEFAULT_BAND.get(self.kind)


_MATRIX_KEYS = {"b": "b", "c": "c", "h": "h", "gamma": "gamma"}
_LIST_KEYS = {"m_list", "variants"}
_FLOAT_KEYS = {"horizon", "dt", "p_order", "stop_threshold"}
_INT_KEYS = {"steps", "replications", "seed", "mref", "sweeps", "dim", "n_boot"}


def _parse_matrix(text: str) -> list[list[float]]:
    try:
        return [[float(v) for v in row.split(",")] for row in text.split(";")]
    except ValueError as exc:
        raise ConfigError(f"bad matrix literal {text!r}: {exc}") from exc


def parse_config(source: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat key=value config file (comments with '#', arrays as comma lists)."""
    text = Path(source).read_text() if isinstance(source, Path) else source
    raw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        key = key.replace("-", "_")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    raw.update({k: str(v) for k, v in (overrides or {}).items()})

    kwargs: dict = {}
    inline: dict = {}
    for key, value in raw.items():
        if key in _MATRIX_KEYS:
            inline[key] = _parse_matrix(value)
        elif key == "m_list":
            try:
                kwargs["m_list"] = tuple(int(v) for v in value.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad m_list {value!r}") from exc
        elif key == "variants":
            kwargs["variants"] = tuple(v.strip() for v in value.split(","))
        elif key == "band":
            try:
                lo, hi = (float(v) for v in value.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad band {value!r}") from exc
            kwargs["band"] = (lo, hi)
        elif key in _FLOAT_KEYS:
            try:
                kwargs[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"bad float for {key}: {value!r}") from exc
        elif key in _INT_KEYS:
            try:
                kwargs[key] = int(value)
            except ValueError as exc:
                raise ConfigError(f"bad integer for {key}: {value!r}") from exc
        elif key in ("kind", "model", "variant", "out_dir"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "kind" not in kwargs:
        raise ConfigError("config must set 'kind'")
    kwargs["inline"] = inline
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def resolve_model(cfg_model: str, inline: dict, flavor: str) -> StateSpaceModel:
    if cfg_model == "inline-linear":
        missing = [k for k in ("b", "c", "h", "gamma") if k not in inline]
        if missing:
            raise ConfigError(f"inline-linear model needs matrices {missing}")
        return linear_model("inline-linear", flavor, inline["b"], inline["c"],
                            inline["h"], inline["gamma"])
    if cfg_model in BUILTIN_NAMES:
        return builtin_model(cfg_model, flavor)
    raise ConfigError(f"unknown model {cfg_model!r}; builtins: {BUILTIN_NAMES}")


def resolve_workers(requested: int | None) -> int:
    env = os.environ.get("ESRF_WORKERS")
    if env is not None:
        try:
            value = int(env)
        except ValueError as exc:
            raise ConfigError(f"ESRF_WORKERS must be an integer, got {env!r}") from exc
    elif requested is not None:
        value = requested
    else:
        value = 1
    if value < 1:
        raise ConfigError("worker count must be >= 1")
    return value


# --- deterministic serialization ------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write(path, "\n".join(lines) + "\n")


def error_series_csv(path: Path, series: ErrorSeries) -> None:
    header = ["k_or_t", "M", "variant", "delta2", "delta4", "mean_gap", "cov_gap",
              "trP", "trPbarM", "stopped_flag"]
    rows = [
        [float(series.grid[i]), series.M, series.variant, float(series.delta2[i]),
         float(series.delta4[i]), float(series.mean_gap[i]), float(series.cov_gap[i]),
         float(series.tr_p[i]), float(series.tr_p_mf[i]), int(series.stopped[i])]
        for i in range(len(series.grid))
    ]
    write_csv(path, header, rows)


def write_json(path: Path, payload: dict) -> None:
    atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --- work items ------------------------------------------------------------------

@dataclass(frozen=True)
class _WorkUnit:
    kind: str
    model_name: str
    inline: dict
    variant: str
    obs_values: np.ndarray
    obs_kind: str
    law_payload: dict
    M: int
    seed: int
    replication: int
    dt: float
    stop_threshold: float


def _rebuild_law(kind: str, payload: dict):
    from .coupling import ContinuousLawMoments, DiscreteLawMoments

    cls = DiscreteLawMoments if kind == "convergence-discrete" else ContinuousLawMoments
    return cls(**payload)


def _law_payload(law) -> dict:
    return dataclasses.asdict(law)


def _coupled_work(unit: _WorkUnit) -> tuple[tuple[int, int], ErrorSeries]:
    flavor = DISCRETE if unit.kind == "convergence-discrete" else CONTINUOUS
    model = resolve_model(unit.model_name, unit.inline, flavor)
    obs = ObservationSeries(
        times=np.arange(1, len(unit.obs_values) + 1, dtype=float)
        if unit.obs_kind == "levels" else unit.dt * np.arange(len(unit.obs_values)),
        values=unit.obs_values, kind=unit.obs_kind,
    )
    law = _rebuild_law(unit.kind, unit.law_payload)
    if unit.kind == "convergence-discrete":
        series = run_coupled_discrete(model, TransformVariant.parse(unit.variant), obs,
                                      law, unit.M, unit.seed, unit.replication)
    else:
        series = run_coupled_continuous(model, obs, law, unit.M, unit.seed,
                                        unit.replication, unit.dt, unit.stop_threshold)
    return (unit.M, unit.replication), series


def _run_pool(units: list[_WorkUnit], workers: int) -> dict[tuple[int, int], ErrorSeries]:
    if workers == 1:
        results = dict(_coupled_work(u) for u in units)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_coupled_work, units, chunksize=max(1, len(units) // (4 * workers))))
    return results


# --- experiment kinds --------------------------------------------------------------

@dataclass
class RunResult:
    passed: bool
    report: dict
    out_dir: Path | None
    summary: str


def _observation_record(model: StateSpaceModel, cfg: ExperimentConfig
                        ) -> ObservationSeries:
    """One observation realization per experiment, shared by every arm."""
    b0 = GaussianBelief(np.zeros(model.d), np.eye(model.d))
    x0 = b0.mean + sqrt_psd(b0.cov) @ NoiseStream(cfg.seed, "truth-init").normals(0, model.d)
    if model.flavor == DISCRETE:
        _, obs = simulate_discrete(model, x0, cfg.steps,
                                   NoiseStream(cfg.seed, "truth-w"),
                                   NoiseStream(cfg.seed, "truth-v"))
    else:
        _, obs = simulate_continuous(model, x0, cfg.horizon, cfg.dt,
                                     NoiseStream(cfg.seed, "truth-w"),
                                     NoiseStream(cfg.seed, "truth-v"))
    return obs


def _pick_variant(cfg: ExperimentConfig, d: int) -> str:
    if cfg.variant != "auto":
        return TransformVariant.parse(cfg.variant).value
    return default_variant(min(cfg.m_list), d).value


def _rate_points(samples_by_m: dict[int, np.ndarray], p: float, n_boot: int,
                 rng: np.random.Generator) -> list[dict]:
    points = []
    for m in sorted(samples_by_m):
        samples = samples_by_m[m]
        d_val = d_from_delta_samples(samples, p)
        se = bootstrap_se(samples, lambda v: d_from_delta_samples(v, p), n_boot, rng)
        points.append({"M": m, "D": d_val, "se": se})
    return points


def run_convergence(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict[tuple[int, int], ErrorSeries]]:
    flavor = DISCRETE if cfg.kind == "convergence-discrete" else CONTINUOUS
    model = resolve_model(cfg.model, cfg.inline, flavor)
    obs = _observation_record(model, cfg)
    b0 = GaussianBelief(np.zeros(model.d), np.eye(model.d))

    if cfg.kind == "convergence-discrete":
        law = kalman_law(model, obs, b0) if model.is_linear else \
            reference_law(model, obs, b0, m_ref=cfg.mref, seed=cfg.seed)
        stop_threshold = math.inf
    else:
        law = kalman_bucy_law(model, obs, b0, cfg.dt) if model.is_linear else \
            reference_law_continuous(model, obs, b0, cfg.dt, m_ref=cfg.mref, seed=cfg.seed)
        stop_threshold = cfg.stop_threshold if cfg.stop_threshold > 0.0 else \
            10.0 * trace(b0.cov) + 10.0 * cfg.horizon * trace(model.Q.entries)

    variant = _pick_variant(cfg, model.d)
    units = [
        _WorkUnit(kind=cfg.kind, model_name=cfg.model, inline=cfg.inline,
                  variant=variant, obs_values=obs.values, obs_kind=obs.kind,
                  law_payload=_law_payload(law), M=m, seed=cfg.seed, replication=rep,
                  dt=cfg.dt, stop_threshold=stop_threshold)
        for m in cfg.m_list for rep in range(cfg.replications)
    ]
    results = _run_pool(units, workers)

    samples_by_m: dict[int, np.ndarray] = {}
    stopped_total = 0
    for m in cfg.m_list:
        vals = []
        for rep in range(cfg.replications):
            series = results[(m, rep)]
            if cfg.kind == "convergence-discrete":
                vals.append(series.delta2[-1])
            else:
                sup_sq, was_stopped = stopped_sup_delta_sq(series, stop_threshold)
                vals.append(math.sqrt(sup_sq))
                stopped_total += int(was_stopped)
        samples_by_m[m] = np.asarray(vals)

    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=(cfg.seed, 0xB007))))
    points = _rate_points(samples_by_m, cfg.p_order, cfg.n_boot, rng)
    fit = fit_rate([(pt["M"], pt["D"]) for pt in points])
    ci = bootstrap_slope_ci(samples_by_m, cfg.p_order, cfg.n_boot, rng)
    lo, hi = cfg.band
    in_band = lo <= fit.slope <= hi
    excludes_zero = ci[1] < 0.0 or ci[0] > 0.0
    report = {
        "experiment": cfg.kind,
        "model": cfg.model,
        "variant": variant,
        "p_order": cfg.p_order,
        "points": points,
        "slope": fit.slope,
        "slope_ci": [ci[0], ci[1]],
        "slope_ci_ols": [fit.ci[0], fit.ci[1]],
        "intercept": fit.intercept,
        "band": [lo, hi],
        "seed": cfg.seed,
        "replications": cfg.replications,
        "law_source": law.source,
        "pass": bool(in_band and excludes_zero),
    }
    if cfg.kind == "convergence-continuous":
        frac = stopped_total / max(1, len(cfg.m_list) * cfg.replications)
        report["stop_threshold"] = stop_threshold
        report["stopped_fraction"] = frac
        # blow-up monitor for the mean-field law (its well-posedness is assumed)
        law_traces = np.einsum("tii->t", np.asarray(law.cov))
        report["law_trace_max"] = float(np.max(law_traces))
        report["law_finite"] = bool(np.all(np.isfinite(law_traces)))
        report["pass"] = bool(report["pass"] and frac < 0.05 and report["law_finite"])
    return report, results


def _bootstrap_moment_ses(members: np.ndarray, n_boot: int, rng: np.random.Generator
                          ) -> tuple[float, float]:
    """Norms of the componentwise bootstrap SEs of the ensemble mean and covariance."""
    d, M = members.shape
    draws = rng.integers(0, M, size=(n_boot, M))
    counts = np.zeros((n_boot, M))
    for b in range(n_boot):
        counts[b] = np.bincount(draws[b], minlength=M)
    means = counts @ members.T / M                                  # (n_boot, d)
    prod = (members[:, None, :] * members[None, :, :]).reshape(d * d, M)
    second = counts @ prod.T / (M - 1)                              # E-hat[x x^T] terms
    covs = second.reshape(n_boot, d, d) - (M / (M - 1)) * np.einsum("bi,bj->bij", means, means)
    se_mean = float(np.linalg.norm(np.std(means, axis=0)))
    se_cov = spectral_norm(np.std(covs, axis=0))
    return se_mean, se_cov


def run_consistency(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    model = resolve_model(cfg.model, cfg.inline, DISCRETE)
    if not model.is_linear:
        raise ConfigError("consistency experiments require a linear model")
    obs = _observation_record(model, cfg)
    b0 = GaussianBelief(np.zeros(model.d), np.eye(model.d))
    _, kf_analyses = kf_filter(b0, model, obs)
    M = cfg.m_list[0]
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=(cfg.seed, 0xB007))))

    checks = []
    all_ok = True
    for variant_name in cfg.variants:
        variant = TransformVariant.parse(variant_name)
        ens = Ensemble.sample(b0.mean, b0.cov, M, NoiseStream(cfg.seed, "init"), step=0)
        w_stream = NoiseStream(cfg.seed, "forecast")
        for k, y in enumerate(obs.values, start=1):
            ens_f = forecast(ens, model, w_stream, k)
            ens = analysis(ens_f, y, variant, model.H, model.R.entries)
            se_mean, se_cov = _bootstrap_moment_ses(ens.members, cfg.n_boot, rng)
            mean_gap = float(np.linalg.norm(ens.mean - kf_analyses[k - 1].mean))
            cov_gap = spectral_norm(ens.cov - kf_analyses[k - 1].cov)
            ok = mean_gap <= 5.0 * se_mean and cov_gap <= 5.0 * se_cov
            all_ok &= ok
            checks.append({
                "variant": variant.value, "k": k,
                "mean_gap": mean_gap, "mean_se": se_mean,
                "cov_gap": cov_gap, "cov_se": se_cov, "ok": bool(ok),
            })
    report = {
        "experiment": "consistency",
        "model": cfg.model,
        "variants": list(cfg.variants),
        "M": M,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "slope": None,
        "checks": checks,
        "pass": bool(all_ok),
    }
    return report, {}


def _random_psd(rng: np.random.Generator, d: int, scale: float) -> np.ndarray:
    g = rng.standard_normal((d, d))
    return symmetrize(scale * (g @ g.T) / d)


def run_transforms_audit(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=(cfg.seed, 0xA0D1))))
    rows = []
    violations = 0
    for sweep in range(cfg.sweeps):
        d = int(rng.integers(1, cfg.dim + 1))
        q = int(rng.integers(1, d + 1))
        M = int(rng.integers(2, 21))
        scale = 10.0 ** rng.uniform(-1.0, 1.5)
        members = np.sqrt(scale) * rng.standard_normal((d, M))
        ens = Ensemble(members)
        H = rng.standard_normal((q, d))
        g = rng.standard_normal((q, q))
        R = symmetrize(g @ g.T + np.eye(q))
        audit = audit_identities(ens, H, R)
        for check in audit.checks:
            rows.append([sweep, d, q, M, check.name, check.residual, check.tolerance,
                         int(check.ok)])
            violations += int(not check.ok)
    report = {
        "experiment": "transforms-audit",
        "sweeps": cfg.sweeps,
        "max_dim": cfg.dim,
        "violations": violations,
        "seed": cfg.seed,
        "slope": None,
        "pass": violations == 0,
    }
    detail = {"rows": rows,
              "header": ["sweep", "d", "q", "M", "check", "residual", "tolerance", "ok"]}
    return report, detail


def run_spde_audit(cfg: ExperimentConfig, workers: int) -> tuple[dict, dict]:
    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(entropy=(cfg.seed, 0x5DDE))))
    rows = []
    violations = 0
    dim_cap = min(cfg.dim, 4)
    for sweep in range(cfg.sweeps):
        d = int(rng.integers(1, dim_cap + 1))
        q = int(rng.integers(1, d + 1))
        belief = GaussianBelief(rng.standard_normal(d), _random_psd(rng, d, 2.0))
        H = rng.standard_normal((q, d))
        g = rng.standard_normal((q, q))
        R = symmetrize(g @ g.T + np.eye(q))
        for k in range(d):
            for l in range(k, d):
                terms = spde_terms(belief, H, R, ("quadratic", k, l))
                cancel = terms.cancellation_residual
                innov = terms.innovation_residual
                ok = cancel <= 1e-10 and innov <= 1e-10
                violations += int(not ok)
                rows.append([sweep, d, q, f"quadratic({k},{l})", cancel, innov, int(ok)])
        for k in range(d):
            terms = spde_terms(belief, H, R, ("coordinate", k))
            ok = (terms.curvature_drift == 0.0 and terms.gain_drift == 0.0
                  and terms.innovation_residual <= 1e-10)
            violations += int(not ok)
            rows.append([sweep, d, q, f"coordinate({k})",
                         terms.cancellation_residual, terms.innovation_residual, int(ok)])
    report = {
        "experiment": "spde-audit",
        "sweeps": cfg.sweeps,
        "violations": violations,
        "seed": cfg.seed,
        "slope": None,
        "pass": violations == 0,
    }
    detail = {"rows": rows,
              "header": ["sweep", "d", "q", "phi", "cancellation", "innovation_gap", "ok"]}
    return report, detail


# --- top-level entry ---------------------------------------------------------------

def run(cfg: ExperimentConfig, workers: int | None = None,
        out_dir: str | Path | None = None) -> RunResult:
    """Execute one experiment and write its artifacts.

    Emits per-(M, replication) error-series CSVs, an aggregated JSON report,
    a human summary, and rendered figures.  Returns the result; exit-code
    mapping (0 pass / 2 band failure / 1 runtime error) is the CLI's job.
    """
    n_workers = resolve_workers(workers)
    target = Path(out_dir) if out_dir else (Path(cfg.out_dir) if cfg.out_dir else None)

    detail: dict = {}
    series_map: dict[tuple[int, int], ErrorSeries] = {}
    if cfg.kind in ("convergence-discrete", "convergence-continuous"):
        report, series_map = run_convergence(cfg, n_workers)
    elif cfg.kind == "consistency":
        report, detail = run_consistency(cfg, n_workers)
    elif cfg.kind == "transforms-audit":
        report, detail = run_transforms_audit(cfg, n_workers)
    elif cfg.kind == "spde-audit":
        report, detail = run_spde_audit(cfg, n_workers)
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ConfigError(f"unhandled kind {cfg.kind}")

    summary = _summary_text(cfg, report)
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        for (m, rep) in sorted(series_map):
            error_series_csv(target / f"errors_M{m:05d}_r{rep:03d}.csv", series_map[(m, rep)])
        if "rows" in detail:
            write_csv(target / "audit_rows.csv", detail["header"], detail["rows"])
        if cfg.kind == "consistency":
            write_csv(target / "consistency_checks.csv",
                      ["variant", "k", "mean_gap", "mean_se", "cov_gap", "cov_se", "ok"],
                      [[c["variant"], c["k"], c["mean_gap"], c["mean_se"], c["cov_gap"],
                        c["cov_se"], int(c["ok"])] for c in report["checks"]])
        write_json(target / "report.json", report)
        atomic_write(target / "summary.txt", summary)
        _render_figures(cfg, report, series_map, detail, target)

    return RunResult(passed=bool(report.get("pass", False)), report=report,
                     out_dir=target, summary=summary)


def _summary_text(cfg: ExperimentConfig, report: dict) -> str:
    lines = [f"experiment: {report.get('experiment')}",
             f"model: {report.get('model', '-')}",
             f"seed: {cfg.seed}"]
    if report.get("slope") is not None:
        lines.append(f"fitted slope: {report['slope']:+.4f}  "
                     f"ci=({report['slope_ci'][0]:+.4f}, {report['slope_ci'][1]:+.4f})  "
                     f"band={tuple(report['band'])}")
        for pt in report["points"]:
            lines.append(f"  M={pt['M']:>6d}  D={pt['D']:.6e}  se={pt['se']:.2e}")
    if "stopped_fraction" in report:
        lines.append(f"stopped fraction: {report['stopped_fraction']:.4f}")
    if "violations" in report:
        lines.append(f"violations: {report['violations']} over {report['sweeps']} sweeps")
    if "checks" in report:
        worst = max(
            (c["mean_gap"] / max(c["mean_se"], 1e-300) for c in report["checks"]),
            default=0.0,
        )
        lines.append(f"checks: {len(report['checks'])}, worst mean gap = {worst:.2f} SE")
    lines.append(f"result: {'PASS' if report.get('pass') else 'FAIL'}")
    return "\n".join(lines) + "\n"


def _render_figures(cfg: ExperimentConfig, report: dict,
                    series_map: dict, detail: dict, target: Path) -> None:
    from . import plots

    try:
        if report.get("slope") is not None:
            plots.rate_figure(report, target / "rate.png")
            plots.series_figure(series_map, target / "series.png")
        elif cfg.kind == "consistency":
            plots.consistency_figure(report, target / "consistency.png")
        elif "violations" in report and detail.get("rows"):
            plots.audit_figure(report, detail, target / "audit.png")
    except Exception as exc:  # figures are a courtesy, never fail the run
        atomic_write(target / "figures_failed.txt", f"{exc}\n")
