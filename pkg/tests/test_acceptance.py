"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines as they complete.  Budgets and tolerances are pinned here; a failure
means the corresponding guarantee is broken, not that a knob needs tuning.
"""

import math
import time

import numpy as np
import pytest

from esrf.experiments import ExperimentConfig, run
from esrf.filters import Ensemble, audit_identities
from esrf.la import inv_sqrt_shifted, integral_inv_sqrt, spectral_norm, symmetrize
from esrf.models import CONTINUOUS, linear_model, ObservationSeries
from esrf.reference import GaussianBelief, kb_integrate
from esrf.spde import spde_terms


def _verdict(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {number} {name}: {detail}"


def _structural_sweep():
    rng = np.random.default_rng(2024)
    reports = []
    for _ in range(200):
        d = int(rng.integers(1, 7))
        q = int(rng.integers(1, d + 1))
        m = int(rng.integers(2, 21))
        scale = 10.0 ** rng.uniform(-1.0, 1.5)
        ens = Ensemble(np.sqrt(scale) * rng.standard_normal((d, m)))
        h = rng.standard_normal((q, d))
        g = rng.standard_normal((q, q))
        r = symmetrize(g @ g.T + np.eye(q))
        reports.append(audit_identities(ens, h, r))
    return reports


@pytest.fixture(scope="module")
def structural_reports():
    t0 = time.monotonic()
    reports = _structural_sweep()
    return reports, time.monotonic() - t0


def test_criterion_1_structural_identities(structural_reports):
    reports, elapsed = structural_reports
    failures = []
    for i, report in enumerate(reports):
        for check in report.checks:
            if check.name.startswith("consistency:") or check.name in (
                    "adjointness", "etkf_mean_preservation"):
                if not check.ok:
                    failures.append((i, check.name, check.residual))
    ok = not failures and elapsed < 10.0
    _verdict(1, "structural-identities", ok,
             f"200 sweeps, {len(failures)} violations, {elapsed:.1f}s < 10s")


def test_criterion_2_explicit_bounds(structural_reports):
    reports, _ = structural_reports
    failures = []
    for i, report in enumerate(reports):
        for name in ("unified_bound", "gain_bound", "gain_lipschitz",
                     "whitaker_factor_bound"):
            if not report[name].ok:
                failures.append((i, name, report[name].residual))
    _verdict(2, "transform-and-gain-bounds", not failures,
             f"200 sweeps, {len(failures)} violations")


def test_criterion_3_quadrature_oracle():
    rng = np.random.default_rng(99)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 9))
        g = rng.standard_normal((d, d))
        s = symmetrize(g @ g.T) / d
        gap = spectral_norm(integral_inv_sqrt(s, nodes=64) - inv_sqrt_shifted(s))
        worst = max(worst, gap)
    elapsed = time.monotonic() - t0
    ok = worst < 1e-7 and elapsed < 5.0
    _verdict(3, "matrix-function-oracle", ok,
             f"50 inputs, worst gap {worst:.2e} < 1e-7, {elapsed:.1f}s < 5s")


def test_criterion_4_linear_gaussian_consistency():
    t0 = time.monotonic()
    worst_ratio = 0.0
    ok = True
    for model in ("scalar-linear", "vec3-linear"):
        cfg = ExperimentConfig(kind="consistency", model=model, m_list=(10_000,),
                               steps=20, seed=7)
        result = run(cfg, workers=1)
        ok &= result.passed
        worst_ratio = max(worst_ratio, max(
            max(c["mean_gap"] / max(c["mean_se"], 1e-300),
                c["cov_gap"] / max(c["cov_se"], 1e-300))
            for c in result.report["checks"]))
    elapsed = time.monotonic() - t0
    ok = ok and elapsed < 60.0
    _verdict(4, "linear-gaussian-consistency", ok,
             f"both models, 3 variants, worst gap {worst_ratio:.2f} SE of 5, "
             f"{elapsed:.1f}s < 60s")


def test_criterion_5_discrete_rate():
    t0 = time.monotonic()
    cfg = ExperimentConfig(kind="convergence-discrete", model="scalar-linear",
                           m_list=(8, 16, 32, 64, 128, 256, 512, 1024),
                           steps=10, replications=64, seed=7)
    scalar = run(cfg, workers=2)
    scalar_elapsed = time.monotonic() - t0
    ok = scalar.passed and scalar_elapsed < 180.0

    t0 = time.monotonic()
    cfg = ExperimentConfig(kind="convergence-discrete", model="tanh-nonlinear",
                           m_list=(8, 16, 32, 64, 128, 256, 512, 1024),
                           steps=10, replications=64, seed=7)
    tanh = run(cfg, workers=2)
    tanh_elapsed = time.monotonic() - t0
    ok = ok and tanh.passed and tanh_elapsed < 480.0
    _verdict(5, "discrete-propagation-of-chaos-rate", ok,
             f"scalar slope {scalar.report['slope']:+.3f} in [-0.70,-0.30] "
             f"({scalar_elapsed:.0f}s < 180s); tanh slope {tanh.report['slope']:+.3f} "
             f"with M_ref surrogate ({tanh_elapsed:.0f}s < 480s)")


def test_criterion_6_continuous_rate():
    t0 = time.monotonic()
    cfg = ExperimentConfig(kind="convergence-continuous", model="scalar-linear",
                           m_list=(16, 64, 256, 1024), horizon=1.0, dt=1e-3,
                           replications=16, seed=7)
    result = run(cfg, workers=2)
    elapsed = time.monotonic() - t0
    report = result.report
    ok = result.passed and elapsed < 600.0
    _verdict(6, "continuous-time-rate", ok,
             f"slope {report['slope']:+.3f} in [-0.75,-0.25], stopped fraction "
             f"{report['stopped_fraction']:.3f} < 0.05, {elapsed:.0f}s < 600s")


def test_criterion_7_kalman_bucy_reference():
    model = linear_model("riccati", CONTINUOUS, [[0.0]], [[1.0]], [[1.0]], [[1.0]])

    def terminal_cov(horizon, dt):
        steps = int(round(horizon / dt))
        obs = ObservationSeries(times=dt * np.arange(steps),
                                values=np.zeros((steps, 1)), kind="increments")
        beliefs = kb_integrate(GaussianBelief([0.0], [[3.0]]), model, obs, dt)
        return beliefs[-1].cov[0, 0]

    fixed_point_err = abs(terminal_cov(10.0, 1e-3) - 1.0)

    p0 = 3.0
    analytic = (p0 + math.tanh(1.0)) / (1.0 + p0 * math.tanh(1.0))
    errs = [abs(terminal_cov(1.0, dt) - analytic) for dt in (1e-3, 5e-4)]
    ratio = errs[0] / errs[1]
    ok = fixed_point_err < 1e-3 and 1.6 <= ratio <= 2.4
    _verdict(7, "kalman-bucy-reference", ok,
             f"|P_T - 1| = {fixed_point_err:.2e} < 1e-3; halving ratio {ratio:.2f} "
             f"in [1.6, 2.4]")


def test_criterion_8_spde_audit():
    rng = np.random.default_rng(404)
    t0 = time.monotonic()
    worst_cancel = worst_innov = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        q = int(rng.integers(1, d + 1))
        g = rng.standard_normal((d, d))
        belief = GaussianBelief(rng.standard_normal(d), symmetrize(g @ g.T) / d)
        h = rng.standard_normal((q, d))
        gq = rng.standard_normal((q, q))
        r = symmetrize(gq @ gq.T + np.eye(q))
        for k in range(d):
            for l in range(k, d):
                terms = spde_terms(belief, h, r, ("quadratic", k, l))
                worst_cancel = max(worst_cancel, terms.cancellation_residual)
                worst_innov = max(worst_innov, terms.innovation_residual)
    elapsed = time.monotonic() - t0
    ok = worst_cancel < 1e-10 and worst_innov < 1e-10 and elapsed < 5.0
    _verdict(8, "spde-term-audit", ok,
             f"100 beliefs, cancellation {worst_cancel:.2e} and innovation gap "
             f"{worst_innov:.2e} < 1e-10, {elapsed:.1f}s < 5s")


def test_criterion_9_worker_determinism(tmp_path, monkeypatch):
    cfg_kwargs = dict(kind="convergence-discrete", model="scalar-linear",
                      m_list=(8, 16, 32, 64), steps=5, replications=8, seed=42,
                      n_boot=200)
    payloads = {}
    for workers in (1, 8):
        out = tmp_path / f"workers{workers}"
        monkeypatch.setenv("ESRF_WORKERS", str(workers))
        run(ExperimentConfig(**cfg_kwargs), out_dir=out)
        payloads[workers] = {p.name: p.read_bytes()
                             for p in sorted(out.iterdir())
                             if p.suffix in (".csv", ".json")}
    identical = payloads[1] == payloads[8]
    _verdict(9, "worker-determinism", identical,
             f"{len(payloads[1])} CSV/JSON files byte-identical for workers 1 and 8")
