"""Coupling a finite ensemble to independent mean-field copies.

Both systems are driven by the same noise realizations and the same
observation record, so the per-member residuals isolate the interaction
error of the finite ensemble.  In the linear-Gaussian case the mean-field
moments come from the exact Kalman recursions; in the nonlinear case they
are stood in for by a large self-propagating reference ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStep
from .filters import Ensemble, TransformVariant, analysis, forecast
from .la import spectral_norm, sqrt_psd, symmetrize, trace
from .models import CONTINUOUS, DISCRETE, ObservationSeries, StateSpaceModel
from .reference import GaussianBelief, kb_integrate, kf_filter
from .rng import NoiseStream, member_block
from .transforms import _pd_solve, transform_unified

DEFAULT_M_REF = 2**15


# --- mean-field law providers ------------------------------------------------

@dataclass(frozen=True)
class DiscreteLawMoments:
    """Per-step forecast/analysis moments of the mean-field law, plus the
    analysis maps derived from them (gain and unified transform)."""

    mean0: np.ndarray
    cov0: np.ndarray
    mean_f: np.ndarray      # (K, d)
    cov_f: np.ndarray       # (K, d, d)
    mean_a: np.ndarray
    cov_a: np.ndarray
    tmap: np.ndarray        # (K, d, d) unified transform of each forecast covariance
    source: str = "kalman"


@dataclass(frozen=True)
class ContinuousLawMoments:
    mean0: np.ndarray
    cov0: np.ndarray
    mean: np.ndarray        # (J+1, d) at grid points
    cov: np.ndarray         # (J+1, d, d)
    source: str = "kalman-bucy"


def _law_from_moment_lists(b0, means_f, covs_f, means_a, covs_a, H, R, source):
    K = len(means_f)
    tmaps = np.stack([transform_unified(covs_f[k], H, R) for k in range(K)])
    return DiscreteLawMoments(
        mean0=b0.mean, cov0=b0.cov,
        mean_f=np.stack(means_f), cov_f=np.stack(covs_f),
        mean_a=np.stack(means_a), cov_a=np.stack(covs_a),
        tmap=tmaps, source=source,
    )


def kalman_law(model: StateSpaceModel, obs: ObservationSeries, b0: GaussianBelief
               ) -> DiscreteLawMoments:
    """Exact mean-field moments for the linear case: the Kalman recursions."""
    forecasts, analyses = kf_filter(b0, model, obs)
    return _law_from_moment_lists(
        b0,
        [b.mean for b in forecasts], [b.cov for b in forecasts],
        [b.mean for b in analyses], [b.cov for b in analyses],
        model.H, model.R.entries, source="kalman",
    )


def reference_law(model: StateSpaceModel, obs: ObservationSeries, b0: GaussianBelief,
                  m_ref: int = DEFAULT_M_REF, seed: int = 0) -> DiscreteLawMoments:
    """Surrogate mean-field moments from a self-propagating reference ensemble.

    A size-m_ref ensemble runs the unified-transform filter on its own
    empirical moments; those moments stand in for the law when the drift is
    nonlinear.  Noise purposes are distinct from the coupled systems', so
    the surrogate is independent of every experiment arm and identical
    across workers.
    """
    init = NoiseStream(seed, "mfref-init")
    w_stream = NoiseStream(seed, "mfref-forecast")
    ens = Ensemble.sample(b0.mean, b0.cov, m_ref, init, step=0)
    means_f, covs_f, means_a, covs_a = [], [], [], []
    for k, y in enumerate(obs.values, start=1):
        ens_f = forecast(ens, model, w_stream, k)
        means_f.append(ens_f.mean)
        covs_f.append(ens_f.cov)
        ens = analysis(ens_f, y, TransformVariant.UNIFIED_T, model.H, model.R.entries)
        means_a.append(ens.mean)
        covs_a.append(ens.cov)
    return _law_from_moment_lists(b0, means_f, covs_f, means_a, covs_a,
                                  model.H, model.R.entries, source=f"reference:{m_ref}")


def kalman_bucy_law(model: StateSpaceModel, obs: ObservationSeries, b0: GaussianBelief,
                    dt: float) -> ContinuousLawMoments:
    beliefs = kb_integrate(b0, model, obs, dt)
    return ContinuousLawMoments(
        mean0=b0.mean, cov0=b0.cov,
        mean=np.stack([b.mean for b in beliefs]),
        cov=np.stack([b.cov for b in beliefs]),
        source="kalman-bucy",
    )


def reference_law_continuous(model: StateSpaceModel, obs: ObservationSeries,
                             b0: GaussianBelief, dt: float,
                             m_ref: int = DEFAULT_M_REF, seed: int = 0
                             ) -> ContinuousLawMoments:
    """Surrogate continuous-time law from a size-m_ref ensemble of the same SDE."""
    members = _init_members(b0, m_ref, seed, "mfref-init", 0)
    ht_rinv = _pd_solve(model.R.entries, model.H).T
    means = [members.mean(axis=1)]
    covs = [_emp_cov(members)]
    for j, dy in enumerate(obs.values):
        dw = np.sqrt(dt) * member_block(seed, "mfref-wiener", 0, j, members.shape[1], model.d)
        members = _kalman_bucy_step(members, model, ht_rinv, covs[-1], means[-1], dy, dt, dw)
        means.append(members.mean(axis=1))
        covs.append(_emp_cov(members))
    return ContinuousLawMoments(mean0=b0.mean, cov0=b0.cov,
                                mean=np.stack(means), cov=np.stack(covs),
                                source=f"reference:{m_ref}")


# --- coupled systems -----------------------------------------------------------

@dataclass
class ErrorSeries:
    """Per-step coupled residual statistics of one (M, replication) run."""

    grid: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    delta4: np.ndarray
    mean_gap: np.ndarray
    cov_gap: np.ndarray
    tr_p: np.ndarray
    tr_p_mf: np.ndarray
    stopped: np.ndarray
    M: int
    variant: str
    seed: int
    replication: int
    kind: str = DISCRETE
    extra: dict = field(default_factory=dict)


def _deltas(residuals: np.ndarray) -> tuple[float, float, float]:
    norms = np.linalg.norm(residuals, axis=0)
    return (
        float(np.mean(norms)),
        float(np.sqrt(np.mean(norms**2))),
        float(np.mean(norms**4) ** 0.25),
    )


def _emp_cov(members: np.ndarray) -> np.ndarray:
    dev = members - members.mean(axis=1, keepdims=True)
    return symmetrize(dev @ dev.T / (members.shape[1] - 1))


def error_stats(members: np.ndarray, mf_members: np.ndarray,
                law_mean: np.ndarray, law_cov: np.ndarray) -> dict:
    """One record of coupled residual statistics.

    ``members`` and ``mf_members`` are the (d, M) states of the finite
    ensemble and the mean-field copies; (law_mean, law_cov) is the law the
    copies were propagated with.  The empirical covariance of the finite
    ensemble also feeds the trace diagnostics used by the stopping times.
    """
    cov = _emp_cov(members)
    d1, d2, d4 = _deltas(members - mf_members)
    return {
        "delta1": d1,
        "delta2": d2,
        "delta4": d4,
        "mean_gap": float(np.linalg.norm(members.mean(axis=1) - law_mean)),
        "cov_gap": spectral_norm(cov - law_cov),
        "tr_p": trace(cov),
        "tr_p_mf": trace(_emp_cov(mf_members)),
    }


def _init_members(b0: GaussianBelief, M: int, seed: int, purpose: str, replication: int
                  ) -> np.ndarray:
    z = member_block(seed, purpose, replication, 0, M, b0.mean.size)
    return b0.mean[:, None] + sqrt_psd(b0.cov) @ z


def run_coupled_discrete(model: StateSpaceModel, variant: TransformVariant,
                         obs: ObservationSeries, law: DiscreteLawMoments,
                         M: int, seed: int, replication: int,
                         extended: bool = False) -> ErrorSeries:
    """Propagate the finite ensemble and M mean-field copies through one record.

    Both systems start from the identical initial members and consume the
    identical model-noise blocks; only the moments entering the analysis
    map differ (empirical for the ensemble, the law's for the copies).
    """
    if model.flavor != DISCRETE:
        raise ValueError("run_coupled_discrete requires a discrete model")
    H, R = model.H, model.R.entries
    members0 = _init_members(GaussianBelief(law.mean0, law.cov0), M, seed, "init",
                             replication)
    ens = Ensemble(members0)
    mf = members0.copy()

    K = len(obs.values)
    names = ("delta1", "delta2", "delta4", "mean_gap", "cov_gap", "tr_p", "tr_p_mf")
    rows = {name: np.zeros(K + 1) for name in names}
    ext = {name: np.zeros(K + 1) for name in
           ("f_delta1", "f_delta2", "f_mean_gap_emp", "f_cov_gap_emp", "f_tr_p",
            "f_tr_p_mf")} \
        if extended else None
    _store(rows, 0, error_stats(ens.members, mf, law.mean0, law.cov0))

    for k, y in enumerate(obs.values, start=1):
        w = member_block(seed, "forecast", replication, k, M, model.d)
        noise = model.C @ w
        ens_f = Ensemble(model.drift(ens.members) + noise)
        ens = analysis(ens_f, y, variant, H, R)

        mf_f = model.drift(mf) + noise
        m_f, m_a = law.mean_f[k - 1], law.mean_a[k - 1]
        mf = m_a[:, None] + law.tmap[k - 1] @ (mf_f - m_f[:, None])

        if extended:
            f_d1, f_d2, _ = _deltas(ens_f.members - mf_f)
            ext["f_delta1"][k] = f_d1
            ext["f_delta2"][k] = f_d2
            ext["f_mean_gap_emp"][k] = float(np.linalg.norm(ens_f.mean - mf_f.mean(axis=1)))
            ext["f_cov_gap_emp"][k] = spectral_norm(ens_f.cov - _emp_cov(mf_f))
            ext["f_tr_p"][k] = trace(ens_f.cov)
            ext["f_tr_p_mf"][k] = trace(_emp_cov(mf_f))

        _store(rows, k, error_stats(ens.members, mf, m_a, law.cov_a[k - 1]))

    return ErrorSeries(
        grid=np.arange(K + 1, dtype=float), stopped=np.zeros(K + 1),
        M=M, variant=variant.value, seed=seed, replication=replication,
        kind=DISCRETE, extra=ext or {}, **rows,
    )


def _store(rows: dict, index: int, record: dict) -> None:
    for name, value in record.items():
        rows[name][index] = value


def _kalman_bucy_step(members, model, ht_rinv, P, mean, dy, dt, dw):
    innovation = dy[:, None] - 0.5 * model.H @ (members + mean[:, None]) * dt
    return members + model.drift(members) * dt + model.C @ dw + P @ ht_rinv @ innovation


def run_coupled_continuous(model: StateSpaceModel, obs: ObservationSeries,
                           law: ContinuousLawMoments, M: int, seed: int,
                           replication: int, dt: float,
                           stop_threshold: float = math.inf) -> ErrorSeries:
    """Euler-Maruyama coupling of the continuous-time filter and its limit.

    Both systems share the Wiener increments and the recorded observation
    increments; the finite system closes the gain with its empirical
    covariance, the copies with the law's.  Rows are recorded at every grid
    point; ``stopped`` marks times at or past the first trace passage.
    """
    if model.flavor != CONTINUOUS:
        raise ValueError("run_coupled_continuous requires a continuous model")
    if dt <= 0.0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    J = len(obs.values)
    if law.mean.shape[0] != J + 1:
        raise ValueError("law grid does not match the observation record")
    H = model.H
    ht_rinv = _pd_solve(model.R.entries, H).T
    members = _init_members(GaussianBelief(law.mean0, law.cov0), M, seed, "init",
                            replication)
    mf = members.copy()
    sqdt = np.sqrt(dt)

    names = ("delta1", "delta2", "delta4", "mean_gap", "cov_gap", "tr_p", "tr_p_mf")
    rows = {name: np.zeros(J + 1) for name in names}
    P = _emp_cov(members)
    _store(rows, 0, error_stats(members, mf, law.mean[0], law.cov[0]))

    for j, dy in enumerate(obs.values):
        dw = sqdt * member_block(seed, "wiener", replication, j, M, model.d)
        mean = members.mean(axis=1)
        members = _kalman_bucy_step(members, model, ht_rinv, P, mean, dy, dt, dw)
        mf = _kalman_bucy_step(mf, model, ht_rinv, law.cov[j], law.mean[j], dy, dt, dw)

        P = _emp_cov(members)
        _store(rows, j + 1, error_stats(members, mf, law.mean[j + 1], law.cov[j + 1]))

    grid = dt * np.arange(J + 1)
    theta, theta_bar = first_passage(rows["tr_p"], stop_threshold), \
        first_passage(rows["tr_p_mf"], stop_threshold)
    cut = min(theta, theta_bar)
    stopped = np.zeros(J + 1)
    if cut != math.inf:
        stopped[int(cut):] = 1.0
    return ErrorSeries(grid=grid, stopped=stopped, M=M, variant="continuous",
                       seed=seed, replication=replication, kind=CONTINUOUS, **rows)


# --- error statistics ----------------------------------------------------------

def first_passage(values, threshold) -> float:
    """First index at which values >= threshold (inclusive); inf if never."""
    if math.isnan(threshold):
        raise ValueError("threshold must be a number or math.inf")
    if math.isinf(threshold):
        return math.inf
    hits = np.nonzero(np.asarray(values) >= threshold)[0]
    return float(hits[0]) if hits.size else math.inf


def stopping_time(series: ErrorSeries, threshold: float) -> tuple[float, float]:
    """First-passage indices of tr(P) and of the mean-field empirical trace."""
    return (first_passage(series.tr_p, threshold),
            first_passage(series.tr_p_mf, threshold))


def stopped_sup_delta_sq(series: ErrorSeries, threshold: float) -> tuple[float, bool]:
    """sup of delta2^2 over the grid up to T and both first passages."""
    theta, theta_bar = stopping_time(series, threshold)
    cut = min(theta, theta_bar)
    last = len(series.grid) - 1 if math.isinf(cut) else int(cut)
    return float(np.max(series.delta2[: last + 1] ** 2)), not math.isinf(cut)


def d_from_delta_samples(samples, p: float) -> float:
    """(mean of delta^p over replications)^(1/p)."""
    samples = np.asarray(samples, dtype=float)
    return float(np.mean(samples**p) ** (1.0 / p))


def d_estimate(delta_by_rep, p: float, n_boot: int = 1000,
               rng: np.random.Generator | None = None
               ) -> tuple[np.ndarray, np.ndarray]:
    """Replication-averaged D with a nonparametric bootstrap standard error.

    ``delta_by_rep`` has shape (replications, steps); Y is held fixed across
    replications by construction of the runners.
    """
    delta_by_rep = np.atleast_2d(np.asarray(delta_by_rep, dtype=float))
    if delta_by_rep.shape[0] < 2:
        raise ValueError("need at least 2 replications")
    if rng is None:
        rng = np.random.default_rng(0)
    powered = delta_by_rep**p
    d = np.mean(powered, axis=0) ** (1.0 / p)
    reps = delta_by_rep.shape[0]
    idx = rng.integers(0, reps, size=(n_boot, reps))
    boot = np.mean(powered[idx], axis=1) ** (1.0 / p)
    return d, np.std(boot, axis=0)


@dataclass(frozen=True)
class EnvelopeReport:
    sup_sqrt_trace_mean: float
    c_hat: float
    finite: bool
    tr_q: float
    note: str = ""


def trace_envelope_check(series_list: list[ErrorSeries], model: StateSpaceModel,
                         horizon: float) -> EnvelopeReport:
    """Boundedness diagnostic for E[sup sqrt(tr P_t)] <= C e^(L T) sqrt(tr Q).

    The constant in the envelope is not explicit, so the report only
    estimates the implied constant and flags blow-up; when tr(Q) = 0 the
    envelope degenerates and the check compares sup tr(P_t) to tr(P_0).
    """
    sups = np.array([np.max(np.sqrt(np.maximum(s.tr_p, 0.0))) for s in series_list])
    est = float(np.mean(sups))
    finite = bool(np.all(np.isfinite(sups)))
    tr_q = trace(model.Q.entries)
    if tr_q <= 0.0:
        drift_free = all(
            np.isclose(s.tr_p.max(), s.tr_p[0], rtol=1e-6, atol=1e-12) for s in series_list
        ) if model.lipschitz_const == 0.0 else True
        return EnvelopeReport(est, math.inf, finite and drift_free, 0.0,
                              note="tr(Q)=0: envelope degenerate, checked sup against tr(P_0)")
    c_hat = est / (math.exp(model.lipschitz_const * horizon) * math.sqrt(tr_q))
    return EnvelopeReport(est, c_hat, finite, tr_q)
