"""Trial loops: channel draws, combiner evaluation, rate aggregation and sweeps.

Determinism contract: every trial owns an RNG substream derived from
(seed, point index, trial index), per-trial outputs land in arrays indexed by
trial, and reductions run over those arrays in a fixed order. Results are
therefore bit-identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .channel import sample_estimate
from .receivers import ReceiverKind, combiner_matrix, olr_quadratic_sinr, sinr_matrix
from .scenario import (
    DegenerateAgingError,
    DopplerParams,
    LargeScaleFading,
    Scenario,
    ScenarioConfig,
    estimation_params,
    trial_rng,
)

CHUNK = 256     # trials per work unit; fixed so chunking is worker-independent


@dataclass(frozen=True)
class TrialPlan:
    n_trials: int
    receivers: tuple = (ReceiverKind.OLR, ReceiverKind.MMSE, ReceiverKind.MRC, ReceiverKind.ZF)
    reference_cell: int = 0
    point_key: tuple = ()       # extra substream key components (e.g. sweep point index)

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("need at least one trial")
        key = tuple(int(k) for k in self.point_key)
        if any(k < 0 for k in key):
            raise ValueError("point_key components must be non-negative (they seed substreams)")
        object.__setattr__(self, "point_key", key)
        object.__setattr__(self, "receivers", tuple(self.receivers))


@dataclass(frozen=True)
class RateResult:
    """Per-user ergodic rate estimate for one receiver at one operating point.

    sum_se is the pilot-overhead-scaled sum rate; its standard error comes
    from the per-trial sums (users within a trial are correlated).
    """

    kind: ReceiverKind
    per_user_rate: np.ndarray
    per_user_stderr: np.ndarray
    sum_se: float
    sum_se_stderr: float
    n_trials: int
    tau: int
    T: int


def sum_spectral_efficiency(per_user_rates: np.ndarray, tau: int, T: int) -> float:
    """Pilot-overhead-scaled sum of per-user rates, bits/s/Hz."""
    if T <= tau:
        raise ValueError("coherence interval must exceed the pilot length")
    return float((1.0 - tau / T) * np.sum(per_user_rates))


def _trial_chunk(args):
    """Worker: per-trial log2(1+SINR) for a contiguous block of trials.

    Returns (chunk_start, physical (n, n_kinds, K) or None, quadratic (n, K) or None).
    """
    (config, lsf, kinds, ref_cell, point_key, start, count, want_quadratic) = args
    stats = estimation_params(lsf, config.alpha, config.p, config.p_p)
    K = config.K
    phys = np.empty((count, len(kinds), K)) if kinds else None
    quad = np.empty((count, K)) if want_quadratic else None
    for j in range(count):
        trial = start + j
        rng = trial_rng(config.seed, 2, *point_key, trial, ref_cell)
        draw = sample_estimate(stats, lsf, config.N, rng, ref_cell=ref_cell)
        try:
            for a, kind in enumerate(kinds):
                W = combiner_matrix(draw, stats, kind).W
                phys[j, a] = np.log2(1.0 + sinr_matrix(W, draw, stats).value)
            if want_quadratic:
                quad[j] = np.log2(1.0 + olr_quadratic_sinr(draw, stats))
        except Exception as exc:
            raise RuntimeError(f"trial {trial} failed: {exc}") from exc
    return start, phys, quad


def _run_trials(
    config: ScenarioConfig,
    lsf: LargeScaleFading,
    plan: TrialPlan,
    workers: int = 1,
    want_quadratic: bool = False,
):
    kinds = plan.receivers
    if not kinds and not want_quadratic:
        raise ValueError("nothing to simulate: no receivers and no quadratic track")
    n = plan.n_trials
    starts = list(range(0, n, CHUNK))
    jobs = [
        (config, lsf, kinds, plan.reference_cell, plan.point_key, s, min(CHUNK, n - s), want_quadratic)
        for s in starts
    ]
    phys = np.empty((n, len(kinds), config.K)) if kinds else None
    quad = np.empty((n, config.K)) if want_quadratic else None

    def _store(start, p, q):
        count = (p if p is not None else q).shape[0]
        if kinds:
            phys[start : start + count] = p
        if want_quadratic:
            quad[start : start + count] = q

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for start, p, q in pool.map(_trial_chunk, jobs):
                _store(start, p, q)
    else:
        for job in jobs:
            _store(*_trial_chunk(job))
    return phys, quad


def _to_result(kind, samples: np.ndarray, config: ScenarioConfig) -> RateResult:
    n = samples.shape[0]
    rate = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(rate)
    scale = 1.0 - config.tau / config.T
    per_trial_sum = scale * samples.sum(axis=1)
    sum_stderr = float(per_trial_sum.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return RateResult(
        kind=kind,
        per_user_rate=rate,
        per_user_stderr=stderr,
        sum_se=sum_spectral_efficiency(rate, config.tau, config.T),
        sum_se_stderr=sum_stderr,
        n_trials=n,
        tau=config.tau,
        T=config.T,
    )


def estimate_rates(
    config: ScenarioConfig,
    lsf: LargeScaleFading,
    plan: TrialPlan,
    workers: int = 1,
) -> dict:
    """Monte-Carlo per-user ergodic rates (physical SINR) for each requested receiver."""
    phys, _ = _run_trials(config, lsf, plan, workers=workers)
    return {kind: _to_result(kind, phys[:, a], config) for a, kind in enumerate(plan.receivers)}


def estimate_quadratic_rate(
    config: ScenarioConfig,
    lsf: LargeScaleFading,
    plan: TrialPlan,
    workers: int = 1,
) -> RateResult:
    """Monte-Carlo rate of the optimal combiner's quadratic-form SINR.

    This is the quantity the closed-form bounds and the deterministic
    equivalent describe; use it when comparing against those.
    """
    quad_plan = replace(plan, receivers=())
    _, quad = _run_trials(config, lsf, quad_plan, workers=workers, want_quadratic=True)
    return _to_result(ReceiverKind.OLR, quad, config)


def estimate_mean_quadratic_sinr(
    config: ScenarioConfig,
    lsf: LargeScaleFading,
    plan: TrialPlan,
    workers: int = 1,
) -> np.ndarray:
    """Monte-Carlo mean of the quadratic-form SINR itself (per user)."""
    quad_plan = replace(plan, receivers=())
    _, quad = _run_trials(config, lsf, quad_plan, workers=workers, want_quadratic=True)
    return np.mean(2.0**quad - 1.0, axis=0)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    """One grid point of a sweep: MC rates per receiver plus analytic attachments."""

    axis: str
    value: float
    alpha: float
    N: int
    snr_db: float
    results: dict                       # ReceiverKind -> RateResult
    de_sum_se: float = math.nan         # physical-form DE sum spectral efficiency
    de_sum_se_quadratic: float = math.nan
    lower_sum_se: float = math.nan      # bounds on the quadratic-form rate
    upper_sum_se: float = math.nan
    mc_quadratic: Optional[RateResult] = None
    degenerate_aging: bool = False


_AXES = ("snr_db", "doppler", "antennas")


def _config_at(scn: Scenario, axis: str, value: float) -> ScenarioConfig:
    cfg = scn.config
    if axis == "snr_db":
        p = 10.0 ** (value / 10.0)
        p_p = p if scn.pilot_snr_db is None else 10.0 ** (scn.pilot_snr_db / 10.0)
        return replace(cfg, p=p, p_p=p_p)
    if axis == "doppler":
        return replace(cfg, doppler=DopplerParams(normalized=float(value)))
    if axis == "antennas":
        return replace(cfg, N=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {_AXES}")


def _analytic_attachments(config, lsf, ref_cell, with_bounds, de_tol=1e-12):
    stats = estimation_params(lsf, config.alpha, config.p, config.p_p)
    state = analysis.deterministic_equivalent(stats, lsf, config.N, ref_cell=ref_cell, tol=de_tol)
    de_phys = sum_spectral_efficiency(np.log2(1.0 + state.sinr_physical), config.tau, config.T)
    de_quad = sum_spectral_efficiency(np.log2(1.0 + state.sinr_quadratic), config.tau, config.T)
    lower = upper = math.nan
    if with_bounds:
        lo = np.empty(config.K)
        hi = np.empty(config.K)
        for k in range(config.K):
            inputs = analysis.bound_inputs(stats, config.N, k, ref_cell=ref_cell)
            lo[k] = analysis.rate_lower_bound(inputs) if config.K > 1 else math.nan
            hi[k] = analysis.rate_upper_bound(inputs)
        upper = sum_spectral_efficiency(hi, config.tau, config.T)
        if config.K > 1:
            lower = sum_spectral_efficiency(lo, config.tau, config.T)
    return de_phys, de_quad, lower, upper


def sweep(
    scn: Scenario,
    axis: str,
    grid: Sequence[float],
    plan: TrialPlan,
    workers: int = 1,
    with_bounds: bool = False,
    with_mc_quadratic: bool = False,
    lsf: Optional[LargeScaleFading] = None,
) -> list:
    """Run the trial loop over a grid of one scenario parameter.

    Large-scale fading is frozen across the sweep (one realization). The
    estimation statistics are re-derived per point since they depend on the
    operating power and the aging coefficient. A point whose aging
    coefficient is exactly zero is reported with zero rates and flagged
    rather than aborting the sweep.
    """
    grid = [float(g) for g in grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be nonempty and strictly increasing")
    if lsf is None:
        lsf = scn.large_scale()
    points = []
    for idx, value in enumerate(grid):
        config = _config_at(scn, axis, value)
        point_plan = replace(plan, point_key=plan.point_key + (idx,), reference_cell=scn.reference_cell)
        snr_db = 10.0 * math.log10(config.p)
        try:
            alpha = config.alpha
            results = (
                estimate_rates(config, lsf, point_plan, workers=workers)
                if point_plan.receivers
                else {}
            )
            de_phys, de_quad, lower, upper = _analytic_attachments(
                config, lsf, scn.reference_cell, with_bounds
            )
            mc_quad = (
                estimate_quadratic_rate(config, lsf, point_plan, workers=workers)
                if with_mc_quadratic
                else None
            )
            points.append(
                SweepPoint(
                    axis=axis, value=value, alpha=alpha, N=config.N, snr_db=snr_db,
                    results=results, de_sum_se=de_phys, de_sum_se_quadratic=de_quad,
                    lower_sum_se=lower, upper_sum_se=upper, mc_quadratic=mc_quad,
                )
            )
        except DegenerateAgingError:
            zero = np.zeros(config.K)
            results = {
                kind: RateResult(kind, zero, zero, 0.0, 0.0, 0, config.tau, config.T)
                for kind in point_plan.receivers
            }
            points.append(
                SweepPoint(
                    axis=axis, value=value, alpha=0.0, N=config.N, snr_db=snr_db,
                    results=results, de_sum_se=0.0, de_sum_se_quadratic=0.0,
                    degenerate_aging=True,
                )
            )
    return points
