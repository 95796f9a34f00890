"""Self-contained oracle suites: independent reference computations checked
against the library's closed forms and fast paths.

Each oracle here deliberately avoids the implementation it checks: Bessel and
exponential integrals are recomputed from series / continued fractions /
adaptive quadrature, SINRs are re-measured at symbol level, densities are
compared against empirical spectra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats as sstats

from . import analysis, receivers
from .channel import sample_estimate, empirical_sinr
from .scenario import (
    DopplerParams,
    ScenarioConfig,
    aging_coefficient,
    estimation_params,
    trial_rng,
    uniform_interference_profile,
)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    max_err: float
    detail: str


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def j0_series(x: float, terms: int = 40) -> float:
    """Power-series Bessel J0; float-reliable for |x| up to ~8."""
    q = -(x * x) / 4.0
    term = 1.0
    parts = [1.0]
    for m in range(1, terms):
        term *= q / (m * m)
        parts.append(term)
    return math.fsum(parts)


def j0_quadrature(x: float) -> float:
    """J0 via (1/pi) int_0^pi cos(x sin t) dt, adaptive quadrature."""
    val, _ = integrate.quad(lambda t: math.cos(x * math.sin(t)), 0.0, math.pi,
                            epsabs=1e-13, epsrel=1e-13, limit=400)
    return val / math.pi


def e1_continued_fraction(z: float, max_iter: int = 200) -> float:
    """E1 via the modified Lentz continued fraction, good for z >~ 1."""
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, max_iter):
        a = -i * i
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-z)


def quad_e1(z: float) -> float:
    """E1(z) = int_1^inf e^{-z t}/t dt by adaptive quadrature."""
    val, _ = integrate.quad(lambda t: math.exp(-z * t) / t, 1.0, np.inf, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val


def quad_en(n: int, z: float) -> float:
    val, _ = integrate.quad(
        lambda t: math.exp(-z * t) / t**n, 1.0, np.inf, epsabs=1e-13, epsrel=1e-13, limit=400
    )
    return val


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def suite_specfun() -> SuiteResult:
    worst = 0.0
    for x in np.linspace(0.0, 8.0, 33):
        ref = j0_series(float(x), terms=60)
        got = aging_coefficient(DopplerParams(normalized=float(x) / (2 * math.pi)))
        worst = max(worst, abs(got - ref))
    for x in np.linspace(0.0, 50.0, 26):
        ref = j0_quadrature(float(x))
        got = aging_coefficient(DopplerParams(normalized=float(x) / (2 * math.pi)))
        worst = max(worst, abs(got - ref))
    for z in (0.05, 0.3, 1.0, 3.0, 8.0, 20.0):
        ref = quad_e1(z)
        got = -analysis.expint_ei(-z)
        worst = max(worst, abs(got - ref) / ref)
        if z >= 1.0:
            worst = max(worst, abs(analysis.expint_en(1, z) - e1_continued_fraction(z)) / ref)
    for n in (2, 5, 17, 40):
        for z in (0.1, 1.0, 7.0):
            ref = quad_en(n, z)
            worst = max(worst, abs(analysis.expint_en(n, z) - ref) / ref)
    rec_worst = 0.0
    for z in (0.01, 0.5, 2.0, 10.0, 50.0):
        for n in range(1, 61):
            lhs = n * analysis.expint_en(n + 1, z)
            rhs = math.exp(-z) - z * analysis.expint_en(n, z)
            scale = max(abs(lhs), abs(rhs), math.exp(-z))
            rec_worst = max(rec_worst, abs(lhs - rhs) / scale)
    err = max(worst, rec_worst)
    return SuiteResult("specfun", worst < 1e-10 and rec_worst < 1e-12, err,
                       f"max special-function error {worst:.2e}, recurrence residual {rec_worst:.2e}")


def _eigen_samples(inputs: analysis.BoundInputs, n_draws: int, seed: int) -> np.ndarray:
    rng = trial_rng(seed, 91)
    m = inputs.K - 1
    sq = np.sqrt(inputs.t)
    out = np.empty(n_draws)
    for i in range(n_draws):
        H = (rng.standard_normal((inputs.N, m)) + 1j * rng.standard_normal((inputs.N, m))) / np.sqrt(2)
        Hs = H * sq[None, :]
        ev = np.linalg.eigvalsh(Hs.conj().T @ Hs).real
        out[i] = ev[rng.integers(m)]
    return out


def chi2_pvalue(inputs: analysis.BoundInputs, samples: np.ndarray, n_bins: int = 30) -> float:
    """Goodness of fit of the analytic unordered-eigenvalue density."""
    edges = np.linspace(0.0, samples.max() * 1.05, n_bins + 1)
    cdf = analysis.eigen_cdf(edges, inputs)
    probs = np.diff(cdf)
    probs = np.append(probs, max(1.0 - cdf[-1], 0.0))
    counts, _ = np.histogram(samples, bins=np.append(edges, np.inf))
    expected = probs * len(samples)
    # merge low-expectation bins from the tails inward
    keep = expected >= 5.0
    counts = np.array([counts[~keep].sum(), *counts[keep]], dtype=float)
    expected = np.array([expected[~keep].sum(), *expected[keep]])
    if expected[0] == 0:
        counts, expected = counts[1:], expected[1:]
    stat = np.sum((counts - expected) ** 2 / expected)
    dof = len(expected) - 1
    return float(sstats.chi2.sf(stat, dof))


def suite_eigenpdf(n_draws: int = 4000, seed: int = 5) -> SuiteResult:
    cfg = ScenarioConfig(L=2, K=5, N=16, p=10.0, p_p=10.0, tau=10, T=196,
                         doppler=DopplerParams(normalized=0.1), seed=seed)
    lsf = uniform_interference_profile(cfg, beta_cross=2.0, shadow_db_sigma=4.0)
    stats = estimation_params(lsf, cfg.alpha, cfg.p, cfg.p_p)
    inputs = analysis.bound_inputs(stats, cfg.N, k=0)
    norm, _ = integrate.quad(lambda x: analysis.eigen_pdf(x, inputs), 0, np.inf, limit=300)
    samples = _eigen_samples(inputs, n_draws, seed)
    p = chi2_pvalue(inputs, samples)
    ok = abs(norm - 1.0) < 1e-8 and p > 0.01
    return SuiteResult("eigenpdf", ok, abs(norm - 1.0),
                       f"density integral {norm:.10f}, chi-square p-value {p:.4f}")


def suite_eigen_equivalence(n_draws: int = 300, seed: int = 6) -> SuiteResult:
    cfg = ScenarioConfig(L=2, K=4, N=12, p=10.0, p_p=10.0, tau=10, T=196,
                         doppler=DopplerParams(normalized=0.1), seed=seed)
    lsf = uniform_interference_profile(cfg, beta_cross=0.7)
    stats = estimation_params(lsf, cfg.alpha, cfg.p, cfg.p_p)
    worst = 0.0
    for i in range(n_draws):
        draw = sample_estimate(stats, lsf, cfg.N, trial_rng(seed, 7, i))
        for k in range(cfg.K):
            a = receivers.olr_quadratic_sinr_direct(draw, stats, k)
            b = receivers.olr_sinr_eigen(draw, stats, k)
            worst = max(worst, abs(a - b) / a)
    return SuiteResult("eigen-equiv", worst < 1e-8, worst,
                       f"max quadratic-vs-eigen relative gap {worst:.2e}")


def suite_symbol_oracle(n_symbols: int = 100000, seed: int = 8) -> SuiteResult:
    cfg = ScenarioConfig(L=2, K=2, N=8, p=10.0, p_p=10.0, tau=10, T=196,
                         doppler=DopplerParams(normalized=0.08), seed=seed)
    lsf = uniform_interference_profile(cfg, beta_cross=0.5)
    stats = estimation_params(lsf, cfg.alpha, cfg.p, cfg.p_p)
    draw = sample_estimate(stats, lsf, cfg.N, trial_rng(seed, 11))
    worst = 0.0
    lines = []
    for kind in receivers.ReceiverKind:
        W = receivers.combiner_matrix(draw, stats, kind).W
        predicted = receivers.sinr_matrix(W, draw, stats).value
        measured = empirical_sinr(draw, W, stats, n_symbols, trial_rng(seed, 13))
        rel = np.max(np.abs(measured - predicted) / predicted)
        worst = max(worst, float(rel))
        lines.append(f"{kind.value}:{rel:.3f}")
    return SuiteResult("symbol-oracle", worst < 0.05, worst,
                       "max symbol-level vs formula gap per kind " + " ".join(lines))


def suite_olr_optimality(n_draws: int = 200, n_probes: int = 50, seed: int = 9) -> SuiteResult:
    cfg = ScenarioConfig(L=3, K=5, N=20, p=10.0, p_p=10.0, tau=10, T=196,
                         doppler=DopplerParams(normalized=0.07), seed=seed)
    lsf = uniform_interference_profile(cfg, beta_cross=1.0)
    stats = estimation_params(lsf, cfg.alpha, cfg.p, cfg.p_p)
    worst = -math.inf
    for i in range(n_draws):
        rng = trial_rng(seed, 17, i)
        draw = sample_estimate(stats, lsf, cfg.N, rng)
        best = receivers.sinr_matrix(
            receivers.combiner_matrix(draw, stats, receivers.ReceiverKind.OLR).W, draw, stats
        ).value
        for kind in (receivers.ReceiverKind.MMSE, receivers.ReceiverKind.MRC, receivers.ReceiverKind.ZF):
            other = receivers.sinr_matrix(
                receivers.combiner_matrix(draw, stats, kind).W, draw, stats
            ).value
            worst = max(worst, float(np.max((other - best) / best)))
        probes = (rng.standard_normal((cfg.N, n_probes)) + 1j * rng.standard_normal((cfg.N, n_probes)))
        users = rng.integers(cfg.K, size=n_probes)
        probe_vals = receivers.sinr_matrix(probes, draw, stats, users=users).value
        worst = max(worst, float(np.max((probe_vals - best[users]) / best[users])))
    return SuiteResult("olr-optimality", worst <= 1e-9, worst,
                       f"max SINR excess over the optimal combiner {worst:.2e}")


def suite_tie_policy() -> SuiteResult:
    t_tied = np.full(4, 0.4)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        inputs = analysis.BoundInputs(N=16, K=5, sigma2=5.0, t=t_tied)
        warned = any(issubclass(w.category, RuntimeWarning) for w in caught)
    tied_val = analysis.rate_upper_bound(inputs)
    spread = analysis.BoundInputs(N=16, K=5, sigma2=5.0, t=0.4 * (1.0 + 1e-4 * np.arange(4)))
    spread_val = analysis.rate_upper_bound(spread)
    err = abs(tied_val - spread_val) / spread_val
    return SuiteResult("tie-policy", warned and err < 1e-3, err,
                       f"jitter warning={'yes' if warned else 'no'}, tied-vs-spread gap {err:.2e}")


SUITES = {
    "specfun": suite_specfun,
    "eigenpdf": suite_eigenpdf,
    "eigen-equiv": suite_eigen_equivalence,
    "symbol-oracle": suite_symbol_oracle,
    "olr-optimality": suite_olr_optimality,
    "tie-policy": suite_tie_policy,
}


def run_suites(names=None) -> list:
    names = list(SUITES) if not names else list(names)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {unknown}; available: {list(SUITES)}")
    return [SUITES[n]() for n in names]
