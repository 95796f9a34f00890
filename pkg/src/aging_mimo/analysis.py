"""Closed-form machinery: special functions, the unordered-eigenvalue density of
the estimated-interference matrix, rate bounds, and the large-antenna
deterministic equivalent with its fixed-point iteration.

The cofactor double sums behind the bounds are evaluated with mpmath at a
working precision chosen from the inputs: the alternating factorial series
loses roughly n*log10(sigma2/t) digits, and near-coincident weights lose
another (K-2)*log10(1/gap) digits to divided-difference cancellation. Double
precision is hopeless for the uniform-interference scenarios, where all
weights tie.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import mpmath as mp
import numpy as np
from scipy import special

from .scenario import LargeScaleFading, EstimationStats

EULER_GAMMA = 0.5772156649015329

TIE_GAP = 1e-8          # relative gap below which weights count as tied
TIE_JITTER = 1e-7       # multiplicative spread applied to tied weights


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def expint_ei(x: float) -> float:
    """Exponential integral Ei on the negative real axis."""
    if x >= 0:
        raise ValueError("expint_ei is defined here for negative arguments only")
    return float(special.expi(x))


def expint_en(n: int, z: float) -> float:
    """Generalized exponential integral of integer order n >= 1 at z > 0."""
    if n < 1:
        raise ValueError("order must be >= 1")
    if z <= 0:
        raise ValueError("argument must be positive")
    return float(special.expn(n, z))


# ---------------------------------------------------------------------------
# weight vectors and bound inputs
# ---------------------------------------------------------------------------

def effective_t(
    stats: EstimationStats,
    ref_cell: int = 0,
    exclude: Optional[int] = None,
    variant: str = "sum",
) -> np.ndarray:
    """Per-user effective variance of the estimated-interference matrix.

    The estimates toward different cells are co-linear copies of the own-cell
    estimate, so the effective weight of user v is the plain sum of its
    estimate variances across cells ("sum"). The "sum_squared" variant sums
    squared variances instead; it is kept only so tests can demonstrate it
    does not reproduce the empirical spectrum.
    """
    bh = stats.beta_hat[ref_cell]
    if variant == "sum":
        t = bh.sum(axis=0)
    elif variant == "sum_squared":
        t = (bh**2).sum(axis=0)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if exclude is not None:
        t = np.delete(t, exclude)
    return t


def _jitter_ties(t: np.ndarray) -> np.ndarray:
    t = np.sort(np.asarray(t, dtype=float))
    if len(t) < 2:
        return t
    gaps = np.diff(t) / t[:-1]
    if np.all(gaps >= TIE_GAP):
        return t
    warnings.warn(
        "near-coincident interference weights; applying a multiplicative jitter "
        f"of {TIE_JITTER:g} per duplicate (bounds are continuous in the weights)",
        RuntimeWarning,
        stacklevel=3,
    )
    out = t.copy()
    mult = 0
    for i in range(1, len(out)):
        if (out[i] - out[i - 1]) / out[i - 1] < TIE_GAP:
            mult += 1
            out[i] = out[i - 1] * (1.0 + TIE_JITTER * mult)
        else:
            mult = 0
    return out


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the closed-form rate bounds for one user.

    t holds the K-1 effective weights with the served user removed (tied
    values are jittered apart on construction); own_gain is the served
    user's estimate variance, which scales both SINR components.
    """

    N: int
    K: int
    sigma2: float
    t: np.ndarray
    own_gain: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or len(t) != self.K - 1:
            raise ValueError("t must have length K-1")
        if np.any(t <= 0):
            raise ValueError("weights must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.N <= self.K:
            raise ValueError("need N > K")
        t = _jitter_ties(t)
        t.setflags(write=False)
        object.__setattr__(self, "t", t)


def bound_inputs(
    stats: EstimationStats, N: int, k: int, ref_cell: int = 0, variant: str = "sum"
) -> BoundInputs:
    """Assemble BoundInputs for user k of the reference cell."""
    t = effective_t(stats, ref_cell, exclude=k, variant=variant)
    return BoundInputs(
        N=N,
        K=stats.beta_hat.shape[2],
        sigma2=float(stats.sigma2[ref_cell]),
        t=t,
        own_gain=float(stats.beta_hat[ref_cell, ref_cell, k]),
    )


# ---------------------------------------------------------------------------
# unordered-eigenvalue density
# ---------------------------------------------------------------------------

def vandermonde_cofactor(t: np.ndarray, v: int, u: int) -> float:
    """(v, u) cofactor (0-based) of the matrix with entries t_i^j."""
    t = np.asarray(t, dtype=float)
    m = len(t)
    if m == 1:
        return 1.0
    V = np.vander(t, increasing=True)
    minor = np.delete(np.delete(V, v, axis=0), u, axis=1)
    return float((-1.0) ** (v + u) * np.linalg.det(minor))


def _cofactor_matrix(t: np.ndarray):
    V = np.vander(np.asarray(t, dtype=float), increasing=True)
    det = np.linalg.det(V)
    adj = det * np.linalg.inv(V)
    return adj.T, det           # cof[v, u], prod_{i<j}(t_j - t_i)


def eigen_pdf(lam, inputs: BoundInputs) -> np.ndarray:
    """Density of one unordered nonzero eigenvalue of the estimated-interference matrix.

    Valid for well-separated weights (float evaluation); the bounds use the
    arbitrary-precision path instead.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("eigenvalues are nonnegative")
    t, N, K = inputs.t, inputs.N, inputs.K
    m = K - 1
    cof, det = _cofactor_matrix(t)
    out = np.zeros_like(lam)
    for v in range(m):
        ratio = lam / t[v]
        for u in range(1, m + 1):
            n = N - K + u
            # lam^n e^{-lam/t} t^{K-N-2} / Gamma(n+1), written in log space
            logterm = n * np.log(np.where(ratio > 0, ratio, 1.0)) - ratio - special.gammaln(n + 1)
            term = np.where(ratio > 0, np.exp(logterm), 0.0) * t[v] ** (u - 2)
            out += cof[v, u - 1] * term
    return out / (m * det)


def eigen_cdf(lam, inputs: BoundInputs) -> np.ndarray:
    """CDF matching eigen_pdf, via regularized lower incomplete gammas."""
    lam = np.asarray(lam, dtype=float)
    t, N, K = inputs.t, inputs.N, inputs.K
    m = K - 1
    cof, det = _cofactor_matrix(t)
    out = np.zeros_like(lam)
    for v in range(m):
        for u in range(1, m + 1):
            n = N - K + u
            out += cof[v, u - 1] * t[v] ** (u - 1) * special.gammainc(n + 1, np.maximum(lam, 0.0) / t[v])
    return out / (m * det)


# ---------------------------------------------------------------------------
# closed-form moments and rate bounds
# ---------------------------------------------------------------------------

def _working_dps(N: int, K: int, sigma2: float, t: tuple) -> int:
    nmax = N - 1
    b_max = sigma2 / min(t)
    cancel = 0.0
    if b_max > 1.0:
        cancel = max(0.0, (nmax * math.log(b_max) - special.gammaln(nmax + 1)) / math.log(10.0))
    ts = np.sort(np.asarray(t))
    tie = 0.0
    if len(ts) > 1:
        gap = np.min(np.diff(ts) / ts[:-1])
        tie = (len(ts) - 1) * max(0.0, -math.log10(max(gap, 1e-300))) * 1.2
    return min(int(30 + cancel + tie) + 10, 800)


@functools.lru_cache(maxsize=512)
def _quadform_moments_cached(N: int, K: int, sigma2: float, t: tuple) -> tuple:
    """E[1/(lam+sigma2)] and E[ln(lam+sigma2)] under the eigenvalue density.

    The inverse moment integrates x^n e^-x / (x+b) term by term (alternating
    factorial series against e^b Ei(-b)); the log moment uses
    ln(b) + e^b * sum_{r<=n} E_{r+1}(b) for each inner integral.
    """
    m = K - 1
    dps = _working_dps(N, K, sigma2, t)
    with mp.workdps(dps):
        tm = [mp.mpf(x) for x in t]
        V = mp.matrix(m, m)
        for i in range(m):
            for j in range(m):
                V[i, j] = tm[i] ** j
        det = mp.det(V)
        Vinv = V ** -1
        s2 = mp.mpf(sigma2)
        nmax = N - K + m
        tot_inv = mp.mpf(0)
        tot_log = mp.mpf(0)
        for v in range(m):
            b = s2 / tm[v]
            eb = mp.e ** b
            emb = mp.e ** (-b)
            C = [eb * mp.e1(b)]
            for n in range(1, nmax + 1):
                C.append(mp.gamma(n) - b * C[-1])
            # cumulative sums of E_{r+1}(b), r = 0..nmax
            e_r = mp.e1(b)
            csum = [e_r]
            for r in range(1, nmax + 1):
                e_r = (emb - b * e_r) / r
                csum.append(csum[-1] + e_r)
            logs2 = mp.log(s2)
            for u in range(1, m + 1):
                n = N - K + u
                cof = det * Vinv[u - 1, v]
                tot_inv += cof * tm[v] ** (u - 2) * C[n] / mp.gamma(n + 1)
                tot_log += cof * tm[v] ** (u - 1) * (logs2 + eb * csum[n])
        return float(tot_inv / (m * det)), float(tot_log / (m * det))


def expected_quadform_moments(inputs: BoundInputs) -> tuple:
    """(E[1/(lam+sigma2)], E[ln(lam+sigma2)]) for the given inputs."""
    return _quadform_moments_cached(inputs.N, inputs.K, float(inputs.sigma2), tuple(float(x) for x in inputs.t))


def rate_upper_bound(inputs: BoundInputs, i2_terms: str = "corrected") -> float:
    """Jensen upper bound on the ergodic rate of the optimal combiner.

    The mean SINR splits into the interference-subspace part, a cofactor sum
    over the eigenvalue density, and the free-subspace part with one
    chi-square term per unused dimension. "corrected" counts the N-K+1 free
    dimensions; "printed" keeps the N-K-1 coefficient that appears in the
    source derivation (it undercounts and can dip below the simulated rate).
    """
    N, K = inputs.N, inputs.K
    if i2_terms == "corrected":
        free = N - K + 1
    elif i2_terms == "printed":
        free = N - K - 1
    else:
        raise ValueError(f"unknown i2_terms {i2_terms!r}")
    e_inv = expected_quadform_moments(inputs)[0] if K > 1 else 0.0
    mean_sinr = inputs.own_gain * ((K - 1) * e_inv + free / inputs.sigma2)
    return math.log2(1.0 + mean_sinr)


def rate_lower_bound(inputs: BoundInputs, variant: str = "derived") -> float:
    """Arithmetic-geometric-mean lower bound on the ergodic rate.

    Both variants share the closed-form E[ln(lam + sigma2)]. "derived"
    (default) follows the bounding chain with the exact log-moment of the
    free-subspace term (digamma of its chi-square order) and is a true bound
    everywhere. "printed" assembles the published expression, whose
    free-subspace constant omits the regularization level; it is tighter at
    moderate regularization but stops being a bound once sigma2 grows (it
    provably crosses the simulated rate around sigma2 ~ 90 for the
    50-antenna, 10-user reference scenario).
    """
    if inputs.K < 2:
        raise ValueError("lower bound needs K >= 2")
    _, e_log = expected_quadform_moments(inputs)
    N, K, s2 = inputs.N, inputs.K, inputs.sigma2
    if variant == "printed":
        arg = 2.0 * (K - 1) * inputs.own_gain * math.exp(-2.0 * EULER_GAMMA - e_log / 2.0)
    elif variant == "derived":
        arg = (
            2.0
            * inputs.own_gain
            * math.sqrt((K - 1) / s2)
            * math.exp((special.digamma(N - K + 1) - EULER_GAMMA - e_log) / 2.0)
        )
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return math.log2(1.0 + arg)


# ---------------------------------------------------------------------------
# deterministic equivalent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DEState:
    """Converged fixed point of the large-antenna SINR approximation.

    sinr_quadratic approximates the quadratic form the bounds describe;
    sinr_physical is its continuous-mapping image under the contamination
    feedback, and approximates the physical post-combining SINR.
    """

    delta: np.ndarray
    iterations: int
    residual: float
    sinr_quadratic: np.ndarray
    sinr_physical: np.ndarray


def deterministic_equivalent(
    stats: EstimationStats,
    lsf: LargeScaleFading,
    N: int,
    ref_cell: int = 0,
    tol: float = 1e-12,
    max_iter: int = 10000,
    variant: str = "aggregated",
    delta0: Optional[float] = None,
) -> DEState:
    """Fixed-point deterministic equivalent of the optimal combiner's SINR.

    "aggregated" (default) couples each user's auxiliary variable to the sum
    of its estimate variances over all cells, which is the correct structure
    when cross-cell estimates are co-linear copies of the own-cell one.
    "printed" runs the published per-cell iteration that treats the own-cell
    matrix alone; it is biased at finite interference and kept for comparison.
    """
    if stats.alpha == 0:
        raise ValueError("degenerate aging: alpha = 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    s2 = float(stats.sigma2[ref_cell])
    start = 1.0 / s2 if delta0 is None else float(delta0)
    if start <= 0:
        raise ValueError("starting value must be positive")
    bh = stats.beta_hat[ref_cell]              # (L, K)
    own = bh[ref_cell]
    if variant == "aggregated":
        t = bh.sum(axis=0)                     # (K,)
        delta = np.full_like(t, start)
        residual = np.inf
        for it in range(1, max_iter + 1):
            denom = s2 + np.sum(t / (1.0 + delta))
            new = t * N / denom
            residual = float(np.max(np.abs(new - delta) / np.maximum(np.abs(new), 1e-300)))
            delta = new
            if residual < tol:
                break
        else:
            raise ConvergenceError(f"fixed point did not converge within {max_iter} iterations", residual)
        trace = N / (s2 + np.sum(t / (1.0 + delta)))
        x = own * trace
        delta_full = bh * trace
    elif variant == "printed":
        delta_full = np.full_like(bh, start)
        residual = np.inf
        for it in range(1, max_iter + 1):
            denom = s2 + np.sum(bh / (1.0 + delta_full), axis=1)   # per cell i
            new = bh * N / denom[:, None]
            residual = float(np.max(np.abs(new - delta_full) / np.maximum(np.abs(new), 1e-300)))
            delta_full = new
            if residual < tol:
                break
        else:
            raise ConvergenceError(f"fixed point did not converge within {max_iter} iterations", residual)
        trace = N / (s2 + np.sum(bh[ref_cell] / (1.0 + delta_full[ref_cell])))
        x = own * trace
    else:
        raise ValueError(f"unknown variant {variant!r}")
    c = lsf.cross_power_sum(ref_cell)
    y = x / (1.0 + (c - 1.0) * x)
    return DEState(
        delta=delta_full,
        iterations=it,
        residual=residual,
        sinr_quadratic=x,
        sinr_physical=y,
    )


def de_sinr(
    stats: EstimationStats,
    lsf: LargeScaleFading,
    N: int,
    k: int,
    ref_cell: int = 0,
    tol: float = 1e-12,
    max_iter: int = 10000,
) -> float:
    """Deterministic-equivalent quadratic-form SINR of user k."""
    state = deterministic_equivalent(stats, lsf, N, ref_cell=ref_cell, tol=tol, max_iter=max_iter)
    return float(state.sinr_quadratic[k])
