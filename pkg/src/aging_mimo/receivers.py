"""Linear combiners for the reference BS and per-user uplink SINR evaluation.

Two SINR notions appear:

* ``sinr`` evaluates the physical post-combining ratio, counting every
  interference source including same-pilot users in other cells.
* ``olr_quadratic_sinr`` (and its eigen-split twin) evaluates the quadratic
  form g^H Xi^{-1} g of the optimal combiner, where Xi drops the k-th column
  from every cell's estimated matrix. This is the quantity the closed-form
  rate bounds and the large-antenna deterministic equivalent describe; it
  upper-envelopes the physical value whenever contamination is present.

Both are exposed because validation needs them side by side.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .channel import ChannelDraw
from .scenario import EstimationStats


class ReceiverKind(enum.Enum):
    OLR = "olr"
    MMSE = "mmse"
    MRC = "mrc"
    ZF = "zf"

    @classmethod
    def parse(cls, name: str) -> "ReceiverKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown receiver kind {name!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


@dataclass(frozen=True)
class CombinerSet:
    """Combiner columns for all K users of the reference cell."""

    W: np.ndarray
    kind: ReceiverKind


@dataclass(frozen=True)
class SinrSample:
    """Per-user SINR of one draw plus its power breakdown.

    Breakdown keys: signal, intra, aging, inter, noise. The ratio
    signal / (intra + aging + inter + noise) reconstructs the SINR.
    """

    value: np.ndarray
    signal: np.ndarray
    intra: np.ndarray
    aging: np.ndarray
    inter: np.ndarray
    noise: np.ndarray


def _cross_weights(draw: ChannelDraw) -> np.ndarray:
    """Per-user sum over cells of squared gain ratios at the reference BS."""
    return draw.lsf.cross_power_sum(draw.ref_cell)


def _mmse_reg(draw: ChannelDraw, stats: EstimationStats) -> float:
    l = draw.ref_cell
    beta = draw.lsf.beta
    z_l = stats.err_power[l, l] + beta[l].sum() - beta[l, l].sum()
    return (z_l + 1.0 / stats.p) / stats.alpha**2


def _sigma2(draw: ChannelDraw, stats: EstimationStats) -> float:
    return float(stats.sigma2[draw.ref_cell])


def olr_combiner(draw: ChannelDraw, stats: EstimationStats, k: int) -> np.ndarray:
    """SINR-maximizing combiner for user k: regularized inverse of the
    estimated-interference Gram matrix applied to the user's estimate."""
    s2 = _sigma2(draw, stats)
    if s2 <= 0:
        raise ValueError("effective regularization must be positive")
    G = draw.g_hat
    c = _cross_weights(draw)
    idx = np.arange(draw.K) != k
    Gk = G[:, idx]
    xi = (Gk * c[idx]) @ Gk.conj().T
    xi[np.diag_indices_from(xi)] += s2
    cho = sla.cho_factor(xi, lower=True)
    return sla.cho_solve(cho, G[:, k])


def mmse_combiner(draw: ChannelDraw, stats: EstimationStats, k: int) -> np.ndarray:
    """Conventional MMSE combiner: own-cell Gram matrix plus a deterministic
    diagonal loading that lumps residual error and cross-cell power."""
    G = draw.g_hat
    B = G @ G.conj().T
    B[np.diag_indices_from(B)] += _mmse_reg(draw, stats)
    cho = sla.cho_factor(B, lower=True)
    return stats.alpha * sla.cho_solve(cho, G[:, k])


def mrc_combiner(draw: ChannelDraw, stats: EstimationStats, k: int) -> np.ndarray:
    return stats.alpha * draw.g_hat[:, k]


def zf_combiner(draw: ChannelDraw, k: int) -> np.ndarray:
    """k-th column of the pseudo-inverse of the own-cell estimate."""
    return zf_combiner_matrix(draw)[:, k]


def zf_combiner_matrix(draw: ChannelDraw) -> np.ndarray:
    G = draw.g_hat
    gram = G.conj().T @ G
    try:
        cho = sla.cho_factor(gram, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("estimated channel matrix is rank deficient") from exc
    return G @ sla.cho_solve(cho, np.eye(draw.K, dtype=complex))


def combiner_matrix(draw: ChannelDraw, stats: EstimationStats, kind: ReceiverKind) -> CombinerSet:
    """All K combiner columns at once (single factorization per draw)."""
    G = draw.g_hat
    if kind is ReceiverKind.MRC:
        W = stats.alpha * G
    elif kind is ReceiverKind.ZF:
        W = zf_combiner_matrix(draw)
    elif kind is ReceiverKind.MMSE:
        B = G @ G.conj().T
        B[np.diag_indices_from(B)] += _mmse_reg(draw, stats)
        cho = sla.cho_factor(B, lower=True)
        W = stats.alpha * sla.cho_solve(cho, G)
    elif kind is ReceiverKind.OLR:
        # one factorization of the full weighted Gram matrix; removing user k's
        # own rank-one term only rescales the solution (Sherman-Morrison)
        s2 = _sigma2(draw, stats)
        c = _cross_weights(draw)
        A = (G * c) @ G.conj().T
        A[np.diag_indices_from(A)] += s2
        cho = sla.cho_factor(A, lower=True)
        X = sla.cho_solve(cho, G)
        q = np.einsum("nk,nk->k", G.conj(), X).real
        W = X / (1.0 - c * q)[None, :]
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(kind)
    return CombinerSet(W=W, kind=kind)


def sinr(
    w: np.ndarray,
    draw: ChannelDraw,
    stats: EstimationStats,
    k: int,
    return_breakdown: bool = False,
):
    """Physical post-combining SINR of user k for an arbitrary combiner w.

    Numerator: aging-scaled power of the estimated-channel gain toward user k.
    Denominator: intra-cell leakage, residual (estimation error + aging)
    power, cross-cell estimated interference and receiver noise.
    """
    w = np.asarray(w)
    if not np.all(np.isfinite(w)) or not np.any(w):
        raise ValueError("combiner must be finite and nonzero")
    sample = sinr_matrix(w[:, None], draw, stats, users=np.array([k]))
    if return_breakdown:
        return float(sample.value[0]), sample
    return float(sample.value[0])


def sinr_matrix(
    W: np.ndarray,
    draw: ChannelDraw,
    stats: EstimationStats,
    users: Optional[np.ndarray] = None,
) -> SinrSample:
    """Vectorized physical SINR for combiner columns W (column j serves users[j])."""
    G = draw.g_hat
    if users is None:
        users = np.arange(W.shape[1])
    l = draw.ref_cell
    alpha, p = stats.alpha, stats.p
    c = _cross_weights(draw)
    err_total = stats.err_power[l].sum()

    M = W.conj().T @ G                               # (n_w, K)
    M2 = np.abs(M) ** 2
    wnorm2 = np.sum(np.abs(W) ** 2, axis=0)
    a2p = alpha**2 * p
    own = M2[np.arange(len(users)), users]
    signal = a2p * own
    intra = a2p * (M2.sum(axis=1) - own)
    inter = a2p * (M2 * (c - 1.0)[None, :]).sum(axis=1)
    aging = p * err_total * wnorm2
    noise = wnorm2
    value = signal / (intra + aging + inter + noise)
    return SinrSample(value=value, signal=signal, intra=intra, aging=aging, inter=inter, noise=noise)


def olr_quadratic_sinr(draw: ChannelDraw, stats: EstimationStats, k: Optional[int] = None):
    """Quadratic form g_k^H Xi_k^{-1} g_k of the optimal combiner.

    Xi_k stacks the estimated matrices of every cell with their k-th column
    removed plus the effective regularization. Scalar for a single user,
    length-K vector when k is None.
    """
    G = draw.g_hat
    s2 = _sigma2(draw, stats)
    c = _cross_weights(draw)
    A = (G * c) @ G.conj().T
    A[np.diag_indices_from(A)] += s2
    cho = sla.cho_factor(A, lower=True)
    X = sla.cho_solve(cho, G)
    q = np.einsum("nk,nk->k", G.conj(), X).real
    x = q / (1.0 - c * q)
    if k is None:
        return x
    return float(x[k])


def olr_quadratic_sinr_direct(draw: ChannelDraw, stats: EstimationStats, k: int) -> float:
    """Same quadratic form, via an explicit factorization of Xi_k (reference path)."""
    w = olr_combiner(draw, stats, k)
    return float((draw.g_hat[:, k].conj() @ w).real)


def olr_sinr_eigen(draw: ChannelDraw, stats: EstimationStats, k: int) -> float:
    """Quadratic form evaluated through the eigen-decomposition split.

    The estimated-interference matrix has rank K-1; the SINR separates into a
    sum over its nonzero eigenvalues plus a residual-subspace term weighted by
    the inverse regularization.
    """
    G = draw.g_hat
    s2 = _sigma2(draw, stats)
    c = _cross_weights(draw)
    idx = np.arange(draw.K) != k
    Gk = G[:, idx]
    S = (Gk * c[idx]) @ Gk.conj().T
    lam, V = np.linalg.eigh((S + S.conj().T) / 2.0)
    g_bar = V.conj().T @ G[:, k]
    g2 = np.abs(g_bar) ** 2
    m = draw.K - 1
    top = lam[-m:] if m > 0 else np.empty(0)
    i1 = float(np.sum(g2[-m:] / (top + s2))) if m > 0 else 0.0
    i2 = float(np.sum(g2[: draw.N - m]) / s2)
    return i1 + i2


def eigen_rank(draw: ChannelDraw, stats: EstimationStats, k: int, rel_tol: float = 1e-10) -> int:
    """Number of eigenvalues of the k-removed interference matrix above rel_tol * trace."""
    G = draw.g_hat
    c = _cross_weights(draw)
    idx = np.arange(draw.K) != k
    Gk = G[:, idx]
    S = (Gk * c[idx]) @ Gk.conj().T
    lam = np.linalg.eigvalsh((S + S.conj().T) / 2.0)
    return int(np.sum(lam > rel_tol * lam.sum()))
