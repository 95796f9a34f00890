"""Small-scale fading: estimated channels, aging innovations and a symbol-level oracle.

Only the reference BS's receive chain is ever materialized; estimated channels
toward other cells' users follow from the own-cell estimate through the
gain-ratio relation, which is what pilot contamination forces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import EstimationStats, LargeScaleFading


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian, variance 1 per entry (1/2 per component)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class ChannelDraw:
    """One realization of the reference BS's estimated own-cell channel matrix (N x K)."""

    g_hat: np.ndarray
    ref_cell: int
    lsf: LargeScaleFading

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.g_hat, dtype=complex))
        g.setflags(write=False)
        object.__setattr__(self, "g_hat", g)

    @property
    def N(self) -> int:
        return self.g_hat.shape[0]

    @property
    def K(self) -> int:
        return self.g_hat.shape[1]


@dataclass(frozen=True)
class FullState:
    """Estimated channel plus the true current channels toward every cell (oracle path)."""

    draw: ChannelDraw
    g_true: np.ndarray      # (L, N, K) true channels at the current slot
    err: np.ndarray         # (L, N, K) residual components (aged estimation error + innovation)


@dataclass(frozen=True)
class TransmissionSample:
    x: np.ndarray           # (L, K) unit-power transmit symbols
    z: np.ndarray           # (N,) receiver noise
    y: np.ndarray           # (N,) received vector at the reference BS
    r: np.ndarray           # (K,) post-combining outputs


def sample_estimate(
    stats: EstimationStats,
    lsf: LargeScaleFading,
    N: int,
    rng: np.random.Generator,
    ref_cell: int = 0,
) -> ChannelDraw:
    """Draw the reference BS's own-cell channel estimate.

    Column k has i.i.d. complex Gaussian entries with variance equal to that
    user's estimate variance.
    """
    scale = np.sqrt(stats.beta_hat[ref_cell, ref_cell])
    g_hat = complex_gaussian(rng, (N, lsf.K)) * scale[None, :]
    return ChannelDraw(g_hat=g_hat, ref_cell=ref_cell, lsf=lsf)


def cross_cell_estimate(draw: ChannelDraw, i: int) -> np.ndarray:
    """Estimated channel from cell i's users, obtained by rescaling the own-cell estimate."""
    if not 0 <= i < draw.lsf.L:
        raise IndexError(f"cell index {i} out of range for L={draw.lsf.L}")
    if i == draw.ref_cell:
        return draw.g_hat
    return draw.g_hat * draw.lsf.ratios(draw.ref_cell, i)[None, :]


def sample_true_state(
    draw: ChannelDraw, stats: EstimationStats, rng: np.random.Generator
) -> FullState:
    """Advance one slot: true channel = alpha * estimate + independent residual.

    Residual column variances are beta - alpha^2 * beta_hat; residuals are
    sampled independently across cells, which leaves every second-order
    quantity of the received signal unchanged.
    """
    alpha = stats.alpha
    if abs(alpha) > 1:
        raise ValueError("|alpha| must be <= 1")
    l = draw.ref_cell
    lsf = draw.lsf
    L, N, K = lsf.L, draw.N, draw.K
    var = np.maximum(lsf.beta[l] - alpha**2 * stats.beta_hat[l], 0.0)   # (L, K)
    err = complex_gaussian(rng, (L, N, K)) * np.sqrt(var)[:, None, :]
    g_true = np.empty((L, N, K), dtype=complex)
    for i in range(L):
        g_true[i] = alpha * cross_cell_estimate(draw, i) + err[i]
    return FullState(draw=draw, g_true=g_true, err=err)


def simulate_symbol(state: FullState, W: np.ndarray, p: float, rng: np.random.Generator) -> TransmissionSample:
    """One uplink symbol through the true channels, combined with W (oracle only)."""
    _check_combiners(W)
    L, N, K = state.g_true.shape
    x = complex_gaussian(rng, (L, K))
    z = complex_gaussian(rng, (N,))
    y = z.copy()
    if p > 0:
        for i in range(L):
            y += np.sqrt(p) * state.g_true[i] @ x[i]
    r = W.conj().T @ y
    return TransmissionSample(x=x, z=z, y=y, r=r)


def empirical_sinr(
    draw: ChannelDraw,
    W: np.ndarray,
    stats: EstimationStats,
    n_symbols: int,
    rng: np.random.Generator,
    batch: int = 2000,
) -> np.ndarray:
    """Measure per-user SINR by transmitting symbols through the true channels.

    Conditions on the channel estimate: per symbol, a fresh aging/estimation
    residual is drawn on top of the aged estimate (the true channel varies
    from slot to slot). The useful part of the combined output is the
    estimate-based gain alpha * sqrt(p) * w^H g_hat applied to the desired
    symbol; everything else (interference, residual self-term, noise) counts
    as distortion.
    """
    _check_combiners(W)
    l = draw.ref_cell
    lsf = draw.lsf
    L, N, K = lsf.L, draw.N, draw.K
    p, alpha = stats.p, stats.alpha
    sqrt_p = np.sqrt(p)
    gains = alpha * sqrt_p * (W.conj().T @ draw.g_hat).diagonal()             # (K,)
    wh_ghat = np.stack([W.conj().T @ cross_cell_estimate(draw, i) for i in range(L)])  # (L, K, K)
    err_std = np.sqrt(np.maximum(lsf.beta[l] - alpha**2 * stats.beta_hat[l], 0.0))     # (L, K)
    noise_pow = np.zeros(K)
    done = 0
    while done < n_symbols:
        m = min(batch, n_symbols - done)
        x = complex_gaussian(rng, (L, K, m))
        z = complex_gaussian(rng, (N, m))
        err = complex_gaussian(rng, (L, N, K, m)) * err_std[:, None, :, None]
        r = alpha * sqrt_p * np.einsum("ikj,ijm->km", wh_ghat, x)
        r += sqrt_p * np.einsum("nk,injm,ijm->km", W.conj(), err, x)
        r += W.conj().T @ z
        e = r - gains[:, None] * x[l]
        noise_pow += np.sum(np.abs(e) ** 2, axis=1)
        done += m
    noise_pow /= n_symbols
    return np.abs(gains) ** 2 / noise_pow


def _check_combiners(W: np.ndarray) -> None:
    if not np.all(np.isfinite(W)):
        raise ValueError("combiner matrix has non-finite entries")
    norms = np.linalg.norm(W, axis=0)
    if np.any(norms == 0):
        raise ValueError("combiner matrix has a zero column")


def dump_draw(draw: ChannelDraw, path: str) -> None:
    """Debug dump for regression fixtures: row-major little-endian doubles,
    real and imaginary parts interleaved along the last axis."""
    flat = np.empty((draw.N, draw.K, 2), dtype="<f8")
    flat[..., 0] = draw.g_hat.real
    flat[..., 1] = draw.g_hat.imag
    with open(path, "wb") as fh:
        fh.write(np.asarray([draw.N, draw.K, draw.ref_cell], dtype="<i8").tobytes())
        fh.write(flat.tobytes(order="C"))


def load_draw(path: str, lsf: LargeScaleFading) -> ChannelDraw:
    with open(path, "rb") as fh:
        N, K, ref_cell = np.frombuffer(fh.read(24), dtype="<i8")
        flat = np.frombuffer(fh.read(), dtype="<f8").reshape(N, K, 2)
    return ChannelDraw(g_hat=flat[..., 0] + 1j * flat[..., 1], ref_cell=int(ref_cell), lsf=lsf)
