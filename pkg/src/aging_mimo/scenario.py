"""System configuration, large-scale fading generation and per-scenario statistics.

Everything in this module is deterministic given (config, seed) and immutable
once built, so values can be shared freely across Monte-Carlo workers.
All powers are linear scale; dB conversion happens only at the CLI boundary.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

SPEED_OF_LIGHT = 3.0e8

# spawn-key tags for deterministic, non-overlapping RNG substreams
STREAM_LSF = 1
STREAM_TRIALS = 2


class DegenerateAgingError(ValueError):
    """Aging coefficient is zero: the post-combining SINR is identically zero."""


class LayoutError(ValueError):
    """Cell count not expressible as a supported hexagonal layout."""


@dataclass(frozen=True)
class DopplerParams:
    """Mobility, either as the normalized product f_D*T_s or a physical triple.

    The normalized value is canonical; when (velocity, carrier, sampling period)
    are given, f_D = v * f_c / c with c = 3e8 m/s.
    """

    normalized: Optional[float] = None
    velocity_mps: Optional[float] = None
    carrier_hz: Optional[float] = None
    ts_s: Optional[float] = None

    def __post_init__(self):
        if self.normalized is None:
            triple = (self.velocity_mps, self.carrier_hz, self.ts_s)
            if any(v is None for v in triple):
                raise ValueError("give either normalized doppler or the full (v, f_c, T_s) triple")
            if any(v <= 0 for v in triple):
                raise ValueError("velocity, carrier frequency and sampling period must be positive")
        elif self.normalized < 0:
            raise ValueError("normalized doppler must be >= 0")

    @property
    def normalized_doppler(self) -> float:
        if self.normalized is not None:
            return float(self.normalized)
        f_d = self.velocity_mps * self.carrier_hz / SPEED_OF_LIGHT
        return float(f_d * self.ts_s)


@dataclass(frozen=True)
class ScenarioConfig:
    """Scalar system parameters for one scenario.

    L cells, K single-antenna users per cell, N BS antennas (N > K),
    uplink power p and pilot power p_p (linear), pilot length tau and
    coherence interval T in symbols.
    """

    L: int
    K: int
    N: int
    p: float
    p_p: float
    tau: int
    T: int
    doppler: DopplerParams
    seed: int = 0

    def __post_init__(self):
        if min(self.L, self.K, self.N) < 1:
            raise ValueError("L, K, N must be positive")
        if self.N <= self.K:
            raise ValueError(f"need more antennas than users per cell (N={self.N}, K={self.K})")
        if self.tau < 1:
            raise ValueError("pilot length must be >= 1")
        if self.T <= self.tau:
            raise ValueError("coherence interval must exceed the pilot length")
        if self.p <= 0 or self.p_p <= 0:
            raise ValueError("powers must be positive")

    @property
    def alpha(self) -> float:
        return aging_coefficient(self.doppler)

    @property
    def overhead_factor(self) -> float:
        return 1.0 - self.tau / self.T


@dataclass(frozen=True)
class LargeScaleFading:
    """Link-gain tensor beta[l, i, k]: BS l <- user k of cell i, linear scale."""

    beta: np.ndarray

    def __post_init__(self):
        beta = np.ascontiguousarray(np.asarray(self.beta, dtype=float))
        if beta.ndim != 3 or beta.shape[0] != beta.shape[1]:
            raise ValueError("beta must have shape (L, L, K)")
        if not np.all(beta > 0):
            raise ValueError("all large-scale gains must be strictly positive")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K(self) -> int:
        return self.beta.shape[2]

    def ratios(self, l: int, i: int) -> np.ndarray:
        """Diagonal of the gain-ratio matrix mapping BS l's own-cell estimate to cell i's."""
        return self.beta[l, i] / self.beta[l, l]

    def cross_power_sum(self, l: int) -> np.ndarray:
        """Per-user sum over all cells of the squared gain ratios at BS l (own cell contributes 1)."""
        r = self.beta[l] / self.beta[l, l][None, :]
        return np.sum(r * r, axis=0)


@dataclass(frozen=True)
class EstimationStats:
    """Deterministic pilot-estimation statistics derived from the gains.

    beta_hat[l, i, k] is the variance of the estimated channel entry,
    err_power[l, i] the total residual power per cell pair after aging,
    sigma2[l] the effective regularization level (aggregate error plus
    noise, divided by the squared aging coefficient).
    """

    beta_hat: np.ndarray
    err_power: np.ndarray
    sigma2: np.ndarray
    alpha: float
    p: float
    p_p: float

    def __post_init__(self):
        for name in ("beta_hat", "err_power", "sigma2"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def aging_coefficient(doppler: DopplerParams) -> float:
    """Temporal correlation between consecutive channel samples under isotropic scattering.

    Equals the zeroth-order Bessel function of the first kind evaluated at
    2*pi*f_D*T_s; 1 for a static user, 0 at the first Bessel zero
    (f_D*T_s ~ 0.3827) and oscillating with decaying amplitude beyond.
    """
    fd_ts = doppler.normalized_doppler
    if fd_ts < 0:
        raise ValueError("normalized doppler must be >= 0")
    return float(special.j0(2.0 * math.pi * fd_ts))


def uniform_interference_profile(
    config: ScenarioConfig, beta_cross: float, shadow_db_sigma: float = 0.0
) -> LargeScaleFading:
    """Flat profile: own-cell gains one, cross-cell gains beta_cross.

    With shadow_db_sigma > 0 each cross gain is additionally multiplied by a
    log-normal factor (drawn from the config seed), which breaks the exact
    user symmetry while keeping own-cell gains at one.
    """
    if beta_cross < 0:
        raise ValueError("beta_cross must be >= 0")
    L, K = config.L, config.K
    beta = np.full((L, L, K), max(beta_cross, 1e-300))
    if beta_cross > 0 and shadow_db_sigma > 0:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=config.seed, spawn_key=(STREAM_LSF,)))
        )
        shadow_db = rng.normal(0.0, shadow_db_sigma, size=(L, L, K))
        beta = beta * 10.0 ** (shadow_db / 10.0)
    idx = np.arange(L)
    beta[idx, idx, :] = 1.0
    return LargeScaleFading(beta=beta)


def _hex_centers(L: int, cell_radius: float) -> np.ndarray:
    # axial hex rings, center spacing sqrt(3)*circumradius; rotated 30 degrees
    # so the flat-top user cells tile without overlap
    rings = {1: 0, 7: 1, 19: 2}.get(L)
    if rings is None:
        raise LayoutError(f"hexagonal layout supports L in {{1, 7, 19}}, got L={L}")
    d = math.sqrt(3.0) * cell_radius
    centers = [(0.0, 0.0)]
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            s = -q - r
            if (q, r) == (0, 0) or max(abs(q), abs(r), abs(s)) > rings:
                continue
            x = d * (q + r / 2.0)
            y = d * (math.sqrt(3.0) / 2.0) * r
            centers.append((x, y))
    arr = np.asarray(centers)
    c, s = math.cos(math.pi / 6.0), math.sin(math.pi / 6.0)
    return arr @ np.array([[c, s], [-s, c]])


def _uniform_in_hexagon(rng: np.random.Generator, n: int, circumradius: float) -> np.ndarray:
    """Rejection-sample n points uniformly inside a flat-top hexagon at the origin."""
    pts = np.empty((n, 2))
    got = 0
    inradius = circumradius * math.sqrt(3.0) / 2.0
    while got < n:
        cand = rng.uniform(-circumradius, circumradius, size=(2 * (n - got) + 8, 2))
        x, y = np.abs(cand[:, 0]), np.abs(cand[:, 1])
        # flat-top hexagon: |y| below the horizontal edge and below the slanted edge
        ok = (y <= inradius) & (math.sqrt(3.0) * (circumradius - x) >= y)
        take = cand[ok][: n - got]
        pts[got : got + take.shape[0]] = take
        got += take.shape[0]
    return pts


def hexagonal_large_scale(
    config: ScenarioConfig,
    cell_radius: float,
    pathloss_exp: float,
    shadow_db_sigma: float,
    rng: Optional[np.random.Generator] = None,
) -> LargeScaleFading:
    """Drop K users uniformly in each hexagonal cell and build the gain tensor.

    Gains follow a power-law path loss with log-normal shadowing; distances
    are floored at 0.1 * cell_radius and the tensor is normalized so the
    median own-cell gain is one.
    """
    if pathloss_exp <= 2:
        raise ValueError("path-loss exponent must exceed 2")
    if cell_radius <= 0:
        raise ValueError("cell radius must be positive")
    L, K = config.L, config.K
    centers = _hex_centers(L, cell_radius)
    if rng is None:
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=config.seed, spawn_key=(STREAM_LSF,)))
        )
    r_min = 0.1 * cell_radius
    r_ref = cell_radius
    users = np.empty((L, K, 2))
    for i in range(L):
        users[i] = _uniform_in_hexagon(rng, K, cell_radius) + centers[i]
    # distances BS l <- user k of cell i
    diff = users[None, :, :, :] - centers[:, None, None, :]
    dist = np.maximum(np.hypot(diff[..., 0], diff[..., 1]), r_min)
    beta = (dist / r_ref) ** (-pathloss_exp)
    if shadow_db_sigma > 0:
        shadow_db = rng.normal(0.0, shadow_db_sigma, size=beta.shape)
        beta = beta * 10.0 ** (shadow_db / 10.0)
    own = beta[np.arange(L), np.arange(L), :]
    beta = beta / np.median(own)
    return LargeScaleFading(beta=beta)


def estimation_params(lsf: LargeScaleFading, alpha: float, p: float, p_p: float) -> EstimationStats:
    """Pilot-based channel-estimation statistics under contamination and aging.

    The estimate variance for (l, i, k) is beta^2 / (sum over cells of the
    same-index user's gains at BS l + 1/p_p): users sharing a pilot slot
    contaminate each other's estimates. The residual power per (l, i) sums
    the per-user gap between true and aging-scaled estimated variance, and
    sigma2 aggregates residuals plus receiver noise, scaled by 1/alpha^2.
    """
    if alpha == 0:
        raise DegenerateAgingError("alpha = 0: channel estimate carries no information about the current slot")
    if not (abs(alpha) <= 1):
        raise ValueError("|alpha| must lie in (0, 1]")
    if p <= 0 or p_p <= 0:
        raise ValueError("powers must be positive")
    beta = lsf.beta
    denom = beta.sum(axis=1) + 1.0 / p_p            # (L, K), sum over cells j
    beta_hat = beta**2 / denom[:, None, :]
    err_power = np.sum(beta - alpha**2 * beta_hat, axis=2)
    sigma2 = (err_power.sum(axis=1) + 1.0 / p) / alpha**2
    return EstimationStats(
        beta_hat=beta_hat, err_power=err_power, sigma2=sigma2, alpha=float(alpha), p=float(p), p_p=float(p_p)
    )


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------

_FADING_MODES = ("uniform", "hexagonal")

ENV_PREFIX = "AGING_MIMO_"

# mapping env suffix -> (section or None, key); values parsed like the file
_ENV_KEYS = {
    "CELLS": (None, "cells"),
    "USERS": (None, "users"),
    "ANTENNAS": (None, "antennas"),
    "SNR_DB": (None, "snr_db"),
    "PILOT_SNR_DB": (None, "pilot_snr_db"),
    "PILOT_LEN": (None, "pilot_len"),
    "COHERENCE_LEN": (None, "coherence_len"),
    "SEED": (None, "seed"),
    "REFERENCE_CELL": (None, "reference_cell"),
    "DOPPLER_NORMALIZED": ("doppler", "normalized"),
    "DOPPLER_VELOCITY_MPS": ("doppler", "velocity_mps"),
    "DOPPLER_CARRIER_HZ": ("doppler", "carrier_hz"),
    "DOPPLER_TS_S": ("doppler", "ts_s"),
    "FADING_MODE": ("fading", "mode"),
    "FADING_BETA_CROSS": ("fading", "beta_cross"),
    "FADING_SHADOW_DB": ("fading", "shadow_db"),
    "FADING_PATHLOSS_EXP": ("fading", "pathloss_exp"),
    "FADING_CELL_RADIUS": ("fading", "cell_radius"),
}


@dataclass(frozen=True)
class FadingConfig:
    mode: str = "uniform"
    beta_cross: float = 1.0
    shadow_db: float = 0.0
    pathloss_exp: float = 4.0
    cell_radius: float = 1000.0

    def __post_init__(self):
        if self.mode not in _FADING_MODES:
            raise ValueError(f"fading.mode must be one of {_FADING_MODES}")


@dataclass(frozen=True)
class Scenario:
    """Resolved scenario: scalar config plus fading recipe and reference cell (0-based)."""

    config: ScenarioConfig
    fading: FadingConfig = field(default_factory=FadingConfig)
    reference_cell: int = 0
    snr_db: float = 10.0
    pilot_snr_db: Optional[float] = None

    def large_scale(self) -> LargeScaleFading:
        if self.fading.mode == "uniform":
            return uniform_interference_profile(self.config, self.fading.beta_cross, self.fading.shadow_db)
        return hexagonal_large_scale(
            self.config, self.fading.cell_radius, self.fading.pathloss_exp, self.fading.shadow_db
        )


def _coerce(value: str):
    s = value.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def _apply_env_overrides(data: dict, environ=os.environ) -> dict:
    for suffix, (section, key) in _ENV_KEYS.items():
        raw = environ.get(ENV_PREFIX + suffix)
        if raw is None:
            continue
        if section is None:
            data[key] = _coerce(raw)
        else:
            data.setdefault(section, {})[key] = _coerce(raw)
    return data


def scenario_from_mapping(data: dict) -> Scenario:
    """Build a Scenario from a parsed config mapping (file keys, dB powers)."""
    try:
        dop = dict(data.get("doppler", {}))
        if "normalized" in dop:
            doppler = DopplerParams(normalized=float(dop["normalized"]))
        else:
            doppler = DopplerParams(
                velocity_mps=float(dop["velocity_mps"]),
                carrier_hz=float(dop["carrier_hz"]),
                ts_s=float(dop["ts_s"]),
            )
        snr_db = float(data.get("snr_db", 10.0))
        pilot_snr_db = data.get("pilot_snr_db")
        p = 10.0 ** (snr_db / 10.0)
        p_p = p if pilot_snr_db is None else 10.0 ** (float(pilot_snr_db) / 10.0)
        config = ScenarioConfig(
            L=int(data["cells"]),
            K=int(data["users"]),
            N=int(data["antennas"]),
            p=p,
            p_p=p_p,
            tau=int(data.get("pilot_len", 10)),
            T=int(data.get("coherence_len", 196)),
            doppler=doppler,
            seed=int(data.get("seed", 0)),
        )
        fad = dict(data.get("fading", {}))
        fading = FadingConfig(
            mode=str(fad.get("mode", "uniform")),
            beta_cross=float(fad.get("beta_cross", 1.0)),
            shadow_db=float(fad.get("shadow_db", 0.0)),
            pathloss_exp=float(fad.get("pathloss_exp", 4.0)),
            cell_radius=float(fad.get("cell_radius", 1000.0)),
        )
        reference_cell = int(data.get("reference_cell", 1)) - 1
        if not 0 <= reference_cell < config.L:
            raise ValueError("reference_cell out of range")
    except KeyError as exc:
        raise ValueError(f"missing config key: {exc.args[0]}") from exc
    return Scenario(
        config=config,
        fading=fading,
        reference_cell=reference_cell,
        snr_db=snr_db,
        pilot_snr_db=None if pilot_snr_db is None else float(pilot_snr_db),
    )


def load_scenario(path: str, environ=os.environ) -> Scenario:
    """Parse a TOML scenario file and apply AGING_MIMO_* environment overrides."""
    try:
        import tomllib  # py >= 3.11
    except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
        import tomli as tomllib
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    data = _apply_env_overrides(dict(data), environ)
    return scenario_from_mapping(data)


def trial_seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    """Deterministic, collision-free substream key for one unit of Monte-Carlo work."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trial_seed_sequence(seed, *key)))
