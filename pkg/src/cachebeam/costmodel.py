"""Exact (non-relaxed) SINR, coverage, and network-cost evaluation.

These functions define what a candidate beamformer set actually costs;
the optimizer's smoothed surrogate is never reported.  A BS counts as
serving a user when that block's transmit power exceeds a small threshold
(solver output is never exactly zero).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cachebeam.scenario import CachePlacement, PopularityModel


@dataclass(frozen=True)
class QosConfig:
    """Per-user SINR targets (linear), per-BS power cap, and the cost weight."""

    sinr_targets: np.ndarray
    p_max_w: float = 1.0
    weight_lambda: float = 0.5
    serve_threshold_w: float | None = None  # defaults to 1e-4 * p_max_w

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.sinr_targets, dtype=float))
        if np.any(g <= 0):
            raise ValueError("SINR targets must be positive")
        if self.p_max_w <= 0:
            raise ValueError("p_max_w must be positive")
        if not 0.0 <= self.weight_lambda <= 1.0:
            raise ValueError("weight_lambda must lie in [0, 1]")
        object.__setattr__(self, "sinr_targets", g)

    @property
    def serve_eps(self) -> float:
        if self.serve_threshold_w is not None:
            return self.serve_threshold_w
        return 1e-4 * self.p_max_w


@dataclass(frozen=True)
class Beamformers:
    """Per-user stacked beamforming vectors, one row per user.

    Row m holds [w_{1,m}; ...; w_{L,m}] with N_t entries per BS block.
    """

    w: np.ndarray
    bs_count: int
    antennas_per_bs: int

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.ndim != 2 or w.shape[1] != self.bs_count * self.antennas_per_bs:
            raise ValueError("beamformer shape inconsistent with (L, N_t)")
        if not np.all(np.isfinite(w.view(float))):
            raise ValueError("beamformers must be finite")
        object.__setattr__(self, "w", w)

    @property
    def users(self) -> int:
        return self.w.shape[0]

    def block_powers(self) -> np.ndarray:
        """(M, L) matrix of per-BS transmit powers ||w_{l,m}||^2."""
        M = self.users
        blocks = self.w.reshape(M, self.bs_count, self.antennas_per_bs)
        return np.sum(np.abs(blocks) ** 2, axis=2)


@dataclass(frozen=True)
class CostBreakdown:
    """Backhaul cost, power cost, weighted total, and per-(user, file) detail."""

    backhaul_cost: float
    power_cost: float
    total: float
    weight_lambda: float
    missing_fraction: np.ndarray  # X[m, f] in [0, 1]
    indicator: np.ndarray  # 1[m, f] in {0, 1}
    per_pair_backhaul: np.ndarray  # Z_f * indicator * X * R_m

    def to_dict(self) -> dict:
        return {
            "backhaul_cost": self.backhaul_cost,
            "power_cost": self.power_cost,
            "total": self.total,
            "weight_lambda": self.weight_lambda,
            "missing_fraction": self.missing_fraction.tolist(),
            "indicator": self.indicator.tolist(),
            "per_pair_backhaul": self.per_pair_backhaul.tolist(),
        }

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def sinr_of(m: int, beams: Beamformers, channels: np.ndarray, noise_power_w: float) -> float:
    """Linear SINR of user m: |h_m^H w_m|^2 / (sum_{j != m} |h_m^H w_j|^2 + sigma^2)."""
    h_m = channels[m]
    gains = np.abs(beams.w.conj() @ h_m) ** 2  # |h_m^H w_j|^2 for all j
    signal = gains[m]
    interference = gains.sum() - signal
    return float(signal / (interference + noise_power_w))


def all_sinr(beams: Beamformers, channels: np.ndarray, noise_power_w: float) -> np.ndarray:
    """Vector of linear SINRs for every user."""
    cross = np.abs(channels.conj() @ beams.w.T) ** 2  # [m, j] = |h_m^H w_j|^2
    signal = np.diag(cross).copy()
    interference = cross.sum(axis=1) - signal
    return signal / (interference + noise_power_w)


def rate_of(sinr_linear) -> np.ndarray | float:
    """Achievable rate log2(1 + SINR) in bits per channel use."""
    g = np.asarray(sinr_linear, dtype=float)
    if np.any(g < 0):
        raise ValueError("SINR must be nonnegative")
    out = np.log2(1.0 + g)
    return float(out) if out.ndim == 0 else out


def serving_mask(beams: Beamformers, serve_eps: float) -> np.ndarray:
    """(M, L) boolean mask: BS l serves user m when ||w_{l,m}||^2 > serve_eps."""
    if serve_eps <= 0:
        raise ValueError("serve threshold must be positive")
    return beams.block_powers() > serve_eps


def coverage(f: int, m: int, beams: Beamformers, placement: CachePlacement, serve_eps: float) -> float:
    """Recoverable fraction of file f at user m: sum_l delta_{f,l} over serving BSs."""
    mask = serving_mask(beams, serve_eps)[m]
    return float(placement.delta[f, mask].sum())


def coverage_matrix(beams: Beamformers, placement: CachePlacement, serve_eps: float) -> np.ndarray:
    """(M, F) matrix of recoverable fractions."""
    mask = serving_mask(beams, serve_eps)  # (M, L)
    return mask.astype(float) @ placement.delta.T


def network_cost(
    beams: Beamformers,
    placement: CachePlacement,
    popularity: PopularityModel,
    qos: QosConfig,
) -> CostBreakdown:
    """Weighted sum of exact backhaul cost and transmit power.

    Backhaul: sum_m sum_f Z_f * max(0, 1 - coverage) * log2(1 + gamma_m),
    the expectation over the request distribution of the file fraction that
    must be fetched from the cloud.  Power: sum_m ||w_m||^2.
    """
    M = beams.users
    gammas = np.broadcast_to(qos.sinr_targets, (M,))
    rates = rate_of(gammas)  # (M,)

    cov = coverage_matrix(beams, placement, qos.serve_eps)  # (M, F)
    missing = np.clip(1.0 - cov, 0.0, 1.0)
    indicator = (cov < 1.0).astype(float)
    z = popularity.probabilities[None, :]

    per_pair = z * indicator * missing * rates[:, None]
    backhaul = float(per_pair.sum())
    power = float(np.sum(np.abs(beams.w) ** 2))
    lam = qos.weight_lambda
    return CostBreakdown(
        backhaul_cost=backhaul,
        power_cost=power,
        total=lam * backhaul + (1.0 - lam) * power,
        weight_lambda=lam,
        missing_fraction=missing,
        indicator=indicator,
        per_pair_backhaul=per_pair,
    )


def backhaul_max_form(
    beams: Beamformers,
    placement: CachePlacement,
    popularity: PopularityModel,
    qos: QosConfig,
) -> float:
    """Backhaul cost written with the max form sum Z_f {1 - coverage}^+ R_m.

    Agrees exactly with the indicator form used by network_cost; kept as an
    independent expression for equivalence checks.
    """
    M = beams.users
    rates = rate_of(np.broadcast_to(qos.sinr_targets, (M,)))
    cov = coverage_matrix(beams, placement, qos.serve_eps)
    pos_missing = np.maximum(0.0, 1.0 - cov)
    return float((popularity.probabilities[None, :] * pos_missing * rates[:, None]).sum())
