"""Recovery of beamforming vectors from relaxed covariance blocks.

Rank-one blocks are eigen-decomposed directly.  Otherwise candidate
directions are sampled from complex Gaussians with the relaxed covariances
and, by default, rescaled by solving the SINR-balancing linear system so
every trial that admits nonnegative powers is feasible; the raw
accept/reject scheme (no rescaling) remains available for comparison.
Candidates are scored with the exact network cost and the best feasible one
is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cachebeam.costmodel import (
    Beamformers,
    CostBreakdown,
    PopularityModel,
    QosConfig,
    all_sinr,
    network_cost,
)
from cachebeam.scenario import CachePlacement


class RoundingError(ValueError):
    pass


@dataclass(frozen=True)
class RoundingSettings:
    trials: int = 1000
    rank_tol: float = 1e-6
    paper_faithful: bool = False
    feas_tol: float = 1e-8


@dataclass
class RoundingReport:
    """Outcome of beamformer recovery for one slot."""

    method: str  # "eigen" | "randomized" | "failed"
    per_user_method: list[str]
    rank_ratios: np.ndarray  # lambda_2 / lambda_1 per user
    trials_attempted: int
    feasible: bool
    beamformers: Beamformers | None
    best_cost: CostBreakdown | None
    sinr: np.ndarray | None
    bs_powers: np.ndarray | None

    @property
    def best_objective(self) -> float:
        return self.best_cost.total if self.best_cost is not None else math.inf

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "per_user_method": self.per_user_method,
            "rank_ratios": self.rank_ratios.tolist(),
            "trials_attempted": self.trials_attempted,
            "feasible": self.feasible,
            "best_objective": self.best_objective,
            "sinr": self.sinr.tolist() if self.sinr is not None else None,
            "bs_powers": self.bs_powers.tolist() if self.bs_powers is not None else None,
            "beamformers_real": self.beamformers.w.real.tolist() if self.beamformers else None,
            "beamformers_imag": self.beamformers.w.imag.tolist() if self.beamformers else None,
            "cost": self.best_cost.to_dict() if self.best_cost else None,
        }


def extract_rank1(w_mat: np.ndarray, rank_tol: float = 1e-6) -> np.ndarray | None:
    """Dominant-eigenpair beamformer sqrt(lambda_1) u_1, if W is rank one.

    Returns None when lambda_2 / lambda_1 exceeds rank_tol.  The recovered
    vector's largest-magnitude entry is rotated to be real nonnegative.
    Raises if W has a negative eigenvalue beyond tolerance.
    """
    w_mat = np.asarray(w_mat, dtype=complex)
    vals, vecs = np.linalg.eigh(0.5 * (w_mat + w_mat.conj().T))
    lam1 = float(vals[-1])
    neg_tol = 1e-8 * max(1.0, abs(lam1))
    if vals[0] < -neg_tol:
        raise RoundingError(f"matrix has negative eigenvalue {vals[0]:.3e}")
    if lam1 <= 0:
        return None
    lam2 = float(vals[-2]) if vals.size > 1 else 0.0
    if max(lam2, 0.0) / lam1 > rank_tol:
        return None
    v = vecs[:, -1]
    k = int(np.argmax(np.abs(v)))
    phase = v[k] / abs(v[k]) if abs(v[k]) > 0 else 1.0
    return math.sqrt(lam1) * (v / phase)


def rank_ratios(w_set: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(len(w_set))
    for m, w_mat in enumerate(w_set):
        vals = np.linalg.eigvalsh(0.5 * (w_mat + w_mat.conj().T))
        lam1 = float(vals[-1])
        lam2 = float(vals[-2]) if vals.size > 1 else 0.0
        out[m] = max(lam2, 0.0) / lam1 if lam1 > 0 else 1.0
    return out


def _feasibility(
    w: np.ndarray,
    channels: np.ndarray,
    qos: QosConfig,
    noise_power_w: float,
    bs_count: int,
    antennas_per_bs: int,
    feas_tol: float,
) -> tuple[bool, np.ndarray, np.ndarray]:
    beams = Beamformers(w=w, bs_count=bs_count, antennas_per_bs=antennas_per_bs)
    sinr = all_sinr(beams, channels, noise_power_w)
    gammas = np.broadcast_to(qos.sinr_targets, sinr.shape)
    bs_powers = beams.block_powers().sum(axis=0)  # per BS
    ok = bool(np.all(sinr >= gammas * (1.0 - feas_tol)) and np.all(bs_powers <= qos.p_max_w * (1.0 + feas_tol)))
    return ok, sinr, bs_powers


def _balance_powers(
    directions: np.ndarray, channels: np.ndarray, gammas: np.ndarray, noise_power_w: float
) -> np.ndarray | None:
    """Per-user powers making every SINR exactly equal to its target.

    Solves the M x M linear system implied by the SINR equalities for unit
    directions; returns None when no nonnegative solution exists.
    """
    cross = np.abs(channels.conj() @ directions.T) ** 2  # [m, j] = |h_m^H u_j|^2
    k = -gammas[:, None] * cross
    np.fill_diagonal(k, np.diag(cross))
    try:
        p = np.linalg.solve(k, gammas * noise_power_w)
    except np.linalg.LinAlgError:
        return None
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        return None
    return p


def _eigen_candidate(
    w_set: list[np.ndarray],
    channels: np.ndarray,
    qos: QosConfig,
    noise_power_w: float,
    rank_tol: float,
) -> np.ndarray | None:
    ws = []
    for w_mat in w_set:
        v = extract_rank1(w_mat, rank_tol)
        if v is None:
            return None
        ws.append(v)
    w = np.array(ws)
    # Eigen truncation can leave SINRs short by O(rank_tol); a single common
    # up-scaling restores them without changing the serving pattern.
    gammas = np.broadcast_to(qos.sinr_targets, (w.shape[0],))
    cross = np.abs(channels.conj() @ w.T) ** 2
    margin = np.diag(cross) - gammas * (cross.sum(axis=1) - np.diag(cross))
    if np.any(margin <= 0):
        return None
    t = math.sqrt(max(1.0, float(np.max(gammas * noise_power_w / margin))))
    return t * w


def gaussian_randomize(
    w_set: list[np.ndarray],
    channels: np.ndarray,
    placement: CachePlacement,
    popularity: PopularityModel,
    qos: QosConfig,
    noise_power_w: float,
    trials: int,
    rng: np.random.Generator,
    settings: RoundingSettings | None = None,
) -> RoundingReport:
    """Recover beamformers from relaxed covariances, best-of-N by exact cost.

    All-rank-one inputs short-circuit to eigen extraction without consuming
    any trials.  Sampling uses the Hermitian square root of each covariance
    with negative eigenvalues clipped to zero; an infeasible slot (no
    feasible candidate in any trial) is reported as method="failed".
    """
    st = settings or RoundingSettings(trials=trials)
    if trials < 1:
        raise RoundingError("trials must be >= 1")
    M = len(w_set)
    L = placement.bs_count
    nt = channels.shape[1] // L
    ratios = rank_ratios(w_set)
    gammas = np.broadcast_to(np.atleast_1d(qos.sinr_targets), (M,)).astype(float)

    def finish(w, method, n_trials):
        ok, sinr, bs_p = _feasibility(w, channels, qos, noise_power_w, L, nt, st.feas_tol)
        if not ok:
            return None
        beams = Beamformers(w=w, bs_count=L, antennas_per_bs=nt)
        cost = network_cost(beams, placement, popularity, qos)
        return RoundingReport(
            method=method,
            per_user_method=[method] * M,
            rank_ratios=ratios,
            trials_attempted=n_trials,
            feasible=True,
            beamformers=beams,
            best_cost=cost,
            sinr=sinr,
            bs_powers=bs_p,
        )

    if np.all(ratios <= st.rank_tol):
        w = _eigen_candidate(w_set, channels, qos, noise_power_w, st.rank_tol)
        if w is not None:
            report = finish(w, "eigen", 0)
            if report is not None:
                return report

    # Hermitian square roots for sampling.
    roots = []
    for w_mat in w_set:
        vals, vecs = np.linalg.eigh(0.5 * (w_mat + w_mat.conj().T))
        roots.append((vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T)

    n = channels.shape[1]
    best: RoundingReport | None = None
    for trial in range(trials):
        z = (rng.standard_normal((M, n)) + 1j * rng.standard_normal((M, n))) / math.sqrt(2.0)
        sampled = np.array([roots[m] @ z[m] for m in range(M)])
        if st.paper_faithful:
            w = sampled
        else:
            norms = np.linalg.norm(sampled, axis=1)
            if np.any(norms == 0):
                continue
            directions = sampled / norms[:, None]
            p = _balance_powers(directions, channels, gammas, noise_power_w)
            if p is None:
                continue
            w = directions * np.sqrt(p)[:, None]
        candidate = finish(w, "randomized", trial + 1)
        if candidate is not None and (best is None or candidate.best_objective < best.best_objective):
            best = candidate
    if best is not None:
        best.trials_attempted = trials
        return best

    return RoundingReport(
        method="failed",
        per_user_method=["failed"] * M,
        rank_ratios=ratios,
        trials_attempted=trials,
        feasible=False,
        beamformers=None,
        best_cost=None,
        sinr=None,
        bs_powers=None,
    )
