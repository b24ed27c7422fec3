"""Convex relaxation of the beamforming network-cost problem.

Beamformers are lifted to covariance blocks W_m, the serving indicator is
smoothed to log(tr(W_m J_l) + theta), and the resulting concave terms are
handled by outer approximation: each tangent overestimates the log, so any
finite cut pool yields a linear SDP that relaxes the smoothed problem, and
adding cuts at the incumbent tightens it monotonically.  Complex Hermitian
data is embedded as real symmetric blocks of doubled size before it reaches
the conic solver.

Inside the solver, channels are divided by the noise std so sigma^2 = 1 and
trace magnitudes stay near O(1); every reported quantity is in physical
units (watts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from cachebeam.conic import ConicProblem, ConicSolution, SolverSettings, SolveStatus, solve

LAMBDA_CAP = 0.999  # at weight 1 the power term vanishes and the optimum is degenerate


class RelaxationError(ValueError):
    pass


class MmStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NOT_CONVERGED = "not_converged"


# ---------------------------------------------------------------------------
# Lifting helpers
# ---------------------------------------------------------------------------

def lift_channel(h: np.ndarray) -> np.ndarray:
    """Rank-one channel outer product H = h h^H."""
    h = np.asarray(h, dtype=complex)
    if not np.all(np.isfinite(h.view(float))):
        raise RelaxationError("channel must be finite")
    return np.outer(h, h.conj())


def selection_matrix(l: int, bs_count: int, antennas_per_bs: int) -> np.ndarray:
    """Diagonal 0/1 matrix picking BS l's antenna block (l is 1-based)."""
    if not 1 <= l <= bs_count:
        raise RelaxationError(f"BS index {l} out of range 1..{bs_count}")
    d = np.zeros(bs_count * antennas_per_bs)
    d[(l - 1) * antennas_per_bs : l * antennas_per_bs] = 1.0
    return np.diag(d)


def embed_hermitian(a: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix."""
    re, im = a.real, a.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(x: np.ndarray) -> np.ndarray:
    """Project a real symmetric 2n x 2n matrix back to the Hermitian n x n space.

    Inverse of embed_hermitian on embedded inputs; orthogonal projection (and
    PSD-preserving) otherwise, so traces against embedded data are unchanged.
    """
    n = x.shape[0] // 2
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    h = re + 1j * im
    return 0.5 * (h + h.conj().T)


def block_traces(w: np.ndarray, bs_count: int, antennas_per_bs: int) -> np.ndarray:
    """tr(W J_l) for l = 1..L from the diagonal of a complex covariance."""
    diag = np.real(np.diag(w))
    return diag.reshape(bs_count, antennas_per_bs).sum(axis=1)


# ---------------------------------------------------------------------------
# Problem data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LiftedScenario:
    """One slot's optimization data in solver-ready form.

    ``channels`` are physical; scaled copies (divided by the noise std) and
    their embedded outer products are derived on construction.  Files with
    identical cache rows share one auxiliary backhaul variable since their
    coverage constraints coincide; the grouping is exact, not a heuristic.
    """

    channels: np.ndarray  # M x (L * N_t), physical units
    delta: np.ndarray  # F x L cache fractions
    popularity: np.ndarray  # Z_f, length F
    sinr_targets: np.ndarray  # linear, length M
    noise_power_w: float
    p_max_w: float
    weight_lambda: float
    theta: float = 0.01
    bs_count: int = 0
    antennas_per_bs: int = 0

    # derived
    h_scaled: np.ndarray = field(init=False, repr=False)
    h_embed: np.ndarray = field(init=False, repr=False)  # (M, 2n, 2n) coefficient matrices
    j_embed: np.ndarray = field(init=False, repr=False)  # (L, 2n, 2n) coefficient matrices
    group_of_file: np.ndarray = field(init=False, repr=False)
    group_rows: np.ndarray = field(init=False, repr=False)  # (G, L) distinct delta rows
    group_weight: np.ndarray = field(init=False, repr=False)  # (G,) summed Z_f per group

    def __post_init__(self):
        h = np.asarray(self.channels, dtype=complex)
        if h.ndim != 2:
            raise RelaxationError("channels must be M x (L * N_t)")
        L, nt = self.bs_count, self.antennas_per_bs
        if L < 1 or nt < 1 or h.shape[1] != L * nt:
            raise RelaxationError("channel width inconsistent with (L, N_t)")
        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 2 or delta.shape[1] != L:
            raise RelaxationError("delta must be F x L")
        z = np.asarray(self.popularity, dtype=float)
        if z.shape != (delta.shape[0],):
            raise RelaxationError("popularity length must match delta rows")
        g = np.asarray(self.sinr_targets, dtype=float)
        if g.shape != (h.shape[0],):
            raise RelaxationError("one SINR target per user required")
        if not 0 < self.theta <= 1:
            raise RelaxationError("theta must lie in (0, 1]")
        if self.noise_power_w <= 0 or self.p_max_w <= 0:
            raise RelaxationError("noise power and power cap must be positive")
        object.__setattr__(self, "channels", h)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "popularity", z)
        object.__setattr__(self, "sinr_targets", g)
        object.__setattr__(self, "weight_lambda", min(float(self.weight_lambda), LAMBDA_CAP))

        hs = h / math.sqrt(self.noise_power_w)
        object.__setattr__(self, "h_scaled", hs)
        # Coefficient matrices are halved so tr(coef X_embed) equals the
        # complex trace tr(H W) / tr(J W).
        he = np.array([0.5 * embed_hermitian(lift_channel(hs[m])) for m in range(h.shape[0])])
        object.__setattr__(self, "h_embed", he)
        je = np.array(
            [0.5 * embed_hermitian(selection_matrix(l + 1, L, nt).astype(complex)) for l in range(L)]
        )
        object.__setattr__(self, "j_embed", je)

        rows, inverse = np.unique(delta, axis=0, return_inverse=True)
        weights = np.zeros(rows.shape[0])
        np.add.at(weights, inverse, z)
        object.__setattr__(self, "group_of_file", inverse.astype(int))
        object.__setattr__(self, "group_rows", rows)
        object.__setattr__(self, "group_weight", weights)

    @property
    def users(self) -> int:
        return self.channels.shape[0]

    @property
    def files(self) -> int:
        return self.delta.shape[0]

    @property
    def rates(self) -> np.ndarray:
        return np.log2(1.0 + self.sinr_targets)

    @property
    def active_pairs(self) -> bool:
        return bool(np.any(self.group_rows > 0))


@dataclass
class CutPool:
    """Tangent linearization points t0 >= 0 of log(t + theta), per (user, BS)."""

    points: dict[tuple[int, int], list[float]] = field(default_factory=dict)

    @classmethod
    def initial(cls, users: int, bs_count: int, p_max_w: float) -> "CutPool":
        """Tangents at 0 and p_max for every pair, bracketing the trace range."""
        pool = cls()
        for m in range(users):
            for l in range(bs_count):
                pool.points[(m, l)] = [0.0, float(p_max_w)]
        return pool

    def add(self, m: int, l: int, t0: float, min_gap: float = 1e-10) -> bool:
        """Add a tangent point unless one already exists within min_gap."""
        if not np.isfinite(t0) or t0 < 0:
            raise RelaxationError(f"tangent point must be finite and nonnegative, got {t0}")
        pts = self.points.setdefault((m, l), [])
        if any(abs(t0 - p) <= min_gap for p in pts):
            return False
        pts.append(float(t0))
        return True

    def total(self) -> int:
        return sum(len(v) for v in self.points.values())


def tangent(t0: float, theta: float) -> tuple[float, float]:
    """(value, slope) of the tangent to log(t + theta) at t0; overestimates the log."""
    return math.log(t0 + theta), 1.0 / (t0 + theta)


@dataclass
class _Layout:
    """Index map of the assembled conic problem's variables and rows."""

    users: int
    bs_count: int
    beta_idx: np.ndarray  # (G, M) -> nn index
    v_idx: dict[tuple[int, int], int]
    sinr_rows: list[int]
    power_rows: list[int]
    n_nn: int


@dataclass
class RelaxedSolution:
    """Optimum of the cut-tightened relaxation, in physical units."""

    status: MmStatus
    w_matrices: list[np.ndarray]  # complex Hermitian PSD, watts
    beta: np.ndarray  # F x M auxiliary backhaul fractions
    objective: float
    cut_count: int
    rounds: int
    max_violation: float
    solver_status: SolveStatus
    solver_residuals: tuple[float, float, float]
    block_trace: np.ndarray  # (M, L) tr(W_m J_l)
    pool: CutPool
    objective_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class MmSettings:
    violation_tol: float = 1e-6
    objective_rel_tol: float = 1e-5
    cut_tol: float = 1e-7
    max_cut_rounds: int = 30


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def assemble_linearized_sdp(lifted: LiftedScenario, cuts: CutPool) -> ConicProblem:
    """Linear SDP whose feasible set contains the smoothed problem's.

    Variables: one embedded PSD block per user; nonnegative scalars are the
    per-(group, user) backhaul fractions beta followed by per-(user, BS)
    shifted hypograph values v = log(tr + theta) - log(theta) >= 0.  Rows:
    SINR (>=), per-BS power (<=), one hypograph row per tangent (v below
    every tangent), and one coverage row per (group, user).

    The assembled problem carries the index map on a ``layout`` attribute.
    """
    M, L = lifted.users, lifted.bs_count
    n_embed = 2 * lifted.channels.shape[1]
    G = lifted.group_rows.shape[0]
    lam = lifted.weight_lambda
    theta = lifted.theta
    log_theta = math.log(theta)

    active = sorted({(m, l) for m in range(M) for l in range(L) if np.any(lifted.group_rows[:, l] > 0)})
    for key in active:
        if not cuts.points.get(key):
            raise RelaxationError(f"cut pool is empty for user/BS pair {key}")

    n_beta = G * M
    v_idx = {key: n_beta + i for i, key in enumerate(active)}
    prob = ConicProblem(psd_dims=[n_embed] * M, nonneg=n_beta + len(active))

    beta_idx = np.arange(n_beta).reshape(G, M)
    rates = lifted.rates
    obj_nn: dict[int, float] = {}
    for g in range(G):
        for m in range(M):
            obj_nn[int(beta_idx[g, m])] = lam * float(lifted.group_weight[g]) * float(rates[m])
    prob.set_objective(
        psd={m: 0.5 * (1.0 - lam) * np.eye(n_embed) for m in range(M)},
        nn=obj_nn,
    )

    sinr_rows = []
    for m in range(M):
        gamma = float(lifted.sinr_targets[m])
        coeffs = {n: (1.0 if n == m else -gamma) * lifted.h_embed[m] for n in range(M)}
        sinr_rows.append(prob.add_row(">=", gamma, psd=coeffs))

    power_rows = []
    for l in range(L):
        power_rows.append(
            prob.add_row("<=", lifted.p_max_w, psd={m: lifted.j_embed[l] for m in range(M)})
        )

    for (m, l) in active:
        for t0 in cuts.points[(m, l)]:
            val, slope = tangent(t0, theta)
            rhs = val - log_theta - slope * t0
            prob.add_row(
                "<=",
                rhs,
                psd={m: -slope * lifted.j_embed[l]},
                nn={v_idx[(m, l)]: 1.0},
            )

    for g in range(G):
        row = lifted.group_rows[g]
        for m in range(M):
            nn: dict[int, float] = {int(beta_idx[g, m]): -1.0}
            rhs = -1.0
            for l in range(L):
                if row[l] > 0:
                    nn[v_idx[(m, l)]] = -float(row[l])
                    rhs += float(row[l]) * log_theta
            prob.add_row("<=", rhs, nn=nn)

    prob.layout = _Layout(
        users=M,
        bs_count=L,
        beta_idx=beta_idx,
        v_idx=v_idx,
        sinr_rows=sinr_rows,
        power_rows=power_rows,
        n_nn=n_beta + len(active),
    )
    return prob


# ---------------------------------------------------------------------------
# Outer-approximation loop
# ---------------------------------------------------------------------------

def _coverage_requirement(lifted: LiftedScenario, traces: np.ndarray) -> np.ndarray:
    """True smoothed requirement 1 - sum_l delta_{g,l} log(t_{m,l} + theta), per (G, M)."""
    logs = np.log(np.maximum(traces, 0.0) + lifted.theta)  # (M, L)
    return 1.0 - lifted.group_rows @ logs.T  # (G, M)


def smoothed_objective(lifted: LiftedScenario, w_matrices: list[np.ndarray]) -> float:
    """Smoothed-model objective of given covariance blocks (beta at its implied value)."""
    traces = np.array(
        [block_traces(w, lifted.bs_count, lifted.antennas_per_bs) for w in w_matrices]
    )
    req = _coverage_requirement(lifted, traces)  # (G, M)
    beta = np.maximum(req, 0.0)
    lam = lifted.weight_lambda
    cov_term = float((lifted.group_weight[:, None] * beta * lifted.rates[None, :]).sum())
    power = sum(float(np.real(np.trace(w))) for w in w_matrices)
    return lam * cov_term + (1.0 - lam) * power


def mm_optimize(
    lifted: LiftedScenario,
    solver_settings: SolverSettings | None = None,
    mm_settings: MmSettings | None = None,
) -> RelaxedSolution:
    """Solve the smoothed relaxation by tightening tangent cuts to convergence.

    Each round solves the current linear SDP, evaluates the true log
    constraints at the incumbent traces, and adds tangents where they are
    violated.  Terminates once the worst violation is within tolerance and
    the objective has stabilized, or when the round budget runs out.
    """
    ss = solver_settings or SolverSettings()
    ms = mm_settings or MmSettings()
    M, L = lifted.users, lifted.bs_count
    pool = CutPool.initial(M, L, lifted.p_max_w) if lifted.active_pairs else CutPool()

    best: RelaxedSolution | None = None
    prev_obj: float | None = None
    history: list[float] = []

    for round_idx in range(1, ms.max_cut_rounds + 1):
        prob = assemble_linearized_sdp(lifted, pool)
        sol = solve(prob, ss)
        if sol.status == SolveStatus.INFEASIBLE:
            return RelaxedSolution(
                status=MmStatus.INFEASIBLE,
                w_matrices=[],
                beta=np.zeros((lifted.files, M)),
                objective=math.inf,
                cut_count=pool.total(),
                rounds=round_idx,
                max_violation=math.inf,
                solver_status=sol.status,
                solver_residuals=sol.residuals,
                block_trace=np.zeros((M, L)),
                pool=pool,
                objective_history=history,
            )

        layout: _Layout = prob.layout
        w_list = [extract_hermitian(x) for x in sol.x_psd]
        traces = np.array(
            [block_traces(w, L, lifted.antennas_per_bs) for w in w_list]
        )
        beta_g = sol.x_nn[layout.beta_idx]  # (G, M)
        req = _coverage_requirement(lifted, traces)
        violation = float(np.max(req - beta_g)) if beta_g.size else 0.0
        history.append(sol.objective)

        current = RelaxedSolution(
            status=MmStatus.NOT_CONVERGED,
            w_matrices=w_list,
            beta=beta_g[lifted.group_of_file, :],
            objective=sol.objective,
            cut_count=pool.total(),
            rounds=round_idx,
            max_violation=violation,
            solver_status=sol.status,
            solver_residuals=sol.residuals,
            block_trace=traces,
            pool=pool,
            objective_history=list(history),
        )
        best = current
        if sol.status != SolveStatus.OPTIMAL:
            return current  # solver stalled: report the best effort, not converged

        obj_change = 0.0 if prev_obj is None else abs(sol.objective - prev_obj) / (1.0 + abs(sol.objective))
        if violation <= ms.violation_tol and (prev_obj is None or obj_change <= ms.objective_rel_tol):
            current.status = MmStatus.OPTIMAL
            return current
        prev_obj = sol.objective

        added = 0
        if violation > ms.cut_tol:
            viol_users = np.unique(np.nonzero((req - beta_g) > ms.cut_tol)[1])
            for m in viol_users.tolist():
                for l in range(L):
                    if (m, l) in pool.points:
                        if pool.add(m, l, max(0.0, float(traces[m, l]))):
                            added += 1
        if added == 0:
            # No new tangent can tighten further; accept the incumbent if the
            # violation is only marginally above tolerance.
            current.status = (
                MmStatus.OPTIMAL if violation <= ms.violation_tol else MmStatus.NOT_CONVERGED
            )
            return current

    return best  # round budget exhausted: NOT_CONVERGED with the last iterate
