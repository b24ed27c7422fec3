"""Independent validators: closed forms, certified random SDPs, grid checks.

Deliberately slow and simple; shares no numerics with the solver it audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from cachebeam.conic import ConicProblem, SolveStatus, SolverSettings, kkt_residuals, solve


class OracleError(ValueError):
    pass


@dataclass
class OracleReport:
    case: str
    expected: float
    observed: float
    abs_error: float
    rel_error: float
    tolerance: float
    passed: bool

    @classmethod
    def check(cls, case: str, expected: float, observed: float, tol: float, relative: bool = False):
        abs_err = abs(observed - expected)
        rel_err = abs_err / max(1e-300, abs(expected))
        passed = (rel_err <= tol) if relative else (abs_err <= tol)
        return cls(case, expected, observed, abs_err, rel_err, tol, passed)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "expected": self.expected,
            "observed": self.observed,
            "abs_error": self.abs_error,
            "rel_error": self.rel_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def single_user_power_oracle(h: np.ndarray, gamma: float, noise_power_w: float) -> tuple[float, np.ndarray]:
    """Minimal power and beamformer for one user: p* = gamma sigma^2 / ||h||^2."""
    h = np.asarray(h, dtype=complex)
    nrm2 = float(np.vdot(h, h).real)
    if nrm2 == 0:
        raise OracleError("zero channel is infeasible")
    p_star = gamma * noise_power_w / nrm2
    w_star = math.sqrt(p_star) * h / math.sqrt(nrm2)
    return p_star, w_star


def random_sdp_with_known_optimum(
    dims: tuple[tuple[int, ...], int, int], rng: np.random.Generator
) -> tuple[ConicProblem, float]:
    """Random equality-form problem built around a strictly complementary pair.

    dims = (psd block sizes, nonneg count, row count).  A primal-dual pair
    (x, y, s) with x s = 0 and x + s > 0 on every cone is drawn first, then
    b := A x and c := A^T y + s, which makes the pair optimal with value c.x.
    """
    psd_dims, nonneg, m = dims
    psd_dims = tuple(int(d) for d in psd_dims)
    if (len(psd_dims) == 0 and nonneg == 0) or m < 1:
        raise OracleError("degenerate dimensions rejected")
    if any(d < 1 for d in psd_dims) or any(d > 10 for d in psd_dims):
        raise OracleError("PSD blocks must have size 1..10")

    X, S = [], []
    for d in psd_dims:
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        r = int(rng.integers(1, d)) if d > 1 else (1 if rng.random() < 0.5 else 0)
        lam_x = np.zeros(d)
        lam_s = np.zeros(d)
        lam_x[:r] = rng.uniform(0.5, 2.0, size=r)
        lam_s[r:] = rng.uniform(0.5, 2.0, size=d - r)
        X.append((q * lam_x) @ q.T)
        S.append((q * lam_s) @ q.T)
    x_nn = np.zeros(nonneg)
    s_nn = np.zeros(nonneg)
    for i in range(nonneg):
        if rng.random() < 0.5:
            x_nn[i] = rng.uniform(0.5, 2.0)
        else:
            s_nn[i] = rng.uniform(0.5, 2.0)

    y = rng.standard_normal(m)
    rows_psd = []
    rows_nn = rng.standard_normal((m, nonneg)) if nonneg else np.zeros((m, 0))
    for _ in range(m):
        row = {}
        for blk, d in enumerate(psd_dims):
            a = rng.standard_normal((d, d))
            row[blk] = 0.5 * (a + a.T)
        rows_psd.append(row)

    b = np.zeros(m)
    for i in range(m):
        b[i] = sum(float(np.tensordot(rows_psd[i][blk], X[blk], 2)) for blk in range(len(psd_dims)))
        if nonneg:
            b[i] += float(rows_nn[i] @ x_nn)
    c_psd = []
    for blk in range(len(psd_dims)):
        c_psd.append(sum(y[i] * rows_psd[i][blk] for i in range(m)) + S[blk])
    c_nn = (rows_nn.T @ y + s_nn) if nonneg else np.zeros(0)

    prob = ConicProblem(psd_dims=psd_dims, nonneg=nonneg)
    prob.set_objective(
        psd={blk: c_psd[blk] for blk in range(len(psd_dims))},
        nn={i: float(c_nn[i]) for i in range(nonneg)},
    )
    for i in range(m):
        prob.add_row("=", float(b[i]), psd=rows_psd[i], nn={j: float(rows_nn[i, j]) for j in range(nonneg)})

    opt = sum(float(np.tensordot(c_psd[blk], X[blk], 2)) for blk in range(len(psd_dims)))
    if nonneg:
        opt += float(c_nn @ x_nn)
    return prob, opt


def grid_check_tiny_sdp(problem: ConicProblem, step: float = 1e-2, grid_range: float = 3.0) -> float | None:
    """Exhaustive-grid optimum of a single 2x2-block problem, or None if no
    grid point is feasible.

    Walks W = [[a, b], [b, c]] with a, c in [0, range], |b| <= range and
    a c >= b^2; supports at most 3 constraint rows and no scalar variables.
    """
    if problem.psd_dims != (2,) or problem.nonneg != 0:
        raise OracleError("grid check requires exactly one 2x2 block and no scalars")
    if problem.num_rows > 3:
        raise OracleError("grid check supports at most 3 rows")

    ax = np.arange(0.0, grid_range + step / 2, step)
    a_grid, c_grid = np.meshgrid(ax, ax, indexing="ij")

    def row_terms(mat):
        return mat[0, 0], 2.0 * mat[0, 1], mat[1, 1]

    obj = row_terms(problem.c_psd[0])
    rows = [(row_terms(r.psd[0]), r.sense, r.rhs) for r in problem.rows]

    best = np.inf
    for b_val in np.arange(-grid_range, grid_range + step / 2, step):
        feas = a_grid * c_grid >= b_val * b_val
        for (ka, kb, kc), sense, rhs in rows:
            lhs = ka * a_grid + kb * b_val + kc * c_grid
            if sense == "<=":
                feas &= lhs <= rhs
            elif sense == ">=":
                feas &= lhs >= rhs
            else:
                feas &= np.abs(lhs - rhs) <= step
        if np.any(feas):
            vals = obj[0] * a_grid + obj[1] * b_val + obj[2] * c_grid
            best = min(best, float(vals[feas].min()))
    return None if not np.isfinite(best) else best


# ---------------------------------------------------------------------------
# Validation suite (used by the CLI `validate` command)
# ---------------------------------------------------------------------------

def _grid_case(rng: np.random.Generator) -> ConicProblem:
    """Random well-scaled single-block problem with its optimum inside the grid box."""
    prob = ConicProblem(psd_dims=[2], nonneg=0)
    d1, d2 = rng.uniform(0.5, 1.5, size=2)
    off = rng.uniform(-0.3, 0.3)
    prob.set_objective(psd={0: np.array([[d1, off], [off, d2]])})
    g1, g2 = rng.uniform(0.4, 1.2, size=2)
    prob.add_row(">=", 1.0, psd={0: np.array([[g1, 0.0], [0.0, g2]])})
    prob.add_row("<=", 2.5, psd={0: np.eye(2)})
    return prob


def run_validation_suite(
    rng: np.random.Generator,
    n_random_sdp: int = 50,
    n_grid: int = 20,
    n_single_user: int = 20,
    settings: SolverSettings | None = None,
) -> list[OracleReport]:
    """Cross-check the solver against every oracle; one report per case."""
    st = settings or SolverSettings()
    reports: list[OracleReport] = []

    for k in range(n_single_user):
        n = int(rng.integers(2, 8))
        h = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2.0)
        gamma = float(rng.uniform(1.0, 15.0))
        p_star, _ = single_user_power_oracle(h, gamma, 1.0)
        prob = ConicProblem(psd_dims=[2 * n], nonneg=0)
        from cachebeam.relaxation import embed_hermitian, lift_channel  # local to avoid cycle

        prob.set_objective(psd={0: 0.5 * np.eye(2 * n)})
        prob.add_row(">=", gamma, psd={0: 0.5 * embed_hermitian(lift_channel(h))})
        sol = solve(prob, st)
        reports.append(OracleReport.check(f"single-user-{k}", p_star, sol.objective, 1e-5, relative=True))

    for k in range(n_random_sdp):
        nb = int(rng.integers(1, 3))
        blocks = tuple(int(rng.integers(2, 6)) for _ in range(nb))
        nonneg = int(rng.integers(0, 4))
        m = int(rng.integers(2, 6))
        prob, opt = random_sdp_with_known_optimum((blocks, nonneg, m), rng)
        sol = solve(prob, st)
        reports.append(OracleReport.check(f"random-sdp-{k}", opt, sol.objective, 1e-7, relative=True))
        res = kkt_residuals(prob, sol)
        reports.append(OracleReport.check(f"random-sdp-{k}-kkt", 0.0, max(res), 1e-7))

    for k in range(n_grid):
        prob = _grid_case(rng)
        grid_best = grid_check_tiny_sdp(prob)
        sol = solve(prob, st)
        ok = sol.status == SolveStatus.OPTIMAL and grid_best is not None
        # Grid points are exactly feasible, so grid_best >= optimum; it may
        # exceed it by at most the objective variation over one grid cell.
        reports.append(
            OracleReport.check(f"grid-sdp-{k}", grid_best if ok else math.nan, sol.objective if ok else math.inf, 0.05)
        )

    return reports


def render_report_table(reports: list[OracleReport]) -> str:
    lines = [f"{'case':<22} {'expected':>14} {'observed':>14} {'abs err':>10} {'rel err':>10}  status"]
    for r in reports:
        lines.append(
            f"{r.case:<22} {r.expected:>14.6g} {r.observed:>14.6g} {r.abs_error:>10.2e} {r.rel_error:>10.2e}  "
            + ("pass" if r.passed else "FAIL")
        )
    n_fail = sum(not r.passed for r in reports)
    lines.append(f"{len(reports)} cases, {n_fail} failures")
    return "\n".join(lines)
