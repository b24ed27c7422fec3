"""Small dense conic solver: linear objective over PSD blocks and a nonnegative orthant.

Primal-dual path following with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step.  Inequality rows are canonicalized to equalities
with nonnegative slacks, so internally the solver always sees

    min <c, x>  s.t.  A x = b,  x in S+^{n_1} x ... x S+^{n_k} x R+^p.

Problems are tiny (blocks of a few tens, hundreds of rows), so all linear
algebra is dense; the Newton system is solved through the m x m Schur
complement with a static diagonal regularization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.linalg as sla


class ConicFormatError(ValueError):
    """Structurally inconsistent problem data."""


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-8
    max_iterations: int = 100
    regularization: float = 1e-12
    step_fraction: float = 0.99
    infeasibility_tol: float = 1e-7
    record_history: bool = False

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


# ---------------------------------------------------------------------------
# Problem container
# ---------------------------------------------------------------------------

_SENSES = ("=", "<=", ">=")


@dataclass
class _Row:
    sense: str
    rhs: float
    psd: dict[int, np.ndarray]
    nn: dict[int, float]


class ConicProblem:
    """Builder for the standard-form problem.

    Variables are an ordered list of symmetric PSD blocks plus a vector of
    nonnegative scalars.  Row coefficients pair each block with a symmetric
    matrix B (contributing tr(B X)) and each scalar with a weight.
    """

    def __init__(self, psd_dims: list[int] | tuple[int, ...], nonneg: int):
        psd_dims = tuple(int(d) for d in psd_dims)
        if any(d < 1 for d in psd_dims):
            raise ConicFormatError("PSD block dimensions must be >= 1")
        if nonneg < 0:
            raise ConicFormatError("nonneg count must be >= 0")
        if len(psd_dims) == 0 and nonneg == 0:
            raise ConicFormatError("problem has no variables")
        self.psd_dims = psd_dims
        self.nonneg = int(nonneg)
        self.c_psd = [np.zeros((d, d)) for d in psd_dims]
        self.c_nn = np.zeros(self.nonneg)
        self.rows: list[_Row] = []

    # -- construction -------------------------------------------------------

    def _check_block_matrix(self, blk: int, mat: np.ndarray) -> np.ndarray:
        if not 0 <= blk < len(self.psd_dims):
            raise ConicFormatError(f"block index {blk} out of range")
        m = np.asarray(mat, dtype=float)
        d = self.psd_dims[blk]
        if m.shape != (d, d):
            raise ConicFormatError(f"block {blk} expects {d}x{d} coefficients, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConicFormatError("coefficients must be finite")
        return 0.5 * (m + m.T)

    def set_objective(self, psd: dict[int, np.ndarray] | None = None, nn: dict[int, float] | None = None):
        for blk, mat in (psd or {}).items():
            self.c_psd[blk] = self._check_block_matrix(blk, mat)
        for idx, val in (nn or {}).items():
            if not 0 <= idx < self.nonneg:
                raise ConicFormatError(f"nonneg index {idx} out of range")
            self.c_nn[idx] = float(val)

    def add_row(
        self,
        sense: str,
        rhs: float,
        psd: dict[int, np.ndarray] | None = None,
        nn: dict[int, float] | None = None,
    ) -> int:
        if sense not in _SENSES:
            raise ConicFormatError(f"unknown sense {sense!r}")
        rhs = float(rhs)
        if not np.isfinite(rhs):
            raise ConicFormatError("rhs must be finite")
        psd_entries = {int(b): self._check_block_matrix(int(b), m) for b, m in (psd or {}).items()}
        nn_entries = {}
        for idx, val in (nn or {}).items():
            if not 0 <= idx < self.nonneg:
                raise ConicFormatError(f"nonneg index {idx} out of range")
            if not np.isfinite(val):
                raise ConicFormatError("coefficients must be finite")
            nn_entries[int(idx)] = float(val)
        if not psd_entries and not nn_entries:
            raise ConicFormatError("row has no coefficients")
        self.rows.append(_Row(sense=sense, rhs=rhs, psd=psd_entries, nn=nn_entries))
        return len(self.rows) - 1

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def objective_value(self, x_psd: list[np.ndarray], x_nn: np.ndarray) -> float:
        val = sum(float(np.tensordot(c, x, 2)) for c, x in zip(self.c_psd, x_psd))
        if self.nonneg:
            val += float(self.c_nn @ x_nn)
        return val

    # -- serialization --------------------------------------------------------

    @staticmethod
    def _mat_triplets(blk: int, mat: np.ndarray) -> list[list]:
        out = []
        d = mat.shape[0]
        for i in range(d):
            for j in range(i, d):
                if mat[i, j] != 0.0:
                    out.append([blk, i, j, float(mat[i, j])])
        return out

    def to_dict(self) -> dict:
        obj_psd = []
        for blk, mat in enumerate(self.c_psd):
            obj_psd.extend(self._mat_triplets(blk, mat))
        rows = []
        for r in self.rows:
            trip = []
            for blk, mat in sorted(r.psd.items()):
                trip.extend(self._mat_triplets(blk, mat))
            rows.append(
                {
                    "sense": r.sense,
                    "rhs": r.rhs,
                    "psd": trip,
                    "nn": [[i, v] for i, v in sorted(r.nn.items())],
                }
            )
        return {
            "format": "cachebeam-conic-v1",
            "description": "min <c,x> over PSD blocks + nonneg orthant; psd triplets are [block,row,col,value] upper-triangle entries of symmetric coefficient matrices contributing tr(B X)",
            "psd_dims": list(self.psd_dims),
            "nonneg": self.nonneg,
            "objective": {"psd": obj_psd, "nn": [[i, float(v)] for i, v in enumerate(self.c_nn) if v != 0.0]},
            "rows": rows,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ConicProblem":
        if doc.get("format") != "cachebeam-conic-v1":
            raise ConicFormatError("not a conic problem document")
        prob = cls(doc["psd_dims"], doc["nonneg"])

        def blocks_from_triplets(trips):
            mats: dict[int, np.ndarray] = {}
            for blk, i, j, v in trips:
                blk, i, j = int(blk), int(i), int(j)
                if blk not in mats:
                    mats[blk] = np.zeros((prob.psd_dims[blk], prob.psd_dims[blk]))
                mats[blk][i, j] = v
                mats[blk][j, i] = v
            return mats

        prob.set_objective(
            psd=blocks_from_triplets(doc["objective"]["psd"]),
            nn={int(i): float(v) for i, v in doc["objective"]["nn"]},
        )
        for r in doc["rows"]:
            prob.add_row(
                r["sense"],
                r["rhs"],
                psd=blocks_from_triplets(r["psd"]),
                nn={int(i): float(v) for i, v in r["nn"]},
            )
        return prob

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path: str | Path) -> "ConicProblem":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Solution container
# ---------------------------------------------------------------------------

@dataclass
class ConicSolution:
    status: SolveStatus
    x_psd: list[np.ndarray]
    x_nn: np.ndarray
    slack: np.ndarray  # one value per inequality row, in row order
    y: np.ndarray  # dual per original row (>= rows have y >= 0, <= rows y <= 0)
    s_psd: list[np.ndarray]
    s_nn: np.ndarray
    s_slack: np.ndarray
    objective: float
    residuals: tuple[float, float, float]  # (primal, dual, gap), scaled
    iterations: int
    history: list[dict] | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "residuals": {
                "primal": self.residuals[0],
                "dual": self.residuals[1],
                "gap": self.residuals[2],
            },
            "iterations": self.iterations,
            "x_psd": [m.tolist() for m in self.x_psd],
            "x_nn": self.x_nn.tolist(),
            "slack": self.slack.tolist(),
            "y": self.y.tolist(),
        }


# ---------------------------------------------------------------------------
# Canonical equality form
# ---------------------------------------------------------------------------

class _Canonical:
    """Equality-standard-form view with slacks appended to the orthant.

    Rows are sign-flipped so every inequality reads <=, then each gets a
    slack column.  Row coefficients are equilibrated to unit infinity norm;
    ``row_scale`` maps duals back to the user's data.
    """

    def __init__(self, prob: ConicProblem):
        self.prob = prob
        self.dims = prob.psd_dims
        self.nb = len(self.dims)
        m = prob.num_rows
        if m == 0:
            raise ConicFormatError("problem has no constraint rows")

        self.flip = np.ones(m)
        ineq_rows = [i for i, r in enumerate(prob.rows) if r.sense != "="]
        self.ineq_rows = np.array(ineq_rows, dtype=int)
        self.n_slack = len(ineq_rows)
        self.n_nn = prob.nonneg + self.n_slack
        slack_col = {row: prob.nonneg + k for k, row in enumerate(ineq_rows)}

        # Row equilibration by largest coefficient magnitude.
        scale = np.ones(m)
        for i, r in enumerate(prob.rows):
            mx = 0.0
            for mat in r.psd.values():
                mx = max(mx, float(np.max(np.abs(mat))) if mat.size else 0.0)
            for v in r.nn.values():
                mx = max(mx, abs(v))
            scale[i] = 1.0 / mx if mx > 0 else 1.0
        self.row_scale = scale

        b = np.zeros(m)
        # Per-block row data: indices of touching rows and stacked coefficient matrices.
        self.blk_rows: list[np.ndarray] = []
        self.blk_mats: list[np.ndarray] = []
        touch: list[list[int]] = [[] for _ in range(self.nb)]
        mats: list[list[np.ndarray]] = [[] for _ in range(self.nb)]
        A_nn = np.zeros((m, self.n_nn))
        for i, r in enumerate(prob.rows):
            f = -1.0 if r.sense == ">=" else 1.0
            self.flip[i] = f
            coef = f * scale[i]
            b[i] = coef * r.rhs
            for blk, mat in r.psd.items():
                touch[blk].append(i)
                mats[blk].append(coef * mat)
            for idx, v in r.nn.items():
                A_nn[i, idx] = coef * v
            if r.sense != "=":
                A_nn[i, slack_col[i]] = 1.0
        for blk in range(self.nb):
            d = self.dims[blk]
            self.blk_rows.append(np.array(touch[blk], dtype=int))
            self.blk_mats.append(
                np.array(mats[blk]) if mats[blk] else np.zeros((0, d, d))
            )
        self.A_nn = A_nn
        self.b = b
        self.c_psd = [c.copy() for c in prob.c_psd]
        self.c_nn = np.concatenate([prob.c_nn, np.zeros(self.n_slack)])
        self.m = m
        self.cone_order = sum(self.dims) + self.n_nn
        self.b_norm = float(np.linalg.norm(b))
        self.c_norm = float(
            np.sqrt(sum(np.sum(c * c) for c in self.c_psd) + np.sum(self.c_nn**2))
        )

    # A x for x = (X blocks, nn vector)
    def apply(self, X: list[np.ndarray], x_nn: np.ndarray) -> np.ndarray:
        out = self.A_nn @ x_nn
        for blk in range(self.nb):
            if self.blk_rows[blk].size:
                out[self.blk_rows[blk]] += np.tensordot(self.blk_mats[blk], X[blk], 2)
        return out

    # A^T y, returned as (matrices per block, nn vector)
    def apply_t(self, y: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        mats = []
        for blk in range(self.nb):
            if self.blk_rows[blk].size:
                mats.append(np.tensordot(y[self.blk_rows[blk]], self.blk_mats[blk], axes=(0, 0)))
            else:
                mats.append(np.zeros((self.dims[blk], self.dims[blk])))
        return mats, self.A_nn.T @ y


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _chol(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky with a jitter retry; raises LinAlgError if hopeless."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        d = M.shape[0]
        jitter = 1e-14 * max(1.0, float(np.trace(M))) / d
        for _ in range(3):
            try:
                return np.linalg.cholesky(M + jitter * np.eye(d))
            except np.linalg.LinAlgError:
                jitter *= 100
        raise


def _step_to_boundary_psd(L: np.ndarray, dX: np.ndarray) -> float:
    """Largest alpha with X + alpha dX psd, X = L L^T."""
    Y = sla.solve_triangular(L, dX, lower=True)
    Y = sla.solve_triangular(L, Y.T, lower=True)
    lam_min = float(np.linalg.eigvalsh(_sym(Y)).min())
    if lam_min >= 0:
        return np.inf
    return 1.0 / (-lam_min)


def _step_to_boundary_nn(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


# ---------------------------------------------------------------------------
# Interior-point solve
# ---------------------------------------------------------------------------

def solve(problem: ConicProblem, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve the conic program; see module docstring for the method."""
    st = settings or SolverSettings()
    canon = _Canonical(problem)
    nb, dims, m = canon.nb, canon.dims, canon.m

    data_scale = max(
        1.0,
        canon.b_norm,
        canon.c_norm,
        max((float(np.max(np.abs(M))) if M.size else 0.0) for M in canon.blk_mats + [canon.A_nn]),
    )

    # Cold start at a scaled analytic-center-like point.
    tau_p = max(1.0, canon.b_norm / max(1.0, np.sqrt(canon.m)))
    tau_d = max(1.0, canon.c_norm / max(1.0, np.sqrt(canon.cone_order)))
    X = [tau_p * np.eye(d) for d in dims]
    S = [tau_d * np.eye(d) for d in dims]
    x_nn = np.full(canon.n_nn, tau_p)
    s_nn = np.full(canon.n_nn, tau_d)
    y = np.zeros(m)

    nu = canon.cone_order
    history: list[dict] | None = [] if st.record_history else None
    status = SolveStatus.MAX_ITER
    it = 0

    for it in range(1, st.max_iterations + 1):
        # Residuals.
        rp = canon.b - canon.apply(X, x_nn)
        At_y, At_y_nn = canon.apply_t(y)
        Rd = [canon.c_psd[b] - At_y[b] - S[b] for b in range(nb)]
        rd_nn = canon.c_nn - At_y_nn - s_nn

        gap = sum(float(np.tensordot(X[b], S[b], 2)) for b in range(nb)) + float(x_nn @ s_nn)
        mu = gap / nu
        pobj = _pobj(canon, X, x_nn)
        dobj = float(canon.b @ y)

        pinf = float(np.linalg.norm(rp)) / (1.0 + canon.b_norm)
        dinf = float(
            np.sqrt(sum(np.sum(R * R) for R in Rd) + np.sum(rd_nn**2))
        ) / (1.0 + canon.c_norm)
        rel_gap = gap / (1.0 + abs(pobj) + abs(dobj))

        if history is not None:
            history.append(
                {
                    "iter": it,
                    "pobj": pobj,
                    "dobj": dobj,
                    "gap": gap,
                    "mu": mu,
                    "pinf": pinf,
                    "dinf": dinf,
                    "min_eig_x": min(
                        (float(np.linalg.eigvalsh(X[b]).min()) for b in range(nb)),
                        default=np.inf,
                    ),
                    "min_eig_s": min(
                        (float(np.linalg.eigvalsh(S[b]).min()) for b in range(nb)),
                        default=np.inf,
                    ),
                    "min_x_nn": float(x_nn.min()) if x_nn.size else np.inf,
                    "rp_dot_y": float(rp @ y),
                    "rd_dot_x": _rd_dot_x(Rd, rd_nn, X, x_nn),
                }
            )

        if pinf <= st.tolerance and dinf <= st.tolerance and rel_gap <= st.tolerance:
            status = SolveStatus.OPTIMAL
            break

        # Infeasibility certificates (Farkas rays emerge as ||y|| or ||x|| blow up).
        by = float(canon.b @ y)
        if by > 0:
            cert = np.sqrt(sum(np.sum((At_y[b] + S[b]) ** 2) for b in range(nb)) + np.sum((At_y_nn + s_nn) ** 2))
            if cert / by <= st.infeasibility_tol * data_scale:
                status = SolveStatus.INFEASIBLE
                break
        cx = _pobj(canon, X, x_nn)
        if cx < 0:
            ax = float(np.linalg.norm(canon.apply(X, x_nn)))
            if ax / (-cx) <= st.infeasibility_tol * data_scale:
                status = SolveStatus.UNBOUNDED
                break

        # Nesterov-Todd scalings.
        G, Ginv, dnt = [], [], []
        ok = True
        for b in range(nb):
            try:
                Lx = _chol(X[b])
                Ls = _chol(S[b])
            except np.linalg.LinAlgError:
                ok = False
                break
            U, sv, Vt = np.linalg.svd(Ls.T @ Lx)
            sv = np.maximum(sv, 1e-150)
            G.append(Lx @ Vt.T @ np.diag(sv**-0.5))
            Ginv.append(np.diag(sv**-0.5) @ U.T @ Ls.T)
            dnt.append(sv)
        if not ok:
            break
        w_nn = np.sqrt(x_nn / s_nn) if canon.n_nn else np.zeros(0)
        d_nn = np.sqrt(x_nn * s_nn) if canon.n_nn else np.zeros(0)

        # Schur complement M = A W A^T over the scaled cones.
        M_schur = (canon.A_nn * (w_nn**2)) @ canon.A_nn.T if canon.n_nn else np.zeros((m, m))
        scaled_rows = []
        for b in range(nb):
            if canon.blk_rows[b].size == 0:
                scaled_rows.append(None)
                continue
            T = np.einsum("ji,kjl,lm->kim", G[b], canon.blk_mats[b], G[b], optimize=True)
            scaled_rows.append(T)
            contrib = np.tensordot(T, T, axes=([1, 2], [1, 2]))
            idx = canon.blk_rows[b]
            M_schur[np.ix_(idx, idx)] += contrib
        reg = st.regularization * max(1.0, float(np.max(np.diag(M_schur))))
        factor = None
        for _ in range(6):
            try:
                factor = sla.cho_factor(M_schur + reg * np.eye(m), lower=True)
                break
            except np.linalg.LinAlgError:
                reg *= 100
        if factor is None:
            break

        def newton(V: list[np.ndarray], v_nn: np.ndarray):
            """Solve for (dX, dy, dS) given the scaled complementarity target."""
            rhs = rp.copy()
            WRdW = []
            for b in range(nb):
                WRdW_b = G[b] @ _sym(G[b].T @ Rd[b] @ G[b]) @ G[b].T
                WRdW.append(WRdW_b)
                if canon.blk_rows[b].size:
                    GVGt = G[b] @ V[b] @ G[b].T
                    rhs[canon.blk_rows[b]] += np.tensordot(
                        canon.blk_mats[b], WRdW_b - GVGt, 2
                    )
            if canon.n_nn:
                rhs += canon.A_nn @ (w_nn**2 * rd_nn - w_nn * v_nn)
            dy = sla.cho_solve(factor, rhs)
            # One step of iterative refinement against the unregularized system.
            resid = rhs - M_schur @ dy
            dy += sla.cho_solve(factor, resid)
            At_dy, At_dy_nn = canon.apply_t(dy)
            dS, dX = [], []
            for b in range(nb):
                dS_b = Rd[b] - At_dy[b]
                dS.append(dS_b)
                GVGt = G[b] @ V[b] @ G[b].T
                WdSW = G[b] @ _sym(G[b].T @ dS_b @ G[b]) @ G[b].T
                dX.append(_sym(GVGt - WdSW))
            ds_nn = rd_nn - At_dy_nn
            dx_nn = w_nn * v_nn - w_nn**2 * ds_nn
            return dX, dx_nn, dy, dS, ds_nn

        # Predictor (affine scaling) direction.
        V_aff = [-np.diag(dnt[b]) for b in range(nb)]
        v_aff = -d_nn
        dX_a, dx_a, dy_a, dS_a, ds_a = newton(V_aff, v_aff)

        Lx_c = [_chol(X[b]) for b in range(nb)]
        Ls_c = [_chol(S[b]) for b in range(nb)]
        ap = min(
            [1.0]
            + [_step_to_boundary_psd(Lx_c[b], dX_a[b]) for b in range(nb)]
            + [_step_to_boundary_nn(x_nn, dx_a)]
        )
        ad = min(
            [1.0]
            + [_step_to_boundary_psd(Ls_c[b], dS_a[b]) for b in range(nb)]
            + [_step_to_boundary_nn(s_nn, ds_a)]
        )
        gap_aff = sum(
            float(np.tensordot(X[b] + ap * dX_a[b], S[b] + ad * dS_a[b], 2)) for b in range(nb)
        ) + float((x_nn + ap * dx_a) @ (s_nn + ad * ds_a))
        sigma = min(1.0, max(1e-8, (max(gap_aff, 0.0) / gap) ** 3))

        # Corrector: recenter to sigma*mu and subtract the second-order term.
        V_cor, v_cor = [], None
        for b in range(nb):
            dxh = Ginv[b] @ dX_a[b] @ Ginv[b].T
            dsh = G[b].T @ dS_a[b] @ G[b]
            so = _sym(dxh @ dsh)
            target = sigma * mu * np.eye(dims[b]) - np.diag(dnt[b] ** 2) - so
            denom = dnt[b][:, None] + dnt[b][None, :]
            V_cor.append(2.0 * target / denom)
        v_cor = (sigma * mu - d_nn**2 - dx_a * ds_a) / np.maximum(d_nn, 1e-150)

        dX, dx, dy, dS, ds = newton(V_cor, v_cor)

        eta = st.step_fraction if mu > 1e-6 else min(0.999, st.step_fraction + 0.009)
        ap = eta * min(
            [1.0 / eta]
            + [_step_to_boundary_psd(Lx_c[b], dX[b]) for b in range(nb)]
            + [_step_to_boundary_nn(x_nn, dx)]
        )
        ad = eta * min(
            [1.0 / eta]
            + [_step_to_boundary_psd(Ls_c[b], dS[b]) for b in range(nb)]
            + [_step_to_boundary_nn(s_nn, ds)]
        )
        ap, ad = min(ap, 1.0), min(ad, 1.0)
        if min(ap, ad) < 1e-10:
            break

        for b in range(nb):
            X[b] = _sym(X[b] + ap * dX[b])
            S[b] = _sym(S[b] + ad * dS[b])
        x_nn = x_nn + ap * dx
        s_nn = s_nn + ad * ds
        y = y + ad * dy

    # Final residuals for the report.
    rp = canon.b - canon.apply(X, x_nn)
    At_y, At_y_nn = canon.apply_t(y)
    Rd = [canon.c_psd[b] - At_y[b] - S[b] for b in range(nb)]
    rd_nn = canon.c_nn - At_y_nn - s_nn
    gap = sum(float(np.tensordot(X[b], S[b], 2)) for b in range(nb)) + float(x_nn @ s_nn)
    pobj = _pobj(canon, X, x_nn)
    dobj = float(canon.b @ y)
    residuals = (
        float(np.linalg.norm(rp)) / (1.0 + canon.b_norm),
        float(np.sqrt(sum(np.sum(R * R) for R in Rd) + np.sum(rd_nn**2))) / (1.0 + canon.c_norm),
        gap / (1.0 + abs(pobj) + abs(dobj)),
    )

    # Map back to the user's row scaling and split off the slacks.
    y_user = canon.flip * canon.row_scale * y
    n0 = problem.nonneg
    slack = x_nn[n0:].copy()
    s_slack = s_nn[n0:].copy()
    return ConicSolution(
        status=status,
        x_psd=[x.copy() for x in X],
        x_nn=x_nn[:n0].copy(),
        slack=slack,
        y=y_user,
        s_psd=[s.copy() for s in S],
        s_nn=s_nn[:n0].copy(),
        s_slack=s_slack,
        objective=pobj,
        residuals=residuals,
        iterations=it,
        history=history,
    )


def _pobj(canon: _Canonical, X: list[np.ndarray], x_nn: np.ndarray) -> float:
    val = sum(float(np.tensordot(canon.c_psd[b], X[b], 2)) for b in range(canon.nb))
    if canon.n_nn:
        val += float(canon.c_nn @ x_nn)
    return val


def _rd_dot_x(Rd, rd_nn, X, x_nn) -> float:
    v = sum(float(np.tensordot(Rd[b], X[b], 2)) for b in range(len(Rd)))
    return v + float(rd_nn @ x_nn)


# ---------------------------------------------------------------------------
# Residual audit
# ---------------------------------------------------------------------------

def kkt_residuals(problem: ConicProblem, solution: ConicSolution) -> tuple[float, float, float]:
    """Scaled (primal, dual, gap) residuals of a solution, recomputed from scratch.

    Uses the same equality-form canonicalization as the solver, so external
    audits of dumped problems reproduce the solver's own numbers.
    """
    canon = _Canonical(problem)
    # Reassemble the extended nonnegative vector (user vars + slacks), undoing
    # the row scaling on the dual.
    x_nn = np.concatenate([solution.x_nn, solution.slack])
    s_nn = np.concatenate([solution.s_nn, solution.s_slack])
    y = solution.y / canon.row_scale * canon.flip

    rp = canon.b - canon.apply(solution.x_psd, x_nn)
    At_y, At_y_nn = canon.apply_t(y)
    Rd = [canon.c_psd[b] - At_y[b] - solution.s_psd[b] for b in range(canon.nb)]
    rd_nn = canon.c_nn - At_y_nn - s_nn
    gap = sum(float(np.tensordot(solution.x_psd[b], solution.s_psd[b], 2)) for b in range(canon.nb))
    gap += float(x_nn @ s_nn)
    pobj = _pobj(canon, solution.x_psd, x_nn)
    dobj = float(canon.b @ y)
    return (
        float(np.linalg.norm(rp)) / (1.0 + canon.b_norm),
        float(np.sqrt(sum(np.sum(R * R) for R in Rd) + np.sum(rd_nn**2))) / (1.0 + canon.c_norm),
        abs(gap) / (1.0 + abs(pobj) + abs(dobj)),
    )
