"""Experiment driver: trade-off sweeps over cache modes, sizes, and weights.

Slot channels depend only on (seed, slot index), so every (mode, size,
weight) cell sees identical slots and the resulting curves are paired.
Cell results are keyed by their parameters, never by execution order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from cachebeam.conic import SolverSettings
from cachebeam.costmodel import QosConfig
from cachebeam.relaxation import LiftedScenario, MmSettings, MmStatus, mm_optimize
from cachebeam.rounding import RoundingReport, RoundingSettings, gaussian_randomize
from cachebeam.scenario import (
    CachePlacement,
    ChannelParams,
    GeometryConfig,
    Scenario,
    place_caches,
    stream_rng,
    zipf_popularity,
)
from cachebeam.units import db_to_lin

CSV_COLUMNS = ("mode", "S", "lambda", "power_cost", "backhaul_cost", "infeasible", "slots")


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    channel: ChannelParams = field(default_factory=ChannelParams)
    file_count: int = 20
    zipf_alpha: float = 1.2
    cache_sizes: tuple[int, ...] = (3, 6, 9)
    modes: tuple[str, ...] = ("none", "uncoded", "coded")
    coded_fraction: float = 0.5
    lambda_grid: tuple[float, ...] = (0.01, 0.2, 0.4, 0.6, 0.8, 0.999)
    slots: int = 100
    seed: int = 1
    sinr_target_db: float = 10.0
    p_max_w: float = 1.0
    theta: float = 0.01
    solver: SolverSettings = field(default_factory=SolverSettings)
    mm: MmSettings = field(default_factory=MmSettings)
    rounding: RoundingSettings = field(default_factory=RoundingSettings)

    def __post_init__(self):
        if self.slots < 1:
            raise HarnessError("slots must be >= 1")
        if any(not 0.0 <= lam <= 0.999 for lam in self.lambda_grid):
            raise HarnessError("lambda grid values must lie in [0, 0.999]")
        for mode in self.modes:
            if mode not in ("none", "uncoded", "coded"):
                raise HarnessError(f"unknown mode {mode!r}")

    @classmethod
    def desk(cls, **overrides) -> "ExperimentConfig":
        """CI-scale preset: fewer slots and a smaller user pool."""
        base = dict(
            geometry=GeometryConfig(user_pool_size=60),
            slots=20,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def paper(cls, **overrides) -> "ExperimentConfig":
        """Reference-scale preset: 200-user pool, 100 slots."""
        return cls(**overrides)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "cachebeam-experiment-v1",
            "geometry": vars(self.geometry).copy(),
            "channel": vars(self.channel).copy(),
            "file_count": self.file_count,
            "zipf_alpha": self.zipf_alpha,
            "cache_sizes": list(self.cache_sizes),
            "modes": list(self.modes),
            "coded_fraction": self.coded_fraction,
            "lambda_grid": list(self.lambda_grid),
            "slots": self.slots,
            "seed": self.seed,
            "sinr_target_db": self.sinr_target_db,
            "p_max_w": self.p_max_w,
            "theta": self.theta,
            "solver": vars(self.solver).copy(),
            "mm": vars(self.mm).copy(),
            "rounding": vars(self.rounding).copy(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if doc.get("format") != "cachebeam-experiment-v1":
            raise HarnessError("not an experiment config document")
        return cls(
            geometry=GeometryConfig(**doc["geometry"]),
            channel=ChannelParams(**doc["channel"]),
            file_count=doc["file_count"],
            zipf_alpha=doc["zipf_alpha"],
            cache_sizes=tuple(doc["cache_sizes"]),
            modes=tuple(doc["modes"]),
            coded_fraction=doc["coded_fraction"],
            lambda_grid=tuple(doc["lambda_grid"]),
            slots=doc["slots"],
            seed=doc["seed"],
            sinr_target_db=doc["sinr_target_db"],
            p_max_w=doc["p_max_w"],
            theta=doc["theta"],
            solver=SolverSettings(**doc["solver"]),
            mm=MmSettings(**doc["mm"]),
            rounding=RoundingSettings(**doc["rounding"]),
        )

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    # -- derived pieces -----------------------------------------------------

    def popularity(self):
        return zipf_popularity(self.file_count, self.zipf_alpha)

    def placement(self, mode: str, cache_size: int) -> CachePlacement:
        if mode == "none":
            return place_caches(self.popularity(), self.geometry.bs_count, 0, "uncoded")
        return place_caches(
            self.popularity(), self.geometry.bs_count, cache_size, mode, self.coded_fraction
        )

    def qos(self, lam: float) -> QosConfig:
        gamma = float(db_to_lin(self.sinr_target_db))
        return QosConfig(
            sinr_targets=np.full(self.geometry.users_per_slot, gamma),
            p_max_w=self.p_max_w,
            weight_lambda=lam,
        )

    def scenario(self, mode: str = "none", cache_size: int = 0) -> Scenario:
        return Scenario.build(
            geometry=self.geometry,
            channel=self.channel,
            popularity=self.popularity(),
            placement=self.placement(mode, cache_size),
            master_seed=self.seed,
        )


@dataclass(frozen=True)
class SweepRecord:
    mode: str
    cache_size: int
    weight_lambda: float
    mean_power_cost: float  # over feasible slots only
    mean_backhaul_cost: float
    infeasible_slots: int
    slots: int


def evaluate_slot(
    config: ExperimentConfig,
    slot_channels: np.ndarray,
    placement: CachePlacement,
    lam: float,
    rounding_rng: np.random.Generator,
) -> RoundingReport | None:
    """Relax, round, and cost one slot; None marks an infeasible slot."""
    pop = config.popularity()
    qos = config.qos(lam)
    lifted = LiftedScenario(
        channels=slot_channels,
        delta=placement.delta,
        popularity=pop.probabilities,
        sinr_targets=qos.sinr_targets,
        noise_power_w=config.channel.noise_power_w,
        p_max_w=config.p_max_w,
        weight_lambda=lam,
        theta=config.theta,
        bs_count=config.geometry.bs_count,
        antennas_per_bs=config.channel.antennas_per_bs,
    )
    rel = mm_optimize(lifted, config.solver, config.mm)
    if rel.status == MmStatus.INFEASIBLE:
        return None
    report = gaussian_randomize(
        rel.w_matrices,
        slot_channels,
        placement,
        pop,
        qos,
        config.channel.noise_power_w,
        config.rounding.trials,
        rounding_rng,
        config.rounding,
    )
    if not report.feasible:
        return None
    return report


def run_tradeoff_sweep(config: ExperimentConfig, log=None) -> list[SweepRecord]:
    """Evaluate every (mode, size, lambda) cell over shared slots.

    Means are over feasible slots only; the infeasible count is reported in
    each record, never hidden.  A cell whose slots are all infeasible yields
    NaN means and continues the run.
    """
    base = config.scenario()
    slots = [base.slot(i) for i in range(config.slots)]

    cells = []
    for mode in config.modes:
        sizes = (0,) if mode == "none" else tuple(config.cache_sizes)
        for s_val in sizes:
            for lam in config.lambda_grid:
                cells.append((mode, s_val, lam))

    records: list[SweepRecord] = []
    for mode, s_val, lam in cells:
        placement = config.placement(mode, s_val)
        powers, backhauls, infeasible = [], [], 0
        for slot_idx, slot in enumerate(slots):
            rng = stream_rng(config.seed, f"rounding/{mode}/{s_val}/{lam!r}", slot_idx)
            report = evaluate_slot(config, slot.channels, placement, lam, rng)
            if report is None:
                infeasible += 1
                continue
            powers.append(report.best_cost.power_cost)
            backhauls.append(report.best_cost.backhaul_cost)
        rec = SweepRecord(
            mode=mode,
            cache_size=s_val,
            weight_lambda=lam,
            mean_power_cost=float(np.mean(powers)) if powers else math.nan,
            mean_backhaul_cost=float(np.mean(backhauls)) if backhauls else math.nan,
            infeasible_slots=infeasible,
            slots=config.slots,
        )
        records.append(rec)
        if log is not None:
            log(
                f"{mode:>8} S={s_val} lam={lam:<6} power={rec.mean_power_cost:.4f} "
                f"backhaul={rec.mean_backhaul_cost:.4f} infeasible={infeasible}/{config.slots}"
            )
    return records


# ---------------------------------------------------------------------------
# Gains table
# ---------------------------------------------------------------------------

def _percent_reduction(new: float, ref: float) -> float:
    if ref == 0.0:
        return 0.0
    return 100.0 * (1.0 - new / ref)


def gain_table(records: list[SweepRecord]) -> list[dict]:
    """Backhaul reductions at saturation (largest-lambda record per cell).

    Rows pair coded/uncoded/no-caching values per cache size; raises when a
    needed (mode, size) cell is absent.
    """
    saturated: dict[tuple[str, int], SweepRecord] = {}
    for rec in records:
        key = (rec.mode, rec.cache_size)
        if key not in saturated or rec.weight_lambda > saturated[key].weight_lambda:
            saturated[key] = rec

    if ("none", 0) not in saturated:
        raise HarnessError("missing sweep cell: (none, S=0)")
    none_b = saturated[("none", 0)].mean_backhaul_cost

    sizes = sorted({s for (mode, s) in saturated if mode != "none"})
    if not sizes:
        raise HarnessError("no cached-mode records present")
    table = []
    for s_val in sizes:
        for mode in ("coded", "uncoded"):
            if (mode, s_val) not in saturated:
                raise HarnessError(f"missing sweep cell: ({mode}, S={s_val})")
        coded_b = saturated[("coded", s_val)].mean_backhaul_cost
        uncoded_b = saturated[("uncoded", s_val)].mean_backhaul_cost
        table.append(
            {
                "S": s_val,
                "coded_backhaul": coded_b,
                "uncoded_backhaul": uncoded_b,
                "none_backhaul": none_b,
                "coded_vs_none_pct": _percent_reduction(coded_b, none_b),
                "uncoded_vs_none_pct": _percent_reduction(uncoded_b, none_b),
                "coded_vs_uncoded_pct": _percent_reduction(coded_b, uncoded_b),
            }
        )
    return table


def render_gain_table(table: list[dict]) -> str:
    lines = [f"{'S':>3} {'coded vs none':>14} {'uncoded vs none':>16} {'coded vs uncoded':>17}"]
    for row in table:
        lines.append(
            f"{row['S']:>3} {row['coded_vs_none_pct']:>13.1f}% {row['uncoded_vs_none_pct']:>15.1f}% "
            f"{row['coded_vs_uncoded_pct']:>16.1f}%"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def records_to_csv(records: list[SweepRecord]) -> str:
    """Deterministic CSV text; floats use shortest round-trip formatting."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.mode,
                r.cache_size,
                repr(r.weight_lambda),
                repr(r.mean_power_cost),
                repr(r.mean_backhaul_cost),
                r.infeasible_slots,
                r.slots,
            ]
        )
    return buf.getvalue()


def write_records_csv(records: list[SweepRecord], path) -> None:
    Path(path).write_text(records_to_csv(records))


def read_records_csv(path) -> list[SweepRecord]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise HarnessError(f"unexpected CSV header in {path}")
    out = []
    for row in rows[1:]:
        out.append(
            SweepRecord(
                mode=row[0],
                cache_size=int(row[1]),
                weight_lambda=float(row[2]),
                mean_power_cost=float(row[3]),
                mean_backhaul_cost=float(row[4]),
                infeasible_slots=int(row[5]),
                slots=int(row[6]),
            )
        )
    return out
