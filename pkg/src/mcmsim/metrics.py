"""Scenario runner, parameter sweeps, and CSV emission.

``run_scenario`` executes one configured world until the measured receiver
crosses the goal line (or a wall-clock cap) and distills the run into
:class:`RunMetrics`.  ``sweep`` repeats runs across one axis with derived
seeds and aggregates arrival times into the relative buckets used by the
robustness experiment.  Metrics are a pure function of (config, seed):
repeated runs agree bitwise.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .config import ConfigError, ScenarioConfig
from .messages import MsgType
from .world import build_world, step_world

__all__ = [
    "RunMetrics",
    "SweepResult",
    "BUCKET_LABELS",
    "run_scenario",
    "arrival_bucket",
    "sweep",
    "emit_csv",
    "bandwidth_rows",
    "run_rows",
]

# Arrival-time buckets relative to the lossless baseline arrival t0.
BUCKET_LABELS = ("<=t0+1s", "t0+1..2s", "t0+2..3s", ">t0+3s")

AXES = {
    "loss_rate": "loss_rate",
    "t_timeout": "t_timeout_s",
    "speed": "speed_kmh",
}


@dataclass
class RunMetrics:
    """Distilled outcome of one scenario run."""

    arrival_time: float | None
    coordination_outcome: str
    min_gap: float
    bytes_per_second: dict[tuple[int, int], int]
    tx_count: dict[int, int]
    tx_bytes: dict[int, int]
    gap_at_lc_onset: float | None
    gap_at_prescription: float | None
    lc_onset_time: float | None
    emergency_episodes: int
    prescriptions: list[tuple[float, int, int]] = field(default_factory=list)
    cancels: list[tuple[float, int, int]] = field(default_factory=list)
    fins: list[tuple[float, int, int]] = field(default_factory=list)
    trace_lines: list[str] = field(default_factory=list)
    sent_copies: int = 0
    delivered_copies: int = 0
    dropped_copies: int = 0


_ABORT_PRIORITY = ("comm_loss", "rejected", "peer_cancel_refused", "send_timeout",
                   "guard_timeout", "aborted", "no_conflict")


def _classify_outcome(world, finished: bool) -> str:
    """Map engine outcomes onto the reported enum.

    Success means the run finished with no coordination abort (trivially so
    when coordination is disabled).  Aborts are ranked: CAM loss, refusal,
    then every flavour of delivery / discovery timeout.
    """
    if not finished:
        return "AbortedTimeout"
    if not world.cfg.mcm_enabled:
        return "Success"
    outcomes = [o for (_t, _s, o) in world.coordination_events if o]
    # A Cancel(NotTarget) is the normal exit for receivers that were not
    # chosen; it does not mark the coordination as failed.
    aborts = [o for o in outcomes if o not in ("success", "peer_cancel_not_target")]
    # An undiscovered receiver (no intentions under loss) counts as a
    # delivery failure, not a clean no-conflict exit.
    if "no_conflict" in aborts and world.cfg.loss_rate == 0.0:
        aborts = [o for o in aborts if o != "no_conflict"]
    if not aborts:
        return "Success"
    for key in _ABORT_PRIORITY:
        if any(o.startswith(key) or o == key for o in aborts):
            if key == "comm_loss":
                return "AbortedCommLoss"
            if key in ("rejected", "peer_cancel_refused"):
                return "AbortedRefused"
            return "AbortedTimeout"
    return "AbortedTimeout"


def run_scenario(cfg: ScenarioConfig) -> RunMetrics:
    """Execute one run; stops at the receiver's goal crossing or the cap."""
    if cfg.scenario not in ("lane_change_2", "lane_change_4"):
        raise ConfigError("scenario", f"unknown scenario {cfg.scenario}")
    world = build_world(cfg)
    max_ticks = int(round(cfg.run_cap_s / cfg.dt_sim_s))
    while world.arrival_time is None and world.tick < max_ticks:
        step_world(world)
    finished = world.arrival_time is not None

    prescriptions = [(t, s, tgt) for (t, m, s, tgt) in world.msg_log
                     if m == MsgType.PRESCRIPTION]
    cancels = [(t, s, tgt) for (t, m, s, tgt) in world.msg_log if m == MsgType.CANCEL]
    fins = [(t, s, tgt) for (t, m, s, tgt) in world.msg_log if m == MsgType.FIN]
    episodes = sum(v.emergency_episodes for v in world.vehicles)
    return RunMetrics(
        arrival_time=world.arrival_time,
        coordination_outcome=_classify_outcome(world, finished),
        min_gap=world.min_gap,
        bytes_per_second=dict(world.bandwidth),
        tx_count=dict(world.tx_count),
        tx_bytes=dict(world.tx_bytes),
        gap_at_lc_onset=world.gap_at_lc_onset,
        gap_at_prescription=world.by_station[world.prescriber_station].gap_at_prescription,
        lc_onset_time=world.lc_onset_time,
        emergency_episodes=episodes,
        prescriptions=prescriptions,
        cancels=cancels,
        fins=fins,
        trace_lines=list(world.trace_lines),
        sent_copies=world.sent_copies,
        delivered_copies=world.delivered_copies,
        dropped_copies=world.dropped_copies,
    )


def arrival_bucket(arrival: float | None, t0: float) -> str:
    """Bucket an arrival time relative to the lossless baseline ``t0``."""
    if arrival is None:
        return BUCKET_LABELS[3]
    delta = arrival - t0
    if delta <= 1.0:
        return BUCKET_LABELS[0]
    if delta <= 2.0:
        return BUCKET_LABELS[1]
    if delta <= 3.0:
        return BUCKET_LABELS[2]
    return BUCKET_LABELS[3]


@dataclass
class SweepRow:
    axis_value: float
    rep: int
    seed: int
    metrics: RunMetrics


@dataclass
class SweepResult:
    axis: str
    baseline_arrival: float
    rows: list[SweepRow]

    def bucket_shares(self, axis_value: float) -> dict[str, float]:
        rows = [r for r in self.rows if r.axis_value == axis_value]
        shares = {label: 0.0 for label in BUCKET_LABELS}
        for r in rows:
            shares[arrival_bucket(r.metrics.arrival_time, self.baseline_arrival)] += 1
        return {k: v / len(rows) for k, v in shares.items()}

    def arrivals(self, axis_value: float, cap: float) -> list[float]:
        return [
            r.metrics.arrival_time if r.metrics.arrival_time is not None else cap
            for r in self.rows
            if r.axis_value == axis_value
        ]


def _run_one(args: tuple[ScenarioConfig, str, float, int]) -> SweepRow:
    cfg, key, value, rep = args
    run_cfg = cfg.replace(**{key: value, "seed": cfg.seed + rep, "trace": False})
    return SweepRow(axis_value=value, rep=rep, seed=run_cfg.seed,
                    metrics=run_scenario(run_cfg))


def sweep(
    cfg: ScenarioConfig,
    axis: str,
    values,
    repetitions: int,
    workers: int = 1,
) -> SweepResult:
    """Run ``repetitions`` seeded runs per axis value.

    Seeds derive as ``base_seed + rep`` so results are reproducible and
    independent of worker scheduling.  The bucket reference ``t0`` is the
    arrival of a lossless run under the same configuration.
    """
    if axis not in AXES:
        raise ConfigError("axis", f"must be one of {sorted(AXES)}")
    if repetitions < 1:
        raise ConfigError("reps", "must be >= 1")
    key = AXES[axis]
    baseline_cfg = cfg.replace(loss_rate=0.0, trace=False)
    baseline = run_scenario(baseline_cfg)
    t0 = baseline.arrival_time if baseline.arrival_time is not None else cfg.run_cap_s

    jobs = [(cfg, key, float(value), rep)
            for value in values for rep in range(repetitions)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs, chunksize=8))
    else:
        rows = [_run_one(job) for job in jobs]
    return SweepResult(axis=axis, baseline_arrival=t0, rows=rows)


# -- CSV -------------------------------------------------------------------------


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.6f}"
    return str(value)


def emit_csv(table: tuple[tuple, list[tuple]], path) -> None:
    """Write ``(header, rows)`` as UTF-8 CSV with a trailing newline.

    Floats are fixed at six decimals so identical runs produce identical
    bytes.  An empty table is an error and creates no file.
    """
    header, rows = table
    if not rows:
        raise ValueError("refusing to write an empty table")
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} != header width {len(header)}")
        lines.append(",".join(_format(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def bandwidth_rows(metrics: RunMetrics) -> tuple[tuple, list[tuple]]:
    """Bandwidth table: one row per (second, message type) with bytes sent."""
    header = ("time_s", "msg_type", "bytes")
    rows = [
        (second, MsgType(mtype).name, count)
        for (second, mtype), count in sorted(metrics.bytes_per_second.items())
    ]
    return header, rows


def run_rows(metrics: RunMetrics, cfg: ScenarioConfig) -> tuple[tuple, list[tuple]]:
    """Single-run summary table."""
    header = (
        "scenario", "speed_kmh", "loss_rate", "t_timeout_s", "seed", "mcm_enabled",
        "arrival_time_s", "outcome", "min_gap_m", "gap_at_lc_onset_m",
        "emergency_episodes", "total_bytes",
    )
    rows = [(
        cfg.scenario, cfg.speed_kmh, cfg.loss_rate, cfg.t_timeout_s, cfg.seed,
        cfg.mcm_enabled, metrics.arrival_time, metrics.coordination_outcome,
        metrics.min_gap, metrics.gap_at_lc_onset, metrics.emergency_episodes,
        sum(metrics.tx_bytes.values()),
    )]
    return header, rows


def sweep_run_rows(result: SweepResult, cfg: ScenarioConfig) -> tuple[tuple, list[tuple]]:
    """Per-run sweep table, one row per (axis value, repetition)."""
    header = (result.axis, "rep", "seed", "arrival_time_s", "outcome",
              "min_gap_m", "bucket")
    rows = [
        (
            r.axis_value, r.rep, r.seed, r.metrics.arrival_time,
            r.metrics.coordination_outcome, r.metrics.min_gap,
            arrival_bucket(r.metrics.arrival_time, result.baseline_arrival),
        )
        for r in result.rows
    ]
    return header, rows


def sweep_summary_rows(result: SweepResult, cfg: ScenarioConfig) -> tuple[tuple, list[tuple]]:
    """Aggregate sweep table: bucket shares plus mean/median arrival.

    For the loss axis this is the stacked-percentage analog table
    (loss_rate, timeout_s, bucket, share); other axes reuse the layout with
    the axis value in the first column.
    """
    header = (result.axis, "timeout_s", "bucket", "share", "mean_arrival_s",
              "median_arrival_s")
    values = sorted({r.axis_value for r in result.rows})
    rows = []
    for value in values:
        arrivals = sorted(result.arrivals(value, cfg.run_cap_s))
        n = len(arrivals)
        mean = sum(arrivals) / n
        median = (
            arrivals[n // 2] if n % 2 == 1
            else 0.5 * (arrivals[n // 2 - 1] + arrivals[n // 2])
        )
        shares = result.bucket_shares(value)
        for label in BUCKET_LABELS:
            rows.append((value, cfg.t_timeout_s, label, shares[label], mean, median))
    return header, rows
