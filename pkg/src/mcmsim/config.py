"""Scenario configuration: plain-text ``key=value`` files.

Unknown keys are an error.  Values use SI units unless the key name says
otherwise (``*_kmh`` keys are converted at this boundary).  Blank lines and
``#`` comments are allowed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .planner import PrescriptionParams, VerificationLimits
from .protocol import ProtocolParams

__all__ = ["ConfigError", "ScenarioConfig", "parse_config_text", "load_config"]

SCENARIOS = ("lane_change_2", "lane_change_4")


class ConfigError(ValueError):
    """Bad scenario configuration; carries the offending key."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class ScenarioConfig:
    scenario: str = "lane_change_2"
    speed_kmh: float = 30.0
    loss_rate: float = 0.0
    t_timeout_s: float = 2.0
    dt_resend_s: float = 0.1
    seed: int = 0
    mcm_enabled: bool = True
    d0_m: float = 20.0
    dv_kmh: float = 20.0
    # Wait between prescription and action; defaults to t_timeout (< 0 means
    # "follow t_timeout").
    dt1_s: float = -1.0

    # protocol service; < 0 means "auto": at least one reliable-delivery
    # budget (max(1, t_timeout)) so retransmitted intentions can land.
    advertising_duration_s: float = -1.0
    cam_frequency_hz: float = 10.0
    cam_liveness_window_s: float = 2.0
    max_recalc: int = 3
    guard_slack_s: float = 1.0
    actuation_slack_s: float = 6.0

    # channel
    latency_s: float = 0.02

    # world
    dt_sim_s: float = 0.01
    lane_width_m: float = 3.5
    road_length_m: float = 400.0
    goal_distance_m: float = 260.0
    post_goal_margin_m: float = 30.0
    lane_change_duration_s: float = 3.0
    lc_trigger_time_s: float = 1.0
    run_cap_s: float = 120.0

    # planner
    collision_threshold_m: float = 20.0
    plan_spacing_m: float = 1.0
    thin_factor: int = 5
    prescription_tail_s: float = 2.0
    lc_gap_margin_m: float = 0.3

    # controllers
    cf_time_gap_s: float = 1.5
    cf_standstill_m: float = 5.0
    cf_speed_gain: float = 0.8
    cf_gap_gain: float = 0.3
    max_accel_mps2: float = 2.0
    max_decel_mps2: float = 5.0
    restart_accel_mps2: float = 1.0
    resume_gap_m: float = 25.0
    emergency_gap_m: float = 15.0
    cruise_gain: float = 1.0
    follow_gain: float = 1.0
    follow_accel_limit_mps2: float = 3.0

    # verification
    verify_max_decel_mps2: float = 5.0
    verify_min_speed_mps: float = 0.0
    verify_max_lateral_dev_m: float = 0.5
    verify_smoothing_window_s: float = 3.5

    # scenario geometry
    initial_gap_m: float = 10.0     # lane_change_2: prescriber ahead of receiver
    gap_front_m: float = 25.0       # lane_change_4: A ahead of the prescriber
    gap_target_m: float = 8.0       # lane_change_4: B behind the prescriber
    gap_follower_m: float = 17.5    # lane_change_4: C behind B

    # experiment hooks
    stream_mcm: bool = False
    trace: bool = False
    silence_station: int = 0        # 0 disables
    silence_at_s: float = 0.0

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"must be one of {SCENARIOS}")
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ConfigError("loss_rate", "must lie in [0, 1]")
        if self.speed_kmh <= 0:
            raise ConfigError("speed_kmh", "must be positive")
        if self.t_timeout_s < 0:
            raise ConfigError("t_timeout_s", "must be >= 0")
        if self.dt_resend_s <= 0:
            raise ConfigError("dt_resend_s", "must be positive")
        if self.thin_factor < 1:
            raise ConfigError("thin_factor", "must be >= 1")
        if self.dt_sim_s <= 0:
            raise ConfigError("dt_sim_s", "must be positive")
        if self.goal_distance_m + self.post_goal_margin_m >= self.road_length_m:
            raise ConfigError("goal_distance_m", "goal plus margin must fit on the road")

    # unit-resolved accessors -------------------------------------------------

    @property
    def speed(self) -> float:
        return self.speed_kmh / 3.6

    @property
    def dv(self) -> float:
        return self.dv_kmh / 3.6

    @property
    def dt1(self) -> float:
        return self.t_timeout_s if self.dt1_s < 0 else self.dt1_s

    @property
    def advertising_duration(self) -> float:
        if self.advertising_duration_s < 0:
            return max(1.0, self.t_timeout_s)
        return self.advertising_duration_s

    def protocol_params(self) -> ProtocolParams:
        return ProtocolParams(
            t_timeout=self.t_timeout_s,
            dt_resend=self.dt_resend_s,
            cam_frequency=self.cam_frequency_hz,
            advertising_duration=self.advertising_duration,
            cam_liveness_window=self.cam_liveness_window_s,
            max_recalc=self.max_recalc,
            guard_slack=self.guard_slack_s,
            actuation_slack=self.actuation_slack_s,
        )

    def prescription_params(self) -> PrescriptionParams:
        return PrescriptionParams(
            d0=self.d0_m,
            dv=self.dv,
            dt1=self.dt1,
            collision_threshold=self.collision_threshold_m,
            sample_dt=1.0 / self.cam_frequency_hz,
            resume_tail=self.prescription_tail_s,
        )

    def verification_limits(self) -> VerificationLimits:
        return VerificationLimits(
            max_decel=self.verify_max_decel_mps2,
            min_speed=self.verify_min_speed_mps,
            max_lateral_dev=self.verify_max_lateral_dev_m,
            smoothing_window=self.verify_smoothing_window_s,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _convert(key: str, raw: str):
    field = _FIELDS[key]
    if field.type == "bool":
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(key, f"expected a boolean, got {raw!r}")
    if field.type == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {raw!r}") from None
    if field.type == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
    return raw


def parse_config_text(text: str) -> ScenarioConfig:
    """Parse ``key=value`` lines into a validated configuration."""
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line.strip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(key, "unknown configuration key")
        values[key] = _convert(key, raw)
    return ScenarioConfig(**values)


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
