"""Trajectory-exchange maneuver coordination: protocol engine and simulator.

The package is organised along the data path: trajectory math
(:mod:`mcmsim.trajectory`), the message model and wire format
(:mod:`mcmsim.messages`, :mod:`mcmsim.codec`), the per-station protocol
engine (:mod:`mcmsim.protocol`), the lane-change application logic
(:mod:`mcmsim.planner`), the deterministic world (:mod:`mcmsim.world`),
and experiment runners (:mod:`mcmsim.metrics`, :mod:`mcmsim.cli`).
"""

from .codec import decode, encode, encoded_size
from .config import ConfigError, ScenarioConfig, load_config, parse_config_text
from .messages import (
    Ack,
    Acceptance,
    Advertisement,
    Cam,
    Cancel,
    CancelReason,
    Fin,
    Intention,
    McmMessage,
    MessageHeader,
    MsgType,
    Prescription,
)
from .metrics import RunMetrics, emit_csv, run_scenario, sweep
from .planner import (
    LaneGeometry,
    PrescriptionParams,
    VerificationLimits,
    filter_in_lane,
    find_leading,
    generate_prescribed,
    load_prescription,
    verify_prescription,
)
from .protocol import (
    CoordinationState,
    Phase,
    ProtocolParams,
    ReliableSend,
    Role,
    check_cam_liveness,
    collect_intentions,
    delivery_success_probability,
    step,
    tick_reliable_sends,
)
from .trajectory import (
    CollisionReport,
    SpeedTrajectory,
    TimedTrajectory,
    convert_trajectory,
    detect_collision,
    position_at,
    thin_trajectory,
)
from .world import WorldState, build_world, car_following_accel, step_world

__version__ = "0.1.0"
