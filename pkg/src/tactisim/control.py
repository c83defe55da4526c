"""Cascaded flight control and the reflexive collision-recovery supervisor.

Cascade: position PD -> commanded specific force (world) -> desired
attitude + total thrust -> proportional attitude loop on the log map ->
rate PD with gyroscopic feedforward -> body torque. The commanded
"specific force" convention is used throughout: it is the acceleration the
thrust vector must produce, so hover corresponds to a_cmd = -g and
thrust = m * ||a_cmd||.

Recovery: on a trigger the supervisor latches a retreat setpoint

    p_rec = p_hat + sqrt(||v_hat||) * retreat_dir

(the retreat direction is the beam normal of the triggered vertex, which
points from the surface back toward the vehicle) and holds it until the
vehicle stabilizes there or a deadline expires, after which control is
handed back to the path reference and the collision points are released
for registration with the planner.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dynamics import InertialParams
from .so3 import cross3, log_so3

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class PositionReference:
    p_des: np.ndarray
    v_des: np.ndarray
    yaw_des: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p_des", np.asarray(self.p_des, dtype=float))
        object.__setattr__(self, "v_des", np.asarray(self.v_des, dtype=float))

    @staticmethod
    def hold(p: np.ndarray, yaw: float = 0.0) -> "PositionReference":
        return PositionReference(np.asarray(p, dtype=float), np.zeros(3), yaw)


@dataclass(frozen=True)
class ControllerGains:
    kp_pos: float = 9.0
    kd_pos: float = 6.0
    k_att: float = 12.0          # attitude log-map gain [1/s]
    k_rate: float = 40.0         # rate-error gain [1/s]
    accel_max: float = 24.0      # norm cap on commanded specific force [m/s^2]
    omega_max: float = 25.0      # cap on commanded body rate [rad/s]

    def __post_init__(self):
        if min(self.kp_pos, self.kd_pos, self.k_att, self.k_rate,
               self.accel_max, self.omega_max) <= 0:
            raise ValueError("controller gains must be positive")


def position_control(p_hat: np.ndarray, v_hat: np.ndarray,
                     ref: PositionReference, gains: ControllerGains,
                     gravity: np.ndarray) -> np.ndarray:
    """PD position loop with gravity compensation -> specific force (world).

    Saturation is altitude-first: the vertical component keeps its demand
    (within the envelope) and the horizontal demand is clipped into the
    remaining budget, so aggressive lateral errors cannot starve lift.
    """
    a = gains.kp_pos * (ref.p_des - p_hat) + gains.kd_pos * (ref.v_des - v_hat) \
        - gravity
    a_z = min(max(a[2], -gains.accel_max), gains.accel_max)
    budget_sq = gains.accel_max ** 2 - a_z * a_z
    h_sq = a[0] * a[0] + a[1] * a[1]
    if h_sq > budget_sq:
        scale = np.sqrt(max(budget_sq, 0.0) / h_sq) if h_sq > 0 else 0.0
        a = np.array([a[0] * scale, a[1] * scale, a_z])
    elif a_z != a[2]:
        a = np.array([a[0], a[1], a_z])
    return a


def accel_to_attitude_thrust(a_cmd: np.ndarray, yaw_des: float,
                             inertial: InertialParams,
                             R_prev: np.ndarray) -> tuple[np.ndarray, float]:
    """Desired attitude (body z along a_cmd, yaw as requested) and thrust [N].

    Near the free-fall singularity (vanishing specific force) the previous
    attitude is held with zero thrust.
    """
    norm = np.linalg.norm(a_cmd)
    if norm < 1e-6:
        return R_prev.copy(), 0.0
    z_b = a_cmd / norm
    x_c = np.array([np.cos(yaw_des), np.sin(yaw_des), 0.0])
    y_b = cross3(z_b, x_c)
    y_norm = np.linalg.norm(y_b)
    if y_norm < 1e-6:
        # thrust axis parallel to the yaw heading; keep previous body y
        y_b = R_prev[:, 1] - (R_prev[:, 1] @ z_b) * z_b
        y_norm = np.linalg.norm(y_b)
        if y_norm < 1e-6:
            y_b = cross3(z_b, _Z)
            y_norm = np.linalg.norm(y_b)
    y_b = y_b / y_norm
    x_b = cross3(y_b, z_b)
    R_des = np.column_stack([x_b, y_b, z_b])
    return R_des, inertial.mass * norm


def project_thrust(a_cmd: np.ndarray, R_hat: np.ndarray,
                   inertial: InertialParams) -> float:
    """Collective thrust as the commanded specific force projected on the
    current body z. Keeps a strongly tilted vehicle from firing its full
    thrust in the wrong direction while the attitude loop catches up."""
    return inertial.mass * max(float(a_cmd @ R_hat[:, 2]), 0.0)


def attitude_control(R_hat: np.ndarray, R_des: np.ndarray,
                     gains: ControllerGains) -> np.ndarray:
    """Proportional body-rate command from the attitude error log map."""
    w_cmd = gains.k_att * log_so3(R_hat.T @ R_des)
    norm = np.linalg.norm(w_cmd)
    if norm > gains.omega_max:
        w_cmd = w_cmd * (gains.omega_max / norm)
    return w_cmd


def rate_control(w_hat: np.ndarray, w_cmd: np.ndarray, gains: ControllerGains,
                 inertial: InertialParams) -> np.ndarray:
    """Rate loop with gyroscopic feedforward -> body torque."""
    return inertial.inertia @ (gains.k_rate * (w_cmd - w_hat)) \
        + cross3(w_hat, inertial.inertia @ w_hat)


def recovery_setpoint(p_hat: np.ndarray, v_hat: np.ndarray,
                      retreat_dir: np.ndarray,
                      min_altitude: float = 0.4) -> np.ndarray:
    """Retreat point at distance sqrt(||v||) along the retreat direction.

    The offset is applied in full 3-D; only if the result dips below
    `min_altitude` is its z clamped.
    """
    alpha = np.sqrt(np.linalg.norm(v_hat))
    p_rec = p_hat + alpha * retreat_dir
    if p_rec[2] < min_altitude:
        p_rec = p_rec.copy()
        p_rec[2] = min_altitude
    return p_rec


class FlightMode(enum.Enum):
    NOMINAL = 0
    RECOVERING = 1
    RESUME = 2        # transient: emitted for exactly one step


class TriggerKind(enum.Enum):
    TACTILE = "tactile"
    ACCELEROMETER = "accelerometer"
    NONE = "none"


@dataclass(frozen=True)
class SupervisorConfig:
    trigger: TriggerKind = TriggerKind.TACTILE
    pos_tolerance: float = 0.15      # [m]
    speed_tolerance: float = 0.3     # [m/s]
    hold_time: float = 0.5           # [s]
    deadline: float = 5.0            # [s]
    min_altitude_setpoint: float = 0.4   # [m]
    accel_threshold: float = 3.0 * 9.81  # [m/s^2]


@dataclass
class CollisionEvent:
    time: float
    vertex: int
    position: np.ndarray        # estimated world position of the vertex


class RecoverySupervisor:
    """Mode machine: Nominal -> Recovering on a trigger, -> Resume when the
    vehicle has settled at the retreat point (or on deadline).

    Obstacle points are only released on the Recovering -> Resume
    transition, never while still in contact. Repeated triggers during
    recovery re-latch the setpoint and queue additional points.
    """

    def __init__(self, cfg: SupervisorConfig):
        self.cfg = cfg
        self.mode = FlightMode.NOMINAL
        self.p_rec: np.ndarray | None = None
        self.yaw_hold = 0.0
        self._t_enter = 0.0
        self._t_within: float | None = None
        self._prev_flags = np.zeros(12, dtype=bool)
        self._prev_accel_high = False
        self._pending: list[CollisionEvent] = []
        self.events: list[CollisionEvent] = []

    def _tactile_rising(self, flags: np.ndarray) -> np.ndarray:
        rising = flags & ~self._prev_flags
        self._prev_flags = flags.copy()
        return rising

    def _latch(self, t: float, est_p, est_v, est_R, frame, rising,
               current_yaw: float):
        from .impulse import beam_normal
        if rising.size and rising.any():
            normals = [beam_normal(frame, int(i), est_R)
                       for i in np.nonzero(rising)[0]]
            retreat = np.sum(normals, axis=0)
        else:
            retreat = np.zeros(3)
        n = np.linalg.norm(retreat)
        if n < 1e-9:
            speed = np.linalg.norm(est_v)
            retreat = -est_v / speed if speed > 1e-6 else _Z.copy()
        else:
            retreat = retreat / n
        self.p_rec = recovery_setpoint(est_p, est_v, retreat,
                                       self.cfg.min_altitude_setpoint)
        if self.mode is not FlightMode.RECOVERING:
            self.yaw_hold = current_yaw
            self._t_enter = t
        self._t_within = None
        self.mode = FlightMode.RECOVERING
        for i in np.nonzero(rising)[0]:
            ev = CollisionEvent(t, int(i), est_p + est_R @ frame.vertices[i])
            self._pending.append(ev)
            self.events.append(ev)

    def step(self, t: float, contacts, est_p: np.ndarray, est_v: np.ndarray,
             est_R: np.ndarray, frame, accel_norm: float,
             current_yaw: float) -> list[CollisionEvent]:
        """Advance the mode machine; returns points released for registration."""
        released: list[CollisionEvent] = []
        if self.cfg.trigger is TriggerKind.TACTILE:
            rising = self._tactile_rising(contacts.flags)
            if rising.any():
                self._latch(t, est_p, est_v, est_R, frame, rising, current_yaw)
        elif self.cfg.trigger is TriggerKind.ACCELEROMETER:
            high = accel_norm > self.cfg.accel_threshold
            if high and not self._prev_accel_high:
                self._latch(t, est_p, est_v, est_R, frame,
                            np.zeros(12, dtype=bool), current_yaw)
            self._prev_accel_high = high

        if self.mode is FlightMode.RECOVERING:
            err = np.linalg.norm(est_p - self.p_rec)
            speed = np.linalg.norm(est_v)
            if err < self.cfg.pos_tolerance and speed < self.cfg.speed_tolerance:
                if self._t_within is None:
                    self._t_within = t
                settled = (t - self._t_within) >= self.cfg.hold_time
            else:
                self._t_within = None
                settled = False
            if settled or (t - self._t_enter) > self.cfg.deadline:
                self.mode = FlightMode.RESUME
                released = self._pending
                self._pending = []
        elif self.mode is FlightMode.RESUME:
            self.mode = FlightMode.NOMINAL
        return released

    def reference(self) -> PositionReference:
        """Recovery hold reference (valid while RECOVERING)."""
        return PositionReference(self.p_rec, np.zeros(3), self.yaw_hold)
