"""Collision-inclusive Kalman filter.

Error-state filter over [position, velocity, attitude, body rate], with a
switching prediction: in free flight the mean follows the commanded
acceleration and the rate estimate decays toward the commanded rate with
time constant tau_omega; while any contact flag is active (switch kappa=1)
the commanded terms are gated off and the impulse model's twist jump is
injected instead:

    p+ = p + v dt + a_cmd dt^2 / 2
    v+ = v + (1 - kappa) dt a_cmd + kappa dv_C
    R+ = R Exp(w dt)
    w+ = (1 - kappa) (exp(-dt/tau) w + (1 - exp(-dt/tau)) w_cmd)
         + kappa (w + dw_C)

dv_C / dw_C come from the impulse model evaluated at the current mean, so
repeated prediction during a persisting contact is idempotent (after the
jump the contact is separating and contributes nothing). The covariance is
propagated with the linearized free-flight model; on steps where a nonzero
jump was injected the velocity and rate blocks are inflated to reflect
impulse-model uncertainty.

Pose updates (position + attitude) follow the standard error-state form
with the attitude residual on the log map, a Joseph-form covariance
update, and a chi-square innovation gate. To keep a badly diverged filter
recoverable the gate force-accepts after a configurable run of consecutive
rejections.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .contact import ContactVector
from .dynamics import IcosahedronFrame, InertialParams, MavState
from .impulse import RestitutionParams, collision_delta
from .so3 import exp_so3, log_so3, orthonormalize

_I3 = np.eye(3)
_I12 = np.eye(12)

# error-state block slices
_P, _V, _TH, _W = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12)


@dataclass(frozen=True)
class NoiseConfig:
    """Process/measurement noise densities and filter knobs."""

    q_pos: float = 1e-8          # [m^2/s]
    q_vel: float = 0.02          # [(m/s)^2/s]
    q_att: float = 1e-6          # [rad^2/s]
    q_rate: float = 0.5          # [(rad/s)^2/s]
    meas_pos_sigma: float = 1e-3     # [m]
    meas_att_sigma: float = 0.2 * np.pi / 180.0   # [rad]
    tau_omega: float = 0.05      # rate decay constant [s]
    chi2_gate: float = 250.0     # innovation gate on 6-dof Mahalanobis^2
    max_consecutive_rejections: int = 10
    contact_inflation: float = 10.0  # variance factor on v/w blocks per jump

    def __post_init__(self):
        if min(self.meas_pos_sigma, self.meas_att_sigma, self.tau_omega) <= 0:
            raise ValueError("sigmas and tau_omega must be positive")


@dataclass(frozen=True, eq=False)
class CommandInput:
    """Commanded net acceleration (world) and body rate."""

    accel: np.ndarray
    omega: np.ndarray

    @staticmethod
    def zero() -> "CommandInput":
        return CommandInput(np.zeros(3), np.zeros(3))


class EstimatorState:
    """Filter mean (MavState fields), 12x12 covariance and contact switch."""

    __slots__ = ("p", "v", "R", "w", "P", "kappa")

    def __init__(self, p=None, v=None, R=None, w=None, P=None, kappa=0):
        self.p = np.zeros(3) if p is None else np.asarray(p, dtype=float).copy()
        self.v = np.zeros(3) if v is None else np.asarray(v, dtype=float).copy()
        self.R = np.eye(3) if R is None else np.asarray(R, dtype=float).copy()
        self.w = np.zeros(3) if w is None else np.asarray(w, dtype=float).copy()
        if P is None:
            P = np.diag([1e-6] * 3 + [1e-2] * 3 + [1e-4] * 3 + [1e-2] * 3)
        self.P = np.asarray(P, dtype=float).copy()
        self.kappa = int(kappa)

    def copy(self) -> "EstimatorState":
        return EstimatorState(self.p, self.v, self.R, self.w, self.P, self.kappa)

    def mean_state(self) -> MavState:
        return MavState(self.p, self.R, self.v, self.w)

    @staticmethod
    def from_truth(state: MavState) -> "EstimatorState":
        return EstimatorState(state.p, state.v, state.R, state.w)


def kappa_from_contacts(contacts: ContactVector) -> int:
    """1 iff any binary contact flag is set."""
    return 1 if contacts.any else 0


def predict(est: EstimatorState, cmd: CommandInput, contacts: ContactVector,
            dt: float, frame: IcosahedronFrame, rest: RestitutionParams,
            inertial: InertialParams, noise: NoiseConfig,
            kappa_enabled: bool = True) -> EstimatorState:
    """One switching prediction step (returns a new state)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    kappa = kappa_from_contacts(contacts) if kappa_enabled else 0

    dv_c = np.zeros(3)
    dw_c = np.zeros(3)
    if kappa:
        delta = collision_delta(est.mean_state(), frame, contacts, rest, inertial)
        dv_c, dw_c = delta.dv, delta.dw

    out = EstimatorState.__new__(EstimatorState)
    out.p = est.p + est.v * dt + 0.5 * dt * dt * cmd.accel
    decay = np.exp(-dt / noise.tau_omega)
    if kappa:
        out.v = est.v + dv_c
        out.w = est.w + dw_c
    else:
        out.v = est.v + dt * cmd.accel
        out.w = decay * est.w + (1.0 - decay) * cmd.omega
    out.R = orthonormalize(est.R @ exp_so3(est.w * dt))
    out.kappa = kappa

    # linearized free-flight propagation of the error state
    F = _I12.copy()
    F[_P, _V] = dt * _I3
    F[_TH, _TH] = exp_so3(-est.w * dt)
    F[_TH, _W] = dt * _I3
    F[9:, 9:] = decay * _I3
    P = F @ est.P @ F.T
    P[0:3, 0:3] += noise.q_pos * dt * _I3
    P[3:6, 3:6] += noise.q_vel * dt * _I3
    P[6:9, 6:9] += noise.q_att * dt * _I3
    P[9:12, 9:12] += noise.q_rate * dt * _I3
    jumped = kappa and (dv_c @ dv_c + dw_c @ dw_c) > 0.0
    if jumped and noise.contact_inflation != 1.0:
        s = np.ones(12)
        s[3:6] = s[9:12] = np.sqrt(noise.contact_inflation)
        P = P * np.outer(s, s)
    out.P = 0.5 * (P + P.T)
    return out


@dataclass(frozen=True)
class UpdateResult:
    state: "EstimatorState"
    accepted: bool
    mahalanobis_sq: float


class _GateCounter:
    """Tracks consecutive rejections for the force-accept escape hatch."""

    __slots__ = ("consecutive", "rejected_total")

    def __init__(self):
        self.consecutive = 0
        self.rejected_total = 0


def update_pose(est: EstimatorState, p_meas: np.ndarray, R_meas: np.ndarray,
                noise: NoiseConfig, gate: _GateCounter | None = None
                ) -> UpdateResult:
    """Standard error-state update on a (position, attitude) measurement."""
    y = np.empty(6)
    y[0:3] = p_meas - est.p
    y[3:6] = log_so3(est.R.T @ R_meas)

    # H selects the position and attitude error blocks
    PHt = np.empty((12, 6))
    PHt[:, 0:3] = est.P[:, 0:3]
    PHt[:, 3:6] = est.P[:, 6:9]
    S = np.empty((6, 6))
    S[0:3, :] = PHt[0:3, :]
    S[3:6, :] = PHt[6:9, :]
    Rm = np.zeros((6, 6))
    Rm[0, 0] = Rm[1, 1] = Rm[2, 2] = noise.meas_pos_sigma ** 2
    Rm[3, 3] = Rm[4, 4] = Rm[5, 5] = noise.meas_att_sigma ** 2
    S = S + Rm

    S_inv = np.linalg.inv(S)
    d2 = float(y @ S_inv @ y)
    # gating is only active when the caller owns a rejection counter; the
    # bare function applies the measurement unconditionally
    if gate is not None:
        if d2 > noise.chi2_gate:
            gate.rejected_total += 1
            gate.consecutive += 1
            if gate.consecutive <= noise.max_consecutive_rejections:
                return UpdateResult(est, False, d2)
            gate.consecutive = 0   # force-accept to stay recoverable
        else:
            gate.consecutive = 0

    K = PHt @ S_inv                       # (12, 6)
    dx = K @ y
    out = EstimatorState.__new__(EstimatorState)
    out.p = est.p + dx[0:3]
    out.v = est.v + dx[3:6]
    out.R = orthonormalize(est.R @ exp_so3(dx[6:9]))
    out.w = est.w + dx[9:12]
    out.kappa = est.kappa

    # Joseph form keeps the covariance PSD under the gate's force-accepts
    IKH = _I12.copy()
    IKH[:, 0:3] -= K[:, 0:3]
    IKH[:, 6:9] -= K[:, 3:6]
    P = IKH @ est.P @ IKH.T + K @ Rm @ K.T
    out.P = 0.5 * (P + P.T)
    return UpdateResult(out, True, d2)


class CollisionInclusiveKF:
    """Convenience wrapper owning one estimator instance per trial."""

    def __init__(self, initial: EstimatorState, noise: NoiseConfig,
                 frame: IcosahedronFrame, rest: RestitutionParams,
                 inertial: InertialParams, kappa_enabled: bool = True):
        self.state = initial
        self.noise = noise
        self.frame = frame
        self.rest = rest
        self.inertial = inertial
        self.kappa_enabled = kappa_enabled
        self.gate = _GateCounter()

    def predict(self, cmd: CommandInput, contacts: ContactVector, dt: float):
        self.state = predict(self.state, cmd, contacts, dt, self.frame,
                             self.rest, self.inertial, self.noise,
                             self.kappa_enabled)

    def update_pose(self, p_meas: np.ndarray, R_meas: np.ndarray) -> bool:
        res = update_pose(self.state, p_meas, R_meas, self.noise, self.gate)
        self.state = res.state
        return res.accepted

    @property
    def rejected_measurements(self) -> int:
        return self.gate.rejected_total
