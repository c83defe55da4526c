"""Rigid-body quadrotor model with an icosahedral vertex shell.

State convention
----------------
    p : position, world frame [m]
    R : rotation matrix, body -> world
    v : linear velocity, world frame [m/s]
    w : angular rate, body frame [rad/s]

Equations of motion (free flight):

    p_dot = v
    v_dot = f_world / m + g
    R_dot = R [w]_x
    w_dot = I^-1 (tau_body - w x I w)

Thrust is produced along body +z and rotated to world by the caller
(`ActuatorWrench.force_world` is already world frame); torque stays in the
body frame.

The closed-loop integrator is fixed-step semi-implicit Euler (velocity
kicked first, pose advanced with the new rates) which is robust against
stiff penalty-contact forces at 1 kHz. An RK4 step is provided for
convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .so3 import cross3, cross_rows, exp_so3, hat, orthonormalize

GRAVITY = np.array([0.0, 0.0, -9.81])

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


@dataclass(frozen=True, eq=False)
class InertialParams:
    """Mass/inertia of the vehicle. Inertia must be symmetric positive definite."""

    mass: float = 0.25
    inertia: np.ndarray = field(
        default_factory=lambda: np.diag([8.0e-4, 8.0e-4, 1.2e-3]))
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        if not self.mass > 0.0:
            raise ValueError(f"mass must be positive, got {self.mass}")
        I = np.asarray(self.inertia, dtype=float)
        if I.shape != (3, 3) or np.abs(I - I.T).max() > 1e-12:
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.linalg.eigvalsh(I).min() <= 0.0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", I)
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))
        object.__setattr__(self, "inertia_inv", np.linalg.inv(I))

    inertia_inv: np.ndarray = field(init=False, repr=False)


class MavState:
    """Mutable pose/twist container. Copy before handing across boundaries."""

    __slots__ = ("p", "R", "v", "w")

    def __init__(self, p=None, R=None, v=None, w=None):
        self.p = np.zeros(3) if p is None else np.asarray(p, dtype=float).copy()
        self.R = np.eye(3) if R is None else np.asarray(R, dtype=float).copy()
        self.v = np.zeros(3) if v is None else np.asarray(v, dtype=float).copy()
        self.w = np.zeros(3) if w is None else np.asarray(w, dtype=float).copy()

    def copy(self) -> "MavState":
        return MavState(self.p, self.R, self.v, self.w)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.p).all() and np.isfinite(self.R).all()
                    and np.isfinite(self.v).all() and np.isfinite(self.w).all())

    def kinetic_energy(self, params: InertialParams) -> float:
        return 0.5 * params.mass * float(self.v @ self.v) \
            + 0.5 * float(self.w @ (params.inertia @ self.w))

    def __repr__(self):
        return f"MavState(p={self.p}, v={self.v}, w={self.w})"


@dataclass(frozen=True, eq=False)
class ActuatorWrench:
    """Total motor force (world frame) and torque (body frame)."""

    force_world: np.ndarray
    torque_body: np.ndarray

    @staticmethod
    def zero() -> "ActuatorWrench":
        return ActuatorWrench(np.zeros(3), np.zeros(3))

    @staticmethod
    def hover(params: InertialParams) -> "ActuatorWrench":
        return ActuatorWrench(-params.mass * params.gravity, np.zeros(3))


class IcosahedronFrame:
    """The 12 shell vertices (body frame) and their beam axes.

    Vertices are the cyclic golden-rectangle coordinates of a regular
    icosahedron, scaled so every vertex sits at `radius` from the center.
    They come in 6 antipodal pairs; the beam axis of vertex i is
    vertices[i] / radius.
    """

    __slots__ = ("radius", "vertices", "axes")

    def __init__(self, radius: float = 0.15):
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        raw = []
        for a, b in ((1.0, _PHI), (-1.0, _PHI), (1.0, -_PHI), (-1.0, -_PHI)):
            raw.append((0.0, a, b))
            raw.append((a, b, 0.0))
            raw.append((b, 0.0, a))
        verts = np.array(raw, dtype=float)
        verts *= radius / np.linalg.norm(verts[0])
        self.radius = float(radius)
        self.vertices = verts
        self.axes = verts / radius

    def __len__(self):
        return 12


class StateDerivative(NamedTuple):
    dp: np.ndarray
    dv: np.ndarray
    dR: np.ndarray
    dw: np.ndarray


def acceleration(state: MavState, wrench: ActuatorWrench,
                 params: InertialParams) -> tuple[np.ndarray, np.ndarray]:
    """Linear (world) and angular (body) acceleration for the current state."""
    a = wrench.force_world / params.mass + params.gravity
    Iw = params.inertia @ state.w
    w_dot = params.inertia_inv @ (wrench.torque_body - cross3(state.w, Iw))
    return a, w_dot


def derivative(state: MavState, wrench: ActuatorWrench,
               params: InertialParams) -> StateDerivative:
    if not (state.is_finite() and np.isfinite(wrench.force_world).all()
            and np.isfinite(wrench.torque_body).all()):
        raise ValueError("non-finite state or wrench")
    a, w_dot = acceleration(state, wrench, params)
    return StateDerivative(state.v.copy(), a, state.R @ hat(state.w), w_dot)


def step_semi_implicit(state: MavState, wrench: ActuatorWrench,
                       params: InertialParams, dt: float) -> MavState:
    """One fixed semi-implicit Euler step (first order).

    Rates are kicked with accelerations evaluated at the current state,
    then the pose advances using the *new* rates. The rotation update uses
    the exponential map and is re-orthonormalized.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    a, w_dot = acceleration(state, wrench, params)
    out = MavState.__new__(MavState)
    out.v = state.v + dt * a
    out.w = state.w + dt * w_dot
    out.p = state.p + dt * out.v
    out.R = orthonormalize(state.R @ exp_so3(dt * out.w))
    return out


WrenchFn = Callable[[MavState], ActuatorWrench]


def step_rk4(state: MavState, wrench: ActuatorWrench | WrenchFn,
             params: InertialParams, dt: float) -> MavState:
    """Classical RK4 step (fourth order) for convergence studies.

    The rotation block is integrated in the embedding R^{3x3} and projected
    back onto SO(3) afterwards.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    wf = wrench if callable(wrench) else (lambda _s: wrench)

    def f(s: MavState) -> StateDerivative:
        return derivative(s, wf(s), params)

    def nudge(s: MavState, d: StateDerivative, h: float) -> MavState:
        n = MavState.__new__(MavState)
        n.p = s.p + h * d.dp
        n.v = s.v + h * d.dv
        n.R = s.R + h * d.dR
        n.w = s.w + h * d.dw
        return n

    k1 = f(state)
    k2 = f(nudge(state, k1, dt / 2))
    k3 = f(nudge(state, k2, dt / 2))
    k4 = f(nudge(state, k3, dt))
    out = MavState.__new__(MavState)
    out.p = state.p + dt / 6 * (k1.dp + 2 * k2.dp + 2 * k3.dp + k4.dp)
    out.v = state.v + dt / 6 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv)
    out.w = state.w + dt / 6 * (k1.dw + 2 * k2.dw + 2 * k3.dw + k4.dw)
    out.R = orthonormalize(
        state.R + dt / 6 * (k1.dR + 2 * k2.dR + 2 * k3.dR + k4.dR))
    return out


def vertex_position(state: MavState, frame: IcosahedronFrame, i: int) -> np.ndarray:
    """World position of shell vertex i (0-based)."""
    if not 0 <= i < 12:
        raise IndexError(f"vertex index {i} out of range [0, 12)")
    return state.p + state.R @ frame.vertices[i]


def vertex_velocity(state: MavState, frame: IcosahedronFrame, i: int) -> np.ndarray:
    """World velocity of shell vertex i: v + (R w) x (R r_i)."""
    if not 0 <= i < 12:
        raise IndexError(f"vertex index {i} out of range [0, 12)")
    rho = state.R @ frame.vertices[i]
    return state.v + cross3(state.R @ state.w, rho)


def vertices_world(state: MavState, frame: IcosahedronFrame) -> np.ndarray:
    """All 12 vertex positions, shape (12, 3)."""
    return state.p + frame.vertices @ state.R.T


def vertex_velocities_world(state: MavState, frame: IcosahedronFrame) -> np.ndarray:
    """All 12 vertex velocities, shape (12, 3)."""
    w_world = state.R @ state.w
    return state.v + cross_rows(w_world, frame.vertices @ state.R.T)


@dataclass(frozen=True, eq=False)
class MotorMixer:
    """X-configuration allocation between total wrench and 4 motor forces.

    Motor layout (body frame, thrust along +z, alternating prop handedness):

        0: (+ax, +ay, ccw)   1: (-ax, +ay, cw)
        2: (-ax, -ay, ccw)   3: (+ax, -ay, cw)

    Allocation clips each motor to [0, f_motor_max]. Saturation is
    torque-first: the collective is traded away before body torque is
    scaled down, which keeps tumble recovery effective.
    """

    arm_x: float = 0.07
    arm_y: float = 0.07
    yaw_coef: float = 0.012
    f_motor_max: float = 1.6

    def _deltas(self, torque: np.ndarray) -> np.ndarray:
        # per-motor offsets from the collective share (inverse allocation)
        u = float(torque[0]) / (4 * self.arm_y)
        v = float(torque[1]) / (4 * self.arm_x)
        z = float(torque[2]) / (4 * self.yaw_coef)
        return np.array([u - v + z, u + v - z, -u + v + z, -u - v - z])

    def allocate(self, thrust: float, torque: np.ndarray
                 ) -> tuple[np.ndarray, float, np.ndarray]:
        """Map (thrust, torque) to motor forces; returns achieved wrench too."""
        deltas = self._deltas(torque)
        lo = float(np.max(-deltas))
        hi = float(np.min(self.f_motor_max - deltas))
        if lo > hi:
            scale = self.f_motor_max / float(deltas.max() - deltas.min())
            deltas = deltas * scale
            lo = float(np.max(-deltas))
            hi = float(np.min(self.f_motor_max - deltas))
        c = min(max(thrust / 4.0, lo), hi)
        forces = np.clip(c + deltas, 0.0, self.f_motor_max)
        return forces, float(forces.sum()), self.wrench_of(forces)[1]

    def wrench_of(self, forces: np.ndarray) -> tuple[float, np.ndarray]:
        """Total thrust and body torque produced by 4 motor forces."""
        f0, f1, f2, f3 = forces
        ax, ay, k = self.arm_x, self.arm_y, self.yaw_coef
        tx = ay * (f0 + f1 - f2 - f3)
        ty = ax * (-f0 + f1 + f2 - f3)
        tz = k * (f0 - f1 + f2 - f3)
        return float(forces.sum()), np.array([tx, ty, tz])
