"""Compliant (penalty) contact forces and binary contact sensing.

Per penetrating vertex the normal force is a spring-damper along the
outward surface normal,

    f_n = (k_p * d - k_d * (v . n)) n,   clamped so f_n . n >= 0,

and the tangential force is sliding Coulomb friction opposing the
tangential vertex velocity,

    f_t = -mu * |f_n| * t,   t = tangential(v) / |tangential(v)|.

The clamp keeps the penalty from turning adhesive when the damper exceeds
the spring during separation. No static friction: below 1e-9 m/s
tangential speed the friction force is zero.

Sensing is separate from forces: the contact vector reports which vertices
penetrate past a trigger depth, and the surface-normal estimate attached to
each active flag follows the *beam axis* convention (the rod direction the
sensor sits on), not the true geometric normal, mirroring what the physical
sensor can know.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .dynamics import IcosahedronFrame, InertialParams, MavState, \
    vertex_velocities_world, vertices_world
from .obstacles import Scene
from .so3 import cross_rowwise

_SLIDE_EPS = 1e-9


@dataclass(frozen=True)
class ContactMaterial:
    """Penalty contact parameters (non-paper defaults, tuned for 1 kHz)."""

    stiffness: float = 4000.0   # k_p [N/m]
    damping: float = 15.0       # k_d [N s/m]
    friction: float = 0.4       # mu [-]

    def __post_init__(self):
        if self.stiffness <= 0.0 or self.damping < 0.0 or self.friction < 0.0:
            raise ValueError("invalid contact material")


def node_contact_force(depth: float, normal: np.ndarray, v_node: np.ndarray,
                       mat: ContactMaterial) -> np.ndarray:
    """Penalty force on one contact node; zero when depth <= 0."""
    if depth <= 0.0:
        return np.zeros(3)
    v_n = float(v_node @ normal)
    f_n_mag = mat.stiffness * depth - mat.damping * v_n
    if f_n_mag <= 0.0:
        return np.zeros(3)
    force = f_n_mag * normal
    v_t = v_node - v_n * normal
    speed_t = np.linalg.norm(v_t)
    if mat.friction > 0.0 and speed_t > _SLIDE_EPS:
        force = force - (mat.friction * f_n_mag / speed_t) * v_t
    return force


def contact_forces(points: np.ndarray, velocities: np.ndarray, scene: Scene,
                   mat: ContactMaterial) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized per-vertex penalty forces. Returns (forces (n,3), depths (n,))."""
    depths, normals = scene.penetrations(points)
    forces = np.zeros_like(points)
    active = depths > 0.0
    if np.any(active):
        idx = np.nonzero(active)[0]
        n = normals[idx]
        v = velocities[idx]
        v_n = np.einsum("ij,ij->i", v, n)
        f_mag = mat.stiffness * depths[idx] - mat.damping * v_n
        f_mag = np.clip(f_mag, 0.0, None)
        f = f_mag[:, None] * n
        if mat.friction > 0.0:
            v_t = v - v_n[:, None] * n
            speed_t = np.linalg.norm(v_t, axis=1)
            slide = speed_t > _SLIDE_EPS
            if np.any(slide):
                scale = mat.friction * f_mag[slide] / speed_t[slide]
                f[slide] -= scale[:, None] * v_t[slide]
        forces[idx] = f
    return forces, depths


def total_contact_wrench(state: MavState, frame: IcosahedronFrame,
                         scene: Scene, mat: ContactMaterial
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Summed contact force (world) and torque (body) over all vertices."""
    pts = vertices_world(state, frame)
    vels = vertex_velocities_world(state, frame)
    forces, _ = contact_forces(pts, vels, scene, mat)
    f_total = forces.sum(axis=0)
    arms = pts - state.p
    tau_world = cross_rowwise(arms, forces).sum(axis=0)
    return f_total, state.R.T @ tau_world


class ContactVector:
    """12 binary contact flags plus per-active-vertex normal estimates."""

    __slots__ = ("flags", "normals")

    def __init__(self, flags: np.ndarray | None = None,
                 normals: np.ndarray | None = None):
        self.flags = np.zeros(12, dtype=bool) if flags is None \
            else np.asarray(flags, dtype=bool).copy()
        self.normals = np.zeros((12, 3)) if normals is None \
            else np.asarray(normals, dtype=float).copy()

    @property
    def any(self) -> bool:
        return bool(self.flags.any())

    @property
    def indices(self) -> np.ndarray:
        return np.nonzero(self.flags)[0]

    def __eq__(self, other):
        return isinstance(other, ContactVector) and \
            np.array_equal(self.flags, other.flags)

    def __repr__(self):
        return f"ContactVector({''.join('1' if f else '0' for f in self.flags)})"


def detect_contacts(state: MavState, frame: IcosahedronFrame, scene: Scene,
                    d_trigger: float = 1e-4) -> ContactVector:
    """Geometric (zero-latency) contact detection with beam-axis normals."""
    pts = vertices_world(state, frame)
    depths, _ = scene.penetrations(pts)
    flags = depths >= d_trigger
    normals = np.zeros((12, 3))
    if flags.any():
        # beam convention: from the surface back toward the vehicle center
        normals[flags] = -(frame.axes[flags] @ state.R.T)
    return ContactVector(flags, normals)


class ContactSensor:
    """Binary contact sensing with an optional fixed delivery latency.

    `sense(t, ...)` records the instantaneous geometric detection and
    returns the newest record no younger than `latency` seconds. With zero
    latency it is exactly `detect_contacts`.
    """

    def __init__(self, latency: float = 0.0, d_trigger: float = 1e-4):
        if latency < 0.0:
            raise ValueError("latency must be non-negative")
        self.latency = latency
        self.d_trigger = d_trigger
        self._history: deque[tuple[float, ContactVector]] = deque()

    def sense(self, t: float, state: MavState, frame: IcosahedronFrame,
              scene: Scene) -> ContactVector:
        current = detect_contacts(state, frame, scene, self.d_trigger)
        if self.latency == 0.0:
            return current
        self._history.append((t, current))
        cutoff = t - self.latency + 1e-12
        # drop records superseded by a newer one that is also old enough
        while len(self._history) >= 2 and self._history[1][0] <= cutoff:
            self._history.popleft()
        if self._history[0][0] <= cutoff:
            return self._history[0][1]
        return ContactVector()
