"""Instantaneous impulse model for vertex collisions.

Given the pre-collision twist and a set of active shell vertices, each
vertex contributes an impulse

    j_i = -(1 + e) (n . v_i) / (1/m + n . ((Iw^-1 (rho x n)) x rho)) * (n + mu * t)

where rho = R r_i is the world-frame vertex offset, n the contact normal
(beam-axis convention), t the unit direction *opposing* the tangential
vertex velocity (dynamic sliding friction), and Iw = R I R^T the inertia
expressed in world axes. Separating vertices (n . v_i >= 0) contribute
nothing.

The friction component is additionally capped at the impulse that stops
the tangential sliding of the vertex: the model assumes the node keeps
sliding through the impact, and an uncapped mu |j_n| can exceed the
slide-stopping impulse by a large factor (the tangential compliance of a
light shell is dominated by rotation), which would reverse the slide and
inject energy. With the cap, each per-vertex impulse is dissipative for
e <= 1.

The resulting twist jump is the normalized average over the k impulsive
vertices,

    dv = (1/k) sum j_i / m           (world)
    dw = (1/k) sum I^-1 (r_i x R^T j_i)   (body)

which keeps the predicted post-collision kinetic energy bounded by the
pre-collision one for e <= 1 (asserted on every call).

Restitution/friction coefficients are recovered from impact data by a
linear least-squares fit: with a = 1 + e and b = (1 + e) mu the predicted
vertex velocity change is linear in (a, b), so the fit is exact for
noiseless sliding (uncapped) impacts. Normal-only datasets leave mu
unidentifiable, which is reported instead of guessed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .contact import ContactVector
from .dynamics import IcosahedronFrame, InertialParams, MavState
from .so3 import cross3, quat_from_rot, rot_from_quat

_APPROACH_EPS = 1e-12
_SLIDE_EPS = 1e-9


@dataclass(frozen=True)
class RestitutionParams:
    restitution: float = 0.4
    friction: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if self.friction < 0.0:
            raise ValueError("friction must be non-negative")


@dataclass(frozen=True, eq=False)
class CollisionDelta:
    """Velocity/rate jump predicted for one collision event."""

    dv: np.ndarray          # world frame [m/s]
    dw: np.ndarray          # body frame [rad/s]
    impulses: np.ndarray    # (k, 3) world-frame impulses [N s]
    vertices: np.ndarray    # (k,) contributing vertex indices

    @property
    def active_count(self) -> int:
        return len(self.vertices)


def beam_normal(frame: IcosahedronFrame, i: int, R: np.ndarray) -> np.ndarray:
    """Estimated surface normal at vertex i: the beam axis, pointing from
    the surface back toward the vehicle center."""
    if not 0 <= i < 12:
        raise IndexError(f"vertex index {i} out of range [0, 12)")
    return -(R @ frame.axes[i])


def _impulse_at(v_i: np.ndarray, normal: np.ndarray, rho: np.ndarray,
                params: RestitutionParams, inertial: InertialParams,
                R: np.ndarray) -> np.ndarray:
    """Shared impulse core given the vertex velocity and world geometry."""
    approach = float(normal @ v_i)
    if approach >= -_APPROACH_EPS:
        return np.zeros(3)
    inertia_inv_w = R @ inertial.inertia_inv @ R.T
    cross_n = cross3(rho, normal)
    denom = 1.0 / inertial.mass + float(
        normal @ cross3(inertia_inv_w @ cross_n, rho))
    assert denom > 0.0, "effective contact mass must be positive for SPD inertia"
    j_n = -(1.0 + params.restitution) * approach / denom
    j = j_n * normal
    v_t = v_i - approach * normal
    speed_t = np.linalg.norm(v_t)
    if params.friction > 0.0 and speed_t > _SLIDE_EPS:
        t_hat = v_t / speed_t
        cross_t = cross3(rho, t_hat)
        k_tt = 1.0 / inertial.mass + float(
            t_hat @ cross3(inertia_inv_w @ cross_t, rho))
        # sliding assumption: friction may stop the slide but not reverse it
        j_t = min(params.friction * j_n, speed_t / k_tt)
        j = j - j_t * t_hat
    return j


def vertex_impulse(state_pre: MavState, frame: IcosahedronFrame, i: int,
                   normal: np.ndarray, params: RestitutionParams,
                   inertial: InertialParams) -> np.ndarray:
    """Impulse at vertex i for the given contact normal.

    Returns the zero vector when the vertex is separating.
    """
    if not 0 <= i < 12:
        raise IndexError(f"vertex index {i} out of range [0, 12)")
    R = state_pre.R
    rho = R @ frame.vertices[i]
    v_i = state_pre.v + cross3(R @ state_pre.w, rho)
    return _impulse_at(v_i, normal, rho, params, inertial, R)


def collision_delta(state_pre: MavState, frame: IcosahedronFrame,
                    contacts: ContactVector, params: RestitutionParams,
                    inertial: InertialParams) -> CollisionDelta:
    """Normalized twist jump over all active, approaching contacts.

    Normals are recomputed from the caller's attitude via the beam-axis
    convention, so an estimator predicts with its own attitude estimate.
    Raises if no contact flag is set; flagged but separating vertices are
    skipped (zero jump if all separate).
    """
    active = contacts.indices
    if active.size == 0:
        raise ValueError("collision_delta requires at least one active contact")
    R = state_pre.R
    impulses = []
    verts = []
    dv = np.zeros(3)
    dw = np.zeros(3)
    for i in active:
        n = beam_normal(frame, int(i), R)
        j = vertex_impulse(state_pre, frame, int(i), n, params, inertial)
        if j[0] == 0.0 and j[1] == 0.0 and j[2] == 0.0:
            continue
        impulses.append(j)
        verts.append(int(i))
        dv += j / inertial.mass
        dw += inertial.inertia_inv @ cross3(frame.vertices[i], R.T @ j)
    k = len(verts)
    if k == 0:
        return CollisionDelta(np.zeros(3), np.zeros(3),
                              np.zeros((0, 3)), np.zeros(0, dtype=int))
    dv /= k
    dw /= k
    if params.restitution <= 1.0:
        e_pre = state_pre.kinetic_energy(inertial)
        post = MavState(state_pre.p, R, state_pre.v + dv, state_pre.w + dw)
        e_post = post.kinetic_energy(inertial)
        assert e_post <= e_pre * (1.0 + 1e-9) + 1e-12, \
            f"collision increased kinetic energy: {e_pre} -> {e_post}"
    return CollisionDelta(dv, dw, np.array(impulses), np.array(verts))


@dataclass(frozen=True, eq=False)
class ImpactSample:
    """One recorded vertex impact: pre/post vertex velocity plus geometry."""

    v_pre: np.ndarray
    v_post: np.ndarray
    vertex: int
    rotation: np.ndarray


@dataclass(frozen=True)
class FitResult:
    params: RestitutionParams
    friction_identifiable: bool
    residual_rms: float


def _effective_mass_inv(rho: np.ndarray, inertial: InertialParams,
                        R: np.ndarray) -> np.ndarray:
    """3x3 map from impulse at offset rho to vertex velocity change."""
    inertia_inv_w = R @ inertial.inertia_inv @ R.T
    S = np.array([[0.0, -rho[2], rho[1]],
                  [rho[2], 0.0, -rho[0]],
                  [-rho[1], rho[0], 0.0]])
    return np.eye(3) / inertial.mass - S @ inertia_inv_w @ S


def predicted_post_velocity(sample: ImpactSample, frame: IcosahedronFrame,
                            params: RestitutionParams,
                            inertial: InertialParams) -> np.ndarray:
    """Model prediction of the post-impact vertex velocity for one sample."""
    R = sample.rotation
    rho = R @ frame.vertices[sample.vertex]
    n = beam_normal(frame, sample.vertex, R)
    j = _impulse_at(np.asarray(sample.v_pre, dtype=float), n, rho,
                    params, inertial, R)
    K = _effective_mass_inv(rho, inertial, R)
    return sample.v_pre + K @ j


def fit_restitution_friction(samples: list[ImpactSample],
                             frame: IcosahedronFrame,
                             inertial: InertialParams) -> FitResult:
    """Least-squares (e, mu) from pre/post vertex velocities.

    Requires at least two approaching impacts. If no sample carries
    tangential sliding, friction is unidentifiable and the prior 0.0 is
    reported with `friction_identifiable=False`.
    """
    rows_a, rows_b, rhs = [], [], []
    for s in samples:
        R = np.asarray(s.rotation, dtype=float)
        rho = R @ frame.vertices[s.vertex]
        n = beam_normal(frame, s.vertex, R)
        approach = float(n @ s.v_pre)
        if approach >= -_APPROACH_EPS:
            continue
        K = _effective_mass_inv(rho, inertial, R)
        q = -approach / float(n @ K @ n)
        v_t = s.v_pre - approach * n
        speed_t = np.linalg.norm(v_t)
        t_hat = -(v_t / speed_t) if speed_t > _SLIDE_EPS else np.zeros(3)
        rows_a.append(q * (K @ n))
        rows_b.append(q * (K @ t_hat))
        rhs.append(np.asarray(s.v_post, dtype=float) - s.v_pre)
    if len(rows_a) < 2:
        raise ValueError("need at least two approaching impact samples")
    A = np.concatenate(rows_a)
    B = np.concatenate(rows_b)
    y = np.concatenate(rhs)
    mu_ok = np.linalg.norm(B) > 1e-9 * max(np.linalg.norm(A), 1.0)
    if mu_ok:
        M = np.stack([A, B], axis=1)
        coef, _, _, _ = np.linalg.lstsq(M, y, rcond=None)
        a, b = float(coef[0]), float(coef[1])
    else:
        a = float(A @ y / (A @ A))
        b = 0.0
    e = min(max(a - 1.0, 0.0), 1.0)
    mu = max(b / a, 0.0) if (mu_ok and a > 1e-9) else 0.0
    fitted = RestitutionParams(e, mu)
    pred = A * (1.0 + e) + B * ((1.0 + e) * mu)
    residual = float(np.sqrt(np.mean((pred - y) ** 2)))
    return FitResult(fitted, bool(mu_ok), residual)


_CSV_HEADER = ["vx_pre", "vy_pre", "vz_pre", "vx_post", "vy_post", "vz_post",
               "vertex", "qw", "qx", "qy", "qz"]


def save_impact_csv(path: str | Path, samples: list[ImpactSample]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_HEADER)
        for s in samples:
            q = quat_from_rot(np.asarray(s.rotation, dtype=float))
            writer.writerow([repr(float(x)) for x in s.v_pre]
                            + [repr(float(x)) for x in s.v_post]
                            + [s.vertex] + [repr(float(x)) for x in q])


def load_impact_csv(path: str | Path) -> list[ImpactSample]:
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected impact CSV header: {header}")
        for row in reader:
            vals = [float(x) for x in row[:6]]
            vertex = int(row[6])
            q = np.array([float(x) for x in row[7:11]])
            samples.append(ImpactSample(np.array(vals[:3]), np.array(vals[3:6]),
                                        vertex, rot_from_quat(q)))
    return samples
