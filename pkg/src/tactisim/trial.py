"""Closed-loop trial execution and trajectory export.

Per control tick: sense contacts (optionally delayed) -> estimator predict
with the previous command -> pose update when a measurement is due ->
recovery supervisor -> reference (vector field or recovery hold) ->
cascaded controller -> motor allocation -> physics substeps with penalty
contact -> logging and end-of-trial checks.

Everything random in a trial (start position, clutter placement,
measurement noise) is drawn from one Generator seeded by the trial seed,
so a (config, seed) pair is bit-reproducible and trials are independent
units of work.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .contact import ContactSensor, ContactVector, contact_forces
from .control import (FlightMode, PositionReference, RecoverySupervisor,
                      TriggerKind, accel_to_attitude_thrust, attitude_control,
                      position_control, rate_control)
from .dynamics import IcosahedronFrame, MavState, vertices_world
from .estimator import CollisionInclusiveKF, CommandInput, EstimatorState
from .obstacles import Cylinder
from .scenario import ScenarioConfig
from .so3 import cross3, cross_rows, cross_rowwise, exp_so3, orthonormalize, \
    quat_from_rot
from .vector_field import (ObstacleRegistry, advance_reference, lyapunov_value,
                           nearest_point)

LOG_COLUMNS = (
    ["t"]
    + [f"true_{c}" for c in ("px", "py", "pz", "vx", "vy", "vz",
                             "qw", "qx", "qy", "qz", "wx", "wy", "wz")]
    + [f"est_{c}" for c in ("px", "py", "pz", "vx", "vy", "vz",
                            "wx", "wy", "wz")]
    + [f"ref_{c}" for c in ("px", "py", "pz", "vx", "vy", "vz", "yaw")]
    + ["mode", "contacts"]
)


@dataclass
class TrialResult:
    name: str
    variant: str
    seed: int
    success: bool = False
    crashed: bool = False
    invalid: bool = False
    invalid_reason: str = ""
    min_altitude: float = np.inf       # lowest vertex z seen [m]
    resume_time: float | None = None   # first completed recovery [s]
    escaped: bool = False
    escape_time: float | None = None
    end_time: float = 0.0
    end_speed: float = 0.0
    collision_events: list = field(default_factory=list)  # (t, vertex, xyz true)
    registry_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    registry_times: list = field(default_factory=list)
    rejected_measurements: int = 0
    recoveries_completed: int = 0
    final_mode: int = 0
    log: np.ndarray = field(default_factory=lambda: np.zeros((0, len(LOG_COLUMNS))))


def trial_seed(root_seed: int, index: int) -> int:
    """Stable per-trial seed derivation (documented: SeedSequence spawn)."""
    ss = np.random.SeedSequence([int(root_seed), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def accelerometer_trigger(specific_force_norm: float, threshold: float) -> bool:
    """True when the simulated accelerometer norm exceeds the threshold."""
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    return specific_force_norm > threshold


def _place_random_cylinders(cfg: ScenarioConfig, rng: np.random.Generator):
    """Per-trial clutter near the path; keeps clearance to the start point
    and between cylinders so takeoff stays feasible."""
    placed = []
    if cfg.random_cylinders <= 0 or cfg.path is None:
        return placed
    start_xy = cfg.start_center_m[:2]
    existing = [np.asarray(o.base_center)[:2] for o in cfg.obstacles
                if isinstance(o, Cylinder)]
    for _ in range(cfg.random_cylinders):
        for _attempt in range(20):
            tau = float(rng.uniform(0.0, 1.0))
            offset = float(rng.uniform(0.0, cfg.random_cylinder_offset_m))
            side = 1.0 if rng.uniform() < 0.5 else -1.0
            h = cfg.path.point(tau)
            hp = cfg.path.velocity(tau)
            lateral = np.array([-hp[1], hp[0]])
            ln = np.linalg.norm(lateral)
            if ln < 1e-9:
                continue
            xy = h[:2] + side * offset * lateral / ln
            if np.linalg.norm(xy - start_xy) < 1.0:
                continue
            if any(np.linalg.norm(xy - q) < 0.6 for q in existing):
                continue
            existing.append(xy)
            placed.append(Cylinder(np.array([xy[0], xy[1], 0.0]),
                                   cfg.random_cylinder_radius_m,
                                   cfg.random_cylinder_height_m))
            break
    return placed


def _physics_substeps(truth: MavState, frame: IcosahedronFrame, scene, mat,
                      thrust: float, torque_body: np.ndarray, params,
                      dt: float, n_sub: int) -> tuple[float, float, float]:
    """Advance the plant n_sub semi-implicit steps in place.

    Returns (lowest vertex z, deepest penetration, last specific-force norm).
    """
    p, R, v, w = truth.p, truth.R, truth.v, truth.w
    inertia, inertia_inv = params.inertia, params.inertia_inv
    m, g = params.mass, params.gravity
    verts = frame.vertices
    min_z = np.inf
    max_depth = 0.0
    accel_norm = 9.81
    for _ in range(n_sub):
        Rv = verts @ R.T
        pts = p + Rv
        vels = v + cross_rows(R @ w, Rv)
        cf, depths = contact_forces(pts, vels, scene, mat)
        dmax = float(depths.max())
        if dmax > max_depth:
            max_depth = dmax
        f_total = R[:, 2] * thrust + cf.sum(axis=0)
        tau_total = torque_body + R.T @ cross_rowwise(Rv, cf).sum(axis=0)
        a = f_total / m + g
        w_dot = inertia_inv @ (tau_total - cross3(w, inertia @ w))
        v += dt * a
        w += dt * w_dot
        p += dt * v
        R[:] = orthonormalize(R @ exp_so3(dt * w))
        z = float(pts[:, 2].min())
        if z < min_z:
            min_z = z
        accel_norm = float(np.sqrt(f_total @ f_total)) / m
    return min_z, max_depth, accel_norm


def _tilt_walls(cfg: ScenarioConfig, rng: np.random.Generator):
    """Tilt half-space obstacles by a random angle up to the configured
    maximum, about a random axis in the wall plane."""
    if cfg.wall_tilt_max_rad <= 0.0:
        return cfg.obstacles
    from .obstacles import HalfSpace
    tilted = []
    for shape in cfg.obstacles:
        if isinstance(shape, HalfSpace):
            angle = rng.uniform(0.0, cfg.wall_tilt_max_rad)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            n = shape.normal
            a = np.array([0.0, 0.0, 1.0]) if abs(n[2]) < 0.9 \
                else np.array([1.0, 0.0, 0.0])
            u = np.cross(n, a)
            u /= np.linalg.norm(u)
            v = np.cross(n, u)
            axis = np.cos(phase) * u + np.sin(phase) * v
            new_n = exp_so3(angle * axis) @ n
            tilted.append(HalfSpace(shape.point, new_n))
        else:
            tilted.append(shape)
    return tuple(tilted)


def run_trial(cfg: ScenarioConfig, seed: int) -> TrialResult:
    rng = np.random.default_rng(seed)
    frame = IcosahedronFrame(cfg.frame_radius_m)
    extra = tuple(_place_random_cylinders(cfg, rng))
    scene = cfg.scene_with_floor(extra, obstacles=_tilt_walls(cfg, rng))
    registry = ObstacleRegistry()
    result = TrialResult(cfg.name, cfg.variant, seed)

    hw = cfg.start_cube_halfwidth_m
    p0 = cfg.start_center_m + (rng.uniform(-hw, hw, 3) if hw > 0 else 0.0)
    truth = MavState(p=p0, v=cfg.start_velocity_mps)

    kf = CollisionInclusiveKF(
        EstimatorState.from_truth(truth), cfg.noise, frame, cfg.restitution,
        cfg.inertial, kappa_enabled=(cfg.variant == "proposed"))
    trigger = cfg.trigger_kind()
    supervisor = None
    if trigger is not TriggerKind.NONE:
        sup_cfg = cfg.supervisor if cfg.supervisor.trigger is trigger \
            else replace(cfg.supervisor, trigger=trigger)
        supervisor = RecoverySupervisor(sup_cfg)
    sensor = ContactSensor(cfg.sensor_latency_s, cfg.d_trigger_m)

    dt_c = 1.0 / cfg.control_hz
    dt_p = 1.0 / cfg.physics_hz
    n_sub = cfg.physics_hz // cfg.control_hz
    n_ticks = int(round(cfg.duration_s * cfg.control_hz))
    meas_period = 1.0 / cfg.measurement_hz
    next_meas = 0.0

    ref = PositionReference(p0.copy(), cfg.start_velocity_mps.copy(), 0.0)
    gravity = cfg.inertial.gravity
    cmd = CommandInput(np.zeros(3), np.zeros(3))
    R_des_prev = np.eye(3)
    accel_norm = float(np.linalg.norm(gravity))   # hover specific force
    prev_true_flags = np.zeros(12, dtype=bool)
    resume_tick: int | None = None
    escape_check_stride = max(cfg.control_hz // 20, 1)

    log = np.empty((n_ticks, len(LOG_COLUMNS)))
    n_logged = 0

    for k in range(n_ticks):
        t = k * dt_c
        contacts = sensor.sense(t, truth, frame, scene)

        # collision event bookkeeping from the (sensed) flags
        rising = contacts.flags & ~prev_true_flags
        prev_true_flags = contacts.flags.copy()
        if rising.any():
            pts_now = vertices_world(truth, frame)
            for i in np.nonzero(rising)[0]:
                result.collision_events.append((t, int(i), pts_now[i].copy()))

        if k > 0:
            kf.predict(cmd, contacts, dt_c)
        if t + 1e-9 >= next_meas:
            p_meas = truth.p + rng.normal(0.0, cfg.noise.meas_pos_sigma, 3)
            R_meas = truth.R @ exp_so3(
                rng.normal(0.0, cfg.noise.meas_att_sigma, 3))
            kf.update_pose(p_meas, R_meas)
            while next_meas <= t + 1e-9:
                next_meas += meas_period
        est = kf.state

        mode = FlightMode.NOMINAL
        if supervisor is not None:
            released = supervisor.step(t, contacts, est.p, est.v, est.R,
                                       frame, accel_norm, ref.yaw_des)
            mode = supervisor.mode
            if released:
                for ev in released:
                    registry.add(ev.position, t)
                result.registry_points = registry.points
                result.registry_times = registry.times
            if mode is FlightMode.RESUME:
                result.recoveries_completed += 1
                if resume_tick is None:
                    resume_tick = k
                    result.resume_time = t
                if cfg.end_on_resume:
                    # single-recovery experiment: hold the retreat point
                    ref = PositionReference(supervisor.p_rec.copy(),
                                            np.zeros(3), ref.yaw_des)
                else:
                    ref = PositionReference(est.p.copy(), np.zeros(3),
                                            ref.yaw_des)

        if mode is FlightMode.RECOVERING:
            ref_active = supervisor.reference()
        else:
            if cfg.path is not None and not (cfg.end_on_resume
                                             and resume_tick is not None):
                ref = advance_reference(ref, cfg.path, cfg.field_cfg,
                                        registry, dt_c)
            ref_active = ref

        f_sp = position_control(est.p, est.v, ref_active, cfg.gains, gravity)
        R_des, thrust = accel_to_attitude_thrust(f_sp, ref_active.yaw_des,
                                                 cfg.inertial, R_des_prev)
        R_des_prev = R_des
        w_cmd = attitude_control(est.R, R_des, cfg.gains)
        # the rate loop runs onboard off the gyro (true body rate); the
        # filtered rate estimate serves the estimator pipeline itself
        tau_cmd = rate_control(truth.w, w_cmd, cfg.gains, cfg.inertial)
        _, thrust_act, torque_act = cfg.mixer.allocate(thrust, tau_cmd)
        scale = thrust_act / thrust if thrust > 1e-9 else 0.0
        cmd = CommandInput(f_sp * scale + gravity, w_cmd)

        # physics substeps with the command held
        min_z, max_depth, accel_norm = _physics_substeps(
            truth, frame, scene, cfg.material, thrust_act, torque_act,
            cfg.inertial, dt_p, n_sub)
        if max_depth > frame.radius:
            result.invalid = True
            result.invalid_reason = "tunneling guard tripped"
        result.min_altitude = min(result.min_altitude, min_z)

        q = quat_from_rot(truth.R)
        row = log[k]
        row[0] = t
        row[1:4] = truth.p
        row[4:7] = truth.v
        row[7:11] = q
        row[11:14] = truth.w
        row[14:17] = est.p
        row[17:20] = est.v
        row[20:23] = est.w
        row[23:26] = ref_active.p_des
        row[26:29] = ref_active.v_des
        row[29] = ref_active.yaw_des
        row[30] = float(mode.value)
        row[31] = float(sum(1 << int(i) for i in np.nonzero(contacts.flags)[0]))
        n_logged = k + 1

        if result.invalid:
            break
        if not truth.is_finite():
            result.invalid = True
            result.invalid_reason = "non-finite state"
            break
        if min_z <= cfg.floor_z_m:
            result.crashed = True
            if cfg.end_on_ground:
                break
        if cfg.end_on_resume and resume_tick is not None \
                and (k - resume_tick) * dt_c >= cfg.resume_hold_s:
            break
        if cfg.escape_tau is not None and k % escape_check_stride == 0 \
                and cfg.path is not None:
            tau_now = nearest_point(cfg.path, truth.p, cfg.field_cfg)
            if tau_now >= cfg.escape_tau:
                v_now = lyapunov_value(truth.p, cfg.path, cfg.field_cfg)
                if v_now < cfg.escape_v_max_m2:
                    result.escaped = True
                    result.escape_time = t
                    break

    result.log = log[:n_logged]
    result.end_time = (n_logged - 1) * dt_c if n_logged else 0.0
    result.end_speed = float(np.linalg.norm(truth.v))
    result.rejected_measurements = kf.rejected_measurements
    result.final_mode = 0 if supervisor is None else supervisor.mode.value
    result.registry_points = registry.points
    result.registry_times = registry.times
    result.success = success_criterion(result, cfg)
    return result


def success_criterion(result: TrialResult, cfg: ScenarioConfig,
                      min_altitude: float | None = None) -> bool:
    """Per-scenario success: the vehicle never drops a vertex to the floor
    threshold during recovery and completes its task for the scenario kind."""
    floor = cfg.floor_z_m if min_altitude is None else min_altitude
    if result.invalid:
        return False
    grounded = result.crashed or result.min_altitude <= floor
    if cfg.kind == "trap":
        return result.escaped
    if grounded:
        return False
    if cfg.kind == "sweep":
        if cfg.variant == "agnostic":
            return result.end_speed < 1.0
        return result.resume_time is not None \
            and result.final_mode == FlightMode.NOMINAL.value
    if cfg.kind == "ellipse":
        return result.final_mode == FlightMode.NOMINAL.value
    return True


def recollisions_after_registration(result: TrialResult,
                                    radius: float = 0.05) -> list:
    """Contact events within `radius` of an obstacle point registered
    strictly earlier; empty when path adaptation avoids known obstacles."""
    hits = []
    pts = result.registry_points
    times = result.registry_times
    for (t, vertex, pos) in result.collision_events:
        for q, tq in zip(pts, times):
            if t > tq and np.linalg.norm(np.asarray(pos) - q) < radius:
                hits.append((t, vertex, pos, q))
                break
    return hits


def export_trajectory(result: TrialResult, path: str | Path,
                      fmt: str = "csv") -> None:
    """Write the per-tick log; CSV for spreadsheets, JSON for exact round trips."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w") as fh:
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for row in result.log:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    elif fmt == "json":
        payload = {
            "meta": {"name": result.name, "variant": result.variant,
                     "seed": result.seed, "success": result.success},
            "columns": list(LOG_COLUMNS),
            "rows": [[float(x) for x in row] for row in result.log],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def load_trajectory_json(path: str | Path) -> tuple[dict, np.ndarray]:
    with open(path) as fh:
        payload = json.load(fh)
    rows = np.array(payload["rows"], dtype=float)
    if rows.size == 0:
        rows = rows.reshape(0, len(payload["columns"]))
    return payload["meta"], rows
