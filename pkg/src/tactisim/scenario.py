"""Scenario configuration: world, rates, models, variant and trial policy.

Configs serialize to a flat-ish YAML document with unit-suffixed keys (see
README for the schema). Builders below construct the three experiment
families: the head-on velocity sweep, the cluttered ellipse, and the
concave trap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .contact import ContactMaterial
from .control import ControllerGains, SupervisorConfig, TriggerKind
from .dynamics import InertialParams, MotorMixer
from .estimator import NoiseConfig
from .impulse import RestitutionParams
from .obstacles import Scene, Shape, HalfSpace, UShape, Cylinder, shape_from_dict
from .vector_field import FieldConfig, ParametricPath, path_from_dict

VARIANTS = ("proposed", "accelerometer", "agnostic")


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    name: str = "scenario"
    kind: str = "custom"            # hover | sweep | ellipse | trap | custom
    variant: str = "proposed"
    duration_s: float = 10.0
    physics_hz: int = 1000
    control_hz: int = 500
    measurement_hz: int = 200
    sensor_latency_s: float = 0.0

    obstacles: tuple[Shape, ...] = ()
    floor_z_m: float = 0.0
    end_on_ground: bool = True

    path: ParametricPath | None = None
    field_cfg: FieldConfig = field(default_factory=FieldConfig)

    start_center_m: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    start_cube_halfwidth_m: float = 0.25
    start_velocity_mps: np.ndarray = field(default_factory=lambda: np.zeros(3))

    inertial: InertialParams = field(default_factory=InertialParams)
    frame_radius_m: float = 0.15
    material: ContactMaterial = field(default_factory=ContactMaterial)
    restitution: RestitutionParams = field(default_factory=RestitutionParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    mixer: MotorMixer = field(default_factory=MotorMixer)
    supervisor: SupervisorConfig = field(default_factory=SupervisorConfig)
    d_trigger_m: float = 1e-4

    # trial-end policy
    end_on_resume: bool = False     # sweep: stop after the recovery settles
    resume_hold_s: float = 1.0
    escape_tau: float | None = None     # trap: forward-progress threshold
    escape_v_max_m2: float = 0.1        # trap: reconvergence threshold on V

    # per-trial random clutter (drawn from the trial seed)
    random_cylinders: int = 0
    random_cylinder_offset_m: float = 1.0
    random_cylinder_radius_m: float = 0.2
    random_cylinder_height_m: float = 3.0

    # per-trial random tilt of wall obstacles; a perfectly square hit on an
    # axis-aligned wall is a degenerate two-vertex contact that no real
    # approach reproduces
    wall_tilt_max_rad: float = 0.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not (self.physics_hz >= self.control_hz >= self.measurement_hz):
            raise ValueError("rates must satisfy physics >= control >= measurement")
        if self.physics_hz % self.control_hz != 0:
            raise ValueError("physics rate must be a multiple of the control rate")
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "start_center_m",
                           np.asarray(self.start_center_m, dtype=float))
        object.__setattr__(self, "start_velocity_mps",
                           np.asarray(self.start_velocity_mps, dtype=float))

    def scene_with_floor(self, extra: tuple[Shape, ...] = (),
                         obstacles: tuple[Shape, ...] | None = None) -> Scene:
        floor = HalfSpace(np.array([0.0, 0.0, self.floor_z_m]),
                          np.array([0.0, 0.0, 1.0]))
        base = self.obstacles if obstacles is None else tuple(obstacles)
        return Scene((floor,) + base + tuple(extra))

    def trigger_kind(self) -> TriggerKind:
        return {"proposed": TriggerKind.TACTILE,
                "accelerometer": TriggerKind.ACCELEROMETER,
                "agnostic": TriggerKind.NONE}[self.variant]

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "kind": self.kind,
            "variant": self.variant,
            "duration_s": self.duration_s,
            "rates_hz": {"physics": self.physics_hz, "control": self.control_hz,
                         "measurement": self.measurement_hz},
            "sensor_latency_s": self.sensor_latency_s,
            "floor_z_m": self.floor_z_m,
            "end_on_ground": self.end_on_ground,
            "obstacles": [s.to_dict() for s in self.obstacles],
            "path": None if self.path is None else self.path.to_dict(),
            "field": {"kappa_p": self.field_cfg.kappa_p,
                      "kappa_v": self.field_cfg.kappa_v,
                      "kappa_c": self.field_cfg.kappa_c,
                      "v_field_mps": self.field_cfg.v_field,
                      "n_samples": self.field_cfg.n_samples,
                      "newton_iters": self.field_cfg.newton_iters,
                      "eps_reg_m": self.field_cfg.eps_reg},
            "start": {"center_m": self.start_center_m.tolist(),
                      "cube_halfwidth_m": self.start_cube_halfwidth_m,
                      "velocity_mps": self.start_velocity_mps.tolist()},
            "vehicle": {"mass_kg": self.inertial.mass,
                        "inertia_kgm2": self.inertial.inertia.tolist(),
                        "gravity_mps2": self.inertial.gravity.tolist(),
                        "shell_radius_m": self.frame_radius_m,
                        "mixer": {"arm_x_m": self.mixer.arm_x,
                                  "arm_y_m": self.mixer.arm_y,
                                  "yaw_coef_m": self.mixer.yaw_coef,
                                  "f_motor_max_n": self.mixer.f_motor_max}},
            "contact": {"stiffness_npm": self.material.stiffness,
                        "damping_nspm": self.material.damping,
                        "friction": self.material.friction,
                        "trigger_depth_m": self.d_trigger_m},
            "impulse": {"restitution": self.restitution.restitution,
                        "friction": self.restitution.friction},
            "estimator": {"q_pos": self.noise.q_pos, "q_vel": self.noise.q_vel,
                          "q_att": self.noise.q_att, "q_rate": self.noise.q_rate,
                          "meas_pos_sigma_m": self.noise.meas_pos_sigma,
                          "meas_att_sigma_rad": self.noise.meas_att_sigma,
                          "tau_omega_s": self.noise.tau_omega,
                          "chi2_gate": self.noise.chi2_gate,
                          "max_consecutive_rejections":
                              self.noise.max_consecutive_rejections,
                          "contact_inflation": self.noise.contact_inflation},
            "controller": {"kp_pos": self.gains.kp_pos, "kd_pos": self.gains.kd_pos,
                           "k_att": self.gains.k_att, "k_rate": self.gains.k_rate,
                           "accel_max_mps2": self.gains.accel_max,
                           "omega_max_radps": self.gains.omega_max},
            "recovery": {"trigger": self.supervisor.trigger.value,
                         "pos_tolerance_m": self.supervisor.pos_tolerance,
                         "speed_tolerance_mps": self.supervisor.speed_tolerance,
                         "hold_time_s": self.supervisor.hold_time,
                         "deadline_s": self.supervisor.deadline,
                         "min_altitude_setpoint_m":
                             self.supervisor.min_altitude_setpoint,
                         "accel_threshold_mps2": self.supervisor.accel_threshold},
            "trial_end": {"end_on_resume": self.end_on_resume,
                          "resume_hold_s": self.resume_hold_s,
                          "escape_tau": self.escape_tau,
                          "escape_v_max_m2": self.escape_v_max_m2},
            "clutter": {"random_cylinders": self.random_cylinders,
                        "offset_m": self.random_cylinder_offset_m,
                        "radius_m": self.random_cylinder_radius_m,
                        "height_m": self.random_cylinder_height_m},
            "wall_tilt_max_rad": self.wall_tilt_max_rad,
        }
        return d

    @staticmethod
    def from_dict(d: dict) -> "ScenarioConfig":
        rates = d.get("rates_hz", {})
        fld = d.get("field", {})
        start = d.get("start", {})
        veh = d.get("vehicle", {})
        mix = veh.get("mixer", {})
        con = d.get("contact", {})
        imp = d.get("impulse", {})
        est = d.get("estimator", {})
        ctl = d.get("controller", {})
        rec = d.get("recovery", {})
        end = d.get("trial_end", {})
        clu = d.get("clutter", {})
        return ScenarioConfig(
            name=d.get("name", "scenario"),
            kind=d.get("kind", "custom"),
            variant=d.get("variant", "proposed"),
            duration_s=d.get("duration_s", 10.0),
            physics_hz=rates.get("physics", 1000),
            control_hz=rates.get("control", 500),
            measurement_hz=rates.get("measurement", 200),
            sensor_latency_s=d.get("sensor_latency_s", 0.0),
            obstacles=tuple(shape_from_dict(s) for s in d.get("obstacles", [])),
            floor_z_m=d.get("floor_z_m", 0.0),
            end_on_ground=d.get("end_on_ground", True),
            path=None if d.get("path") is None else path_from_dict(d["path"]),
            field_cfg=FieldConfig(
                kappa_p=fld.get("kappa_p", 10.0),
                kappa_v=fld.get("kappa_v", 0.1),
                kappa_c=fld.get("kappa_c", 2.5),
                v_field=fld.get("v_field_mps", 1.0),
                n_samples=fld.get("n_samples", 10),
                newton_iters=fld.get("newton_iters", 3),
                eps_reg=fld.get("eps_reg_m", 1e-3)),
            start_center_m=np.array(start.get("center_m", [0.0, 0.0, 1.0])),
            start_cube_halfwidth_m=start.get("cube_halfwidth_m", 0.25),
            start_velocity_mps=np.array(start.get("velocity_mps", [0.0, 0.0, 0.0])),
            inertial=InertialParams(
                mass=veh.get("mass_kg", 0.25),
                inertia=np.array(veh.get("inertia_kgm2",
                                         np.diag([8e-4, 8e-4, 1.2e-3]).tolist())),
                gravity=np.array(veh.get("gravity_mps2", [0.0, 0.0, -9.81]))),
            frame_radius_m=veh.get("shell_radius_m", 0.15),
            material=ContactMaterial(
                stiffness=con.get("stiffness_npm", 4000.0),
                damping=con.get("damping_nspm", 15.0),
                friction=con.get("friction", 0.4)),
            restitution=RestitutionParams(
                restitution=imp.get("restitution", 0.4),
                friction=imp.get("friction", 0.4)),
            noise=NoiseConfig(
                q_pos=est.get("q_pos", 1e-8), q_vel=est.get("q_vel", 0.02),
                q_att=est.get("q_att", 1e-6), q_rate=est.get("q_rate", 0.5),
                meas_pos_sigma=est.get("meas_pos_sigma_m", 1e-3),
                meas_att_sigma=est.get("meas_att_sigma_rad",
                                       0.2 * np.pi / 180.0),
                tau_omega=est.get("tau_omega_s", 0.05),
                chi2_gate=est.get("chi2_gate", 250.0),
                max_consecutive_rejections=est.get(
                    "max_consecutive_rejections", 10),
                contact_inflation=est.get("contact_inflation", 10.0)),
            gains=ControllerGains(
                kp_pos=ctl.get("kp_pos", 9.0), kd_pos=ctl.get("kd_pos", 6.0),
                k_att=ctl.get("k_att", 12.0), k_rate=ctl.get("k_rate", 40.0),
                accel_max=ctl.get("accel_max_mps2", 24.0),
                omega_max=ctl.get("omega_max_radps", 25.0)),
            mixer=MotorMixer(
                arm_x=mix.get("arm_x_m", 0.07), arm_y=mix.get("arm_y_m", 0.07),
                yaw_coef=mix.get("yaw_coef_m", 0.012),
                f_motor_max=mix.get("f_motor_max_n", 1.6)),
            supervisor=SupervisorConfig(
                trigger=TriggerKind(rec.get("trigger", "tactile")),
                pos_tolerance=rec.get("pos_tolerance_m", 0.15),
                speed_tolerance=rec.get("speed_tolerance_mps", 0.3),
                hold_time=rec.get("hold_time_s", 0.5),
                deadline=rec.get("deadline_s", 5.0),
                min_altitude_setpoint=rec.get("min_altitude_setpoint_m", 0.4),
                accel_threshold=rec.get("accel_threshold_mps2", 3.0 * 9.81)),
            d_trigger_m=con.get("trigger_depth_m", 1e-4),
            end_on_resume=end.get("end_on_resume", False),
            resume_hold_s=end.get("resume_hold_s", 1.0),
            escape_tau=end.get("escape_tau"),
            escape_v_max_m2=end.get("escape_v_max_m2", 0.1),
            random_cylinders=clu.get("random_cylinders", 0),
            random_cylinder_offset_m=clu.get("offset_m", 1.0),
            random_cylinder_radius_m=clu.get("radius_m", 0.2),
            random_cylinder_height_m=clu.get("height_m", 3.0),
            wall_tilt_max_rad=d.get("wall_tilt_max_rad", 0.0),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @staticmethod
    def load(path: str | Path) -> "ScenarioConfig":
        with open(path) as fh:
            return ScenarioConfig.from_dict(yaml.safe_load(fh))


def hover_scenario(duration_s: float = 3.0) -> ScenarioConfig:
    """Obstacle-free hover hold; the simplest smoke scenario."""
    return ScenarioConfig(name="hover", kind="hover", duration_s=duration_s,
                          start_cube_halfwidth_m=0.0)


SWEEP_WALL_DISTANCE = 4.0
SWEEP_ALTITUDE = 1.5


def sweep_scenario(velocity: float, variant: str) -> ScenarioConfig:
    """Head-on wall approach at a target speed; trial ends once recovered.

    The vehicle starts already at speed (randomized within the 50 cm start
    cube) on a straight reference driving through a wall 4 m downrange.
    """
    from .vector_field import LinePath
    start = np.array([0.0, 0.0, SWEEP_ALTITUDE])
    wall_x = SWEEP_WALL_DISTANCE
    wall = HalfSpace(np.array([wall_x, 0.0, 0.0]), np.array([-1.0, 0.0, 0.0]))
    # the reference line ends at the wall plane: the vehicle carries its
    # commanded speed into the face, but a contact-agnostic controller ends
    # up leaning with bounded force instead of ramming at full authority
    path = LinePath(start, start + np.array([wall_x, 0.0, 0.0]))
    approach_time = SWEEP_WALL_DISTANCE / velocity
    return ScenarioConfig(
        name=f"sweep-{variant}-{velocity:g}",
        kind="sweep",
        variant=variant,
        duration_s=approach_time + 8.0,
        obstacles=(wall,),
        path=path,
        field_cfg=FieldConfig(v_field=velocity),
        start_center_m=start,
        start_velocity_mps=np.array([velocity, 0.0, 0.0]),
        end_on_resume=True,
        wall_tilt_max_rad=np.deg2rad(6.0),
    )


def cluttered_ellipse_scenario(variant: str = "proposed") -> ScenarioConfig:
    """4 m x 2.5 m ellipse at 4 m/s with cylinders on and near the path."""
    from .vector_field import EllipsePath
    path = EllipsePath(np.array([0.0, 0.0, 1.2]), 4.0, 2.5)
    fixed = tuple(
        Cylinder(np.array([path.point(tau)[0], path.point(tau)[1], 0.0]),
                 radius=0.2, height=3.0)
        for tau in (0.18, 0.5, 0.82))
    return ScenarioConfig(
        name="cluttered-ellipse",
        kind="ellipse",
        variant=variant,
        duration_s=40.0,
        obstacles=fixed,
        path=path,
        field_cfg=FieldConfig(v_field=4.0),
        start_center_m=np.array([4.0, 0.0, 1.0]),
        random_cylinders=5,
    )


def concave_trap_scenario(variant: str = "proposed") -> ScenarioConfig:
    """Straight path blocked by a U-shaped wall; escape needs accumulated
    collision points (and the vehicle's vertical mobility)."""
    from .vector_field import LinePath
    start = np.array([-1.0, 0.0, 1.2])
    path = LinePath(start, np.array([13.0, 0.0, 1.2]))
    trap = UShape(np.array([6.0, 0.0, 0.0]), opening="-x",
                  opening_width=1.5, depth=2.0, height=2.2, thickness=0.2)
    return ScenarioConfig(
        name="concave-trap",
        kind="trap",
        variant=variant,
        duration_s=60.0,
        obstacles=(trap,),
        path=path,
        field_cfg=FieldConfig(v_field=2.0),
        start_center_m=start,
        end_on_ground=False,
        escape_tau=float((10.0 - start[0]) / (13.0 - start[0])),
    )
