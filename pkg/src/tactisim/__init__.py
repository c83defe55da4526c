"""Collision-resilient MAV flight simulation.

Impulse-aware state estimation, reflexive collision recovery, and
vector-field path adaptation, exercised by seeded Monte Carlo experiments.
"""

from .contact import ContactMaterial, ContactSensor, ContactVector, \
    detect_contacts, node_contact_force, total_contact_wrench
from .control import ControllerGains, FlightMode, PositionReference, \
    RecoverySupervisor, SupervisorConfig, TriggerKind, recovery_setpoint
from .dynamics import ActuatorWrench, IcosahedronFrame, InertialParams, \
    MavState, MotorMixer, derivative, step_rk4, step_semi_implicit, \
    vertex_position, vertex_velocity
from .estimator import CollisionInclusiveKF, CommandInput, EstimatorState, \
    NoiseConfig, kappa_from_contacts, predict, update_pose
from .impulse import CollisionDelta, ImpactSample, RestitutionParams, \
    beam_normal, collision_delta, fit_restitution_friction, vertex_impulse
from .obstacles import Box, Cylinder, HalfSpace, Scene, UShape, \
    query_penetration
from .scenario import ScenarioConfig, cluttered_ellipse_scenario, \
    concave_trap_scenario, hover_scenario, sweep_scenario
from .sweep import BatchSummary, SweepSummary, monte_carlo, run_batch
from .trial import TrialResult, accelerometer_trigger, export_trajectory, \
    run_trial, success_criterion, trial_seed
from .vector_field import CubicPath, EllipsePath, FieldConfig, LinePath, \
    ObstacleRegistry, advance_reference, collision_contribution, field, \
    lyapunov_value, nearest_point, newton_step, register_obstacle, \
    tangent_basis

__version__ = "0.1.0"
