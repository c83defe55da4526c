"""Command-line entry points.

    tactisim trial        one scenario + seed -> outcome, optional export
    tactisim sweep        velocity x variant Monte Carlo table
    tactisim scenario-a   100-trial cluttered-ellipse batch
    tactisim scenario-b   100-trial concave-trap batch
    tactisim field-grid   sample the vector field to CSV
    tactisim nearest-check  nearest-point vs dense brute force report
    tactisim fit          restitution/friction fit from an impact CSV
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dynamics import IcosahedronFrame, InertialParams
from .impulse import fit_restitution_friction, load_impact_csv
from .scenario import (ScenarioConfig, cluttered_ellipse_scenario,
                       concave_trap_scenario, hover_scenario, sweep_scenario)
from .sweep import DEFAULT_VARIANTS, DEFAULT_VELOCITIES, monte_carlo, run_batch
from .trial import export_trajectory, run_trial, trial_seed
from .vector_field import (EllipsePath, FieldConfig, ObstacleRegistry,
                           nearest_point, sample_field_grid)


def _add_common(p):
    p.add_argument("--seed", type=int, default=2024, help="root seed")
    p.add_argument("--workers", type=int, default=1)


def cmd_trial(args) -> int:
    if args.config:
        cfg = ScenarioConfig.load(args.config)
    elif args.scenario == "hover":
        cfg = hover_scenario()
    elif args.scenario == "ellipse":
        cfg = cluttered_ellipse_scenario(args.variant)
    elif args.scenario == "trap":
        cfg = concave_trap_scenario(args.variant)
    else:
        cfg = sweep_scenario(args.velocity, args.variant)
    res = run_trial(cfg, trial_seed(args.seed, args.index))
    print(f"scenario={cfg.name} variant={cfg.variant} seed_index={args.index}")
    print(f"success={res.success} crashed={res.crashed} invalid={res.invalid}"
          f" min_altitude={res.min_altitude:.3f} m collisions="
          f"{len(res.collision_events)} registered={len(res.registry_points)}")
    if res.resume_time is not None:
        print(f"first recovery completed at t={res.resume_time:.3f} s")
    if res.escaped:
        print(f"escaped at t={res.escape_time:.3f} s")
    if args.export:
        fmt = "json" if args.export.endswith(".json") else "csv"
        export_trajectory(res, args.export, fmt)
        print(f"trajectory written to {args.export}")
    return 0 if (res.success and not res.invalid) else 1


def cmd_sweep(args) -> int:
    velocities = DEFAULT_VELOCITIES if not args.velocities else tuple(
        float(v) for v in args.velocities.split(","))
    variants = DEFAULT_VARIANTS if not args.variants else tuple(
        args.variants.split(","))
    summary = monte_carlo(velocities, variants, trials=args.trials,
                          root_seed=args.seed, workers=args.workers)
    print(summary.to_text())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(summary.to_csv())
        print(f"summary written to {args.out}")
    ok = all(summary.cell("proposed", v).passed for v in velocities) \
        if "proposed" in variants else True
    return 0 if ok else 1


def _run_scenario_batch(build, args) -> int:
    cfg = build("proposed")
    summary = run_batch(cfg, trials=args.trials, root_seed=args.seed,
                        workers=args.workers)
    print(f"{summary.name}: {summary.successes}/{summary.trials} succeeded, "
          f"{summary.crash_count} ground contacts, "
          f"{summary.total_recollisions} re-collisions near registered points")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(summary.to_csv())
        print(f"per-trial outcomes written to {args.out}")
    return 0 if summary.successes == summary.trials else 1


def cmd_field_grid(args) -> int:
    path = EllipsePath(np.array([0.0, 0.0, args.z]), args.semi_x, args.semi_y)
    cfg = FieldConfig(v_field=args.v_field)
    registry = ObstacleRegistry()
    if args.obstacle:
        for spec in args.obstacle:
            registry.add(np.array([float(x) for x in spec.split(",")]))
    xs = np.linspace(-args.extent, args.extent, args.resolution)
    ys = np.linspace(-args.extent, args.extent, args.resolution)
    zs = np.array([args.z])
    rows = sample_field_grid(path, cfg, registry, xs, ys, zs)
    with open(args.out, "w") as fh:
        fh.write("x,y,z,gx,gy,gz\n")
        for r in rows:
            fh.write(",".join(f"{v:.9g}" for v in r) + "\n")
    print(f"{rows.shape[0]} field samples written to {args.out}")
    return 0


def cmd_nearest_check(args) -> int:
    # queries sampled in a tube around the path where the projection is
    # well conditioned (the ellipse evolute stays b^2/a off the path)
    rng = np.random.default_rng(args.seed)
    path = EllipsePath(np.array([0.0, 0.0, 1.2]), 4.0, 2.5)
    flight = FieldConfig()                     # |dtau| at the flight default
    converged = FieldConfig(newton_iters=6)    # residual at convergence
    dense_tau = np.linspace(0.0, 1.0, args.dense, endpoint=False)
    dense_pts = np.stack([path.point(t) for t in dense_tau])
    worst_dtau = 0.0
    worst_res = 0.0
    for _ in range(args.queries):
        u = rng.normal(size=3)
        u *= rng.uniform(0.05, 1.2) / np.linalg.norm(u)
        x = path.point(float(rng.uniform(0, 1))) + u
        tau = nearest_point(path, x, flight)
        d = dense_pts - x
        tau_star = dense_tau[int(np.argmin(np.einsum("ij,ij->i", d, d)))]
        dtau = abs(tau - tau_star)
        if path.closed:
            dtau = min(dtau, 1.0 - dtau)
        tau_c = nearest_point(path, x, converged)
        h, hp = path.point(tau_c), path.velocity(tau_c)
        res = abs(float((x - h) @ hp)) / max(
            np.linalg.norm(x - h) * np.linalg.norm(hp), 1e-12)
        worst_dtau = max(worst_dtau, dtau)
        worst_res = max(worst_res, res)
    print(f"queries={args.queries} dense={args.dense}")
    print(f"max |tau - tau*| = {worst_dtau:.3e} (tolerance 1e-4, flight config)")
    print(f"max scaled first-order residual = {worst_res:.3e}"
          " (tolerance 1e-8, converged config)")
    ok = worst_dtau <= 1e-4 and worst_res <= 1e-8
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_fit(args) -> int:
    samples = load_impact_csv(args.csv)
    frame = IcosahedronFrame()
    fit = fit_restitution_friction(samples, frame, InertialParams())
    print(f"samples={len(samples)} restitution={fit.params.restitution:.6f}")
    if fit.friction_identifiable:
        print(f"friction={fit.params.friction:.6f}")
    else:
        print("friction: unidentifiable from this dataset (no tangential sliding)")
    print(f"residual rms = {fit.residual_rms:.3e} m/s")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tactisim",
        description="collision-resilient MAV flight simulation experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trial", help="run one trial")
    p.add_argument("--scenario", choices=["hover", "sweep", "ellipse", "trap"],
                   default="sweep")
    p.add_argument("--config", help="scenario YAML (overrides --scenario)")
    p.add_argument("--variant", choices=["proposed", "accelerometer",
                                         "agnostic"], default="proposed")
    p.add_argument("--velocity", type=float, default=2.0)
    p.add_argument("--index", type=int, default=0, help="trial index for seeding")
    p.add_argument("--export", help="write trajectory to this CSV/JSON path")
    _add_common(p)
    p.set_defaults(fn=cmd_trial)

    p = sub.add_parser("sweep", help="velocity x variant Monte Carlo table")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--velocities", help="comma list, default 0.5..8.0")
    p.add_argument("--variants", help="comma list, default all three")
    p.add_argument("--out", help="CSV output path")
    _add_common(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("scenario-a", help="cluttered-ellipse batch")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", help="CSV output path")
    _add_common(p)
    p.set_defaults(fn=lambda a: _run_scenario_batch(cluttered_ellipse_scenario, a))

    p = sub.add_parser("scenario-b", help="concave-trap batch")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", help="CSV output path")
    _add_common(p)
    p.set_defaults(fn=lambda a: _run_scenario_batch(concave_trap_scenario, a))

    p = sub.add_parser("field-grid", help="sample the guidance field to CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--semi-x", type=float, default=4.0)
    p.add_argument("--semi-y", type=float, default=2.5)
    p.add_argument("--z", type=float, default=1.2)
    p.add_argument("--extent", type=float, default=6.0)
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--v-field", type=float, default=1.0)
    p.add_argument("--obstacle", action="append",
                   help="x,y,z of a registered collision point (repeatable)")
    p.set_defaults(fn=cmd_field_grid)

    p = sub.add_parser("nearest-check", help="nearest-point oracle report")
    p.add_argument("--queries", type=int, default=200)
    p.add_argument("--dense", type=int, default=100000)
    p.add_argument("--seed", type=int, default=2024)
    p.set_defaults(fn=cmd_nearest_check)

    p = sub.add_parser("fit", help="fit restitution/friction from impact CSV")
    p.add_argument("csv")
    p.set_defaults(fn=cmd_fit)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
