"""Monte Carlo sweeps and scenario batches.

A sweep cell is (velocity, controller variant); a cell succeeds only if
every one of its trials succeeds. Trials derive their seeds from the root
seed and their global index, and results are reduced in index order, so
the summary is identical for any worker count.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field

import numpy as np

from .scenario import ScenarioConfig, sweep_scenario
from .trial import TrialResult, recollisions_after_registration, run_trial, \
    trial_seed

DEFAULT_VELOCITIES = tuple(np.arange(1, 17) * 0.5)   # 0.5 .. 8.0 m/s
DEFAULT_VARIANTS = ("agnostic", "accelerometer", "proposed")


@dataclass
class CellResult:
    velocity: float
    variant: str
    successes: int = 0
    failures: int = 0
    invalid: int = 0

    @property
    def trials(self) -> int:
        return self.successes + self.failures + self.invalid

    @property
    def passed(self) -> bool:
        """A Monte Carlo cell succeeds iff no trial fails."""
        return self.failures == 0 and self.invalid == 0 and self.successes > 0


@dataclass
class SweepSummary:
    velocities: tuple
    variants: tuple
    cells: dict = field(default_factory=dict)   # (variant, velocity) -> CellResult

    def cell(self, variant: str, velocity: float) -> CellResult:
        return self.cells[(variant, round(velocity, 6))]

    def max_recovered_speed(self, variant: str) -> float:
        """Largest velocity whose cell passed with no failed cell below it."""
        best = 0.0
        for v in self.velocities:
            if self.cell(variant, v).passed:
                best = v
            else:
                break
        return best

    def to_text(self) -> str:
        width = max(len(v) for v in self.variants) + 2
        header = "velocity [m/s]".ljust(width) + "".join(
            f"{v:>6.1f}" for v in self.velocities)
        lines = [header]
        for variant in self.variants:
            marks = "".join(
                f"{'ok' if self.cell(variant, v).passed else 'X':>6}"
                for v in self.velocities)
            lines.append(variant.ljust(width) + marks)
        return "\n".join(lines)

    def to_csv(self) -> str:
        rows = ["variant,velocity_mps,successes,failures,invalid,cell_passed"]
        for variant in self.variants:
            for v in self.velocities:
                c = self.cell(variant, v)
                rows.append(f"{variant},{v:g},{c.successes},{c.failures},"
                            f"{c.invalid},{int(c.passed)}")
        return "\n".join(rows) + "\n"


def _sweep_job(args) -> tuple[str, float, bool, bool]:
    velocity, variant, seed = args
    cfg = sweep_scenario(velocity, variant)
    res = run_trial(cfg, seed)
    return variant, velocity, res.success, res.invalid


def monte_carlo(velocities=DEFAULT_VELOCITIES, variants=DEFAULT_VARIANTS,
                trials: int = 10, root_seed: int = 2024,
                workers: int = 1) -> SweepSummary:
    """Velocity x variant sweep; deterministic for any worker count."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = []
    index = 0
    for variant in variants:
        for velocity in velocities:
            for _ in range(trials):
                jobs.append((velocity, variant, trial_seed(root_seed, index)))
                index += 1
    outcomes = _map_jobs(_sweep_job, jobs, workers)
    summary = SweepSummary(tuple(velocities), tuple(variants))
    for variant in variants:
        for velocity in velocities:
            summary.cells[(variant, round(velocity, 6))] = CellResult(
                velocity, variant)
    for variant, velocity, success, invalid in outcomes:
        cell = summary.cell(variant, velocity)
        if invalid:
            cell.invalid += 1
        elif success:
            cell.successes += 1
        else:
            cell.failures += 1
    return summary


@dataclass
class BatchOutcome:
    seed: int
    success: bool
    crashed: bool
    invalid: bool
    escaped: bool
    escape_time: float | None
    collisions: int
    registered: int
    recollisions: int
    min_altitude: float


@dataclass
class BatchSummary:
    name: str
    outcomes: list

    @property
    def trials(self) -> int:
        return len(self.outcomes)

    @property
    def successes(self) -> int:
        return sum(1 for o in self.outcomes if o.success)

    @property
    def total_recollisions(self) -> int:
        return sum(o.recollisions for o in self.outcomes)

    @property
    def crash_count(self) -> int:
        return sum(1 for o in self.outcomes if o.crashed)

    def to_csv(self) -> str:
        rows = ["seed,success,crashed,invalid,escaped,escape_time_s,"
                "collisions,registered,recollisions,min_altitude_m"]
        for o in self.outcomes:
            esc = "" if o.escape_time is None else f"{o.escape_time:g}"
            rows.append(f"{o.seed},{int(o.success)},{int(o.crashed)},"
                        f"{int(o.invalid)},{int(o.escaped)},{esc},"
                        f"{o.collisions},{o.registered},{o.recollisions},"
                        f"{o.min_altitude:.6f}")
        return "\n".join(rows) + "\n"


_BATCH_CFG: ScenarioConfig | None = None


def _batch_init(cfg_dict):
    global _BATCH_CFG
    _BATCH_CFG = ScenarioConfig.from_dict(cfg_dict)


def _batch_job(seed: int) -> BatchOutcome:
    res = run_trial(_BATCH_CFG, seed)
    return _outcome_of(res)


def _outcome_of(res: TrialResult) -> BatchOutcome:
    rc = recollisions_after_registration(res)
    return BatchOutcome(res.seed, res.success, res.crashed, res.invalid,
                        res.escaped, res.escape_time,
                        len(res.collision_events), len(res.registry_points),
                        len(rc), res.min_altitude)


def run_batch(cfg: ScenarioConfig, trials: int = 100, root_seed: int = 2024,
              workers: int = 1) -> BatchSummary:
    """Run `trials` seeded repetitions of one scenario config."""
    seeds = [trial_seed(root_seed, i) for i in range(trials)]
    if workers <= 1:
        outcomes = [_outcome_of(run_trial(cfg, s)) for s in seeds]
    else:
        with mp.Pool(workers, initializer=_batch_init,
                     initargs=(cfg.to_dict(),)) as pool:
            outcomes = pool.map(_batch_job, seeds, chunksize=1)
    return BatchSummary(cfg.name, outcomes)


def _map_jobs(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with mp.Pool(workers) as pool:
        return pool.map(fn, jobs, chunksize=1)
