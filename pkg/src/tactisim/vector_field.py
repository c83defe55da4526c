"""Vector-field path representation with obstacle repulsion.

A path is a twice-differentiable curve h(tau), tau in [0, 1]. The guidance
velocity at a point x combines an attractor toward the nearest path point,
the path velocity there, and inverse-square repulsion from registered
collision points projected onto the plane orthogonal to the obstacle-free
field direction:

    g(x) = v_gf * [ kp (h(t*) - x) + kv / ||h(t*) - x|| * h'(t*)
                    + sum_j P ( kc (x - c_j) / ||x - c_j||^3 ) ]_norm

The nearest parameter t* is found by brute force over n uniform samples
followed by a few damped Newton iterations, so the cost per query is
constant for fixed (n, i) regardless of the path. Distances are floored at
eps_reg to keep the kv term and the repulsion finite on the path and at
obstacle points.

Two-pass evaluation: the field is first computed without the collision
terms to obtain the projection plane normal, then the projected obstacle
contributions are added and the sum is rescaled to speed v_gf.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import PositionReference
from .so3 import cross3

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FieldConfig:
    kappa_p: float = 10.0
    kappa_v: float = 0.1
    kappa_c: float = 2.5
    v_field: float = 1.0          # commanded guidance speed [m/s]
    n_samples: int = 10           # coarse brute-force samples
    newton_iters: int = 3
    eps_reg: float = 1e-3         # singularity floor [m]

    def __post_init__(self):
        if min(self.kappa_p, self.kappa_v, self.kappa_c, self.v_field,
               self.eps_reg) <= 0 or self.n_samples < 2 or self.newton_iters < 0:
            raise ValueError("invalid field configuration")


class EllipsePath:
    """Closed horizontal ellipse: h(tau) = c + (a cos 2pi tau, b sin 2pi tau, 0)."""

    closed = True

    def __init__(self, center, semi_x: float, semi_y: float):
        if semi_x <= 0 or semi_y <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        self.center = np.asarray(center, dtype=float)
        self.a = float(semi_x)
        self.b = float(semi_y)
        self.hprime_max = _TWO_PI * max(self.a, self.b)
        self._samples: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def point(self, tau: float) -> np.ndarray:
        ang = _TWO_PI * tau
        return self.center + np.array([self.a * np.cos(ang),
                                       self.b * np.sin(ang), 0.0])

    def velocity(self, tau: float) -> np.ndarray:
        ang = _TWO_PI * tau
        return np.array([-self.a * _TWO_PI * np.sin(ang),
                         self.b * _TWO_PI * np.cos(ang), 0.0])

    def accel(self, tau: float) -> np.ndarray:
        ang = _TWO_PI * tau
        k = _TWO_PI * _TWO_PI
        return np.array([-self.a * k * np.cos(ang),
                         -self.b * k * np.sin(ang), 0.0])

    def to_dict(self) -> dict:
        return {"type": "ellipse", "center_m": self.center.tolist(),
                "semi_x_m": self.a, "semi_y_m": self.b}


class LinePath:
    """Open segment from a to b; h'' = 0."""

    closed = False

    def __init__(self, start, end):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        self.span = self.end - self.start
        if np.linalg.norm(self.span) < 1e-9:
            raise ValueError("degenerate line path")
        self.hprime_max = float(np.linalg.norm(self.span))
        self._samples: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def point(self, tau: float) -> np.ndarray:
        return self.start + tau * self.span

    def velocity(self, tau: float) -> np.ndarray:
        return self.span.copy()

    def accel(self, tau: float) -> np.ndarray:
        return np.zeros(3)

    def to_dict(self) -> dict:
        return {"type": "line", "start_m": self.start.tolist(),
                "end_m": self.end.tolist()}


class CubicPath:
    """Open cubic h(tau) = c0 + c1 t + c2 t^2 + c3 t^3; coeffs shape (4, 3)."""

    closed = False

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (4, 3):
            raise ValueError("cubic coefficients must have shape (4, 3)")
        self.coeffs = c
        taus = np.linspace(0.0, 1.0, 1001)
        basis = np.stack([np.zeros_like(taus), np.ones_like(taus),
                          2 * taus, 3 * taus ** 2], axis=1)
        self.hprime_max = float(np.linalg.norm(basis @ c, axis=1).max())
        self._samples: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def point(self, tau: float) -> np.ndarray:
        c = self.coeffs
        return c[0] + tau * (c[1] + tau * (c[2] + tau * c[3]))

    def velocity(self, tau: float) -> np.ndarray:
        c = self.coeffs
        return c[1] + tau * (2.0 * c[2] + 3.0 * tau * c[3])

    def accel(self, tau: float) -> np.ndarray:
        c = self.coeffs
        return 2.0 * c[2] + 6.0 * tau * c[3]

    def to_dict(self) -> dict:
        return {"type": "cubic", "coeffs": self.coeffs.tolist()}


ParametricPath = EllipsePath | LinePath | CubicPath


def path_from_dict(d: dict) -> ParametricPath:
    kind = d["type"]
    if kind == "ellipse":
        return EllipsePath(np.array(d["center_m"]), d["semi_x_m"], d["semi_y_m"])
    if kind == "line":
        return LinePath(np.array(d["start_m"]), np.array(d["end_m"]))
    if kind == "cubic":
        return CubicPath(np.array(d["coeffs"]))
    raise ValueError(f"unknown path type {kind!r}")


def _sample_table(path: ParametricPath, n: int) -> tuple[np.ndarray, np.ndarray]:
    table = path._samples.get(n)
    if table is None:
        taus = (np.arange(n) / n if path.closed
                else np.linspace(0.0, 1.0, n))
        pts = np.stack([path.point(t) for t in taus])
        table = (taus, pts)
        path._samples[n] = table
    return table


def _wrap(path: ParametricPath, tau: float) -> float:
    if path.closed:
        return tau % 1.0
    return min(max(tau, 0.0), 1.0)


def newton_step(path: ParametricPath, x: np.ndarray, tau: float,
                max_step: float = 0.1) -> float:
    """One damped Newton iterate of the squared-distance objective.

    tau' = tau - (h - x).h' / (h'.h' + (h - x).h''), with the step clamped
    to +-max_step so the iterate stays inside the bracketing cell and the
    indefinite denominator cannot fling it away.
    """
    h = path.point(tau)
    hp = path.velocity(tau)
    hpp = path.accel(tau)
    delta = h - x
    denom = float(hp @ hp + delta @ hpp)
    if abs(denom) < 1e-12:
        return tau
    step = -float(delta @ hp) / denom
    step = min(max(step, -max_step), max_step)
    return _wrap(path, tau + step)


def nearest_point(path: ParametricPath, x: np.ndarray,
                  cfg: FieldConfig) -> float:
    """Brute-force sample then Newton-refine the nearest path parameter.

    The Newton hot start is sharpened for free by fitting a parabola
    through the squared distances of the best sample and its neighbors
    (already computed by the brute-force pass), which buys several digits
    before the first Newton iterate.
    """
    taus, pts = _sample_table(path, cfg.n_samples)
    d = pts - x
    dist_sq = np.einsum("ij,ij->i", d, d)
    best = int(np.argmin(dist_sq))
    tau = float(taus[best])
    n = cfg.n_samples
    cell = 1.0 / n if path.closed else 1.0 / (n - 1)
    m = len(taus)
    if path.closed or 0 < best < m - 1:
        f_m = dist_sq[(best - 1) % m]
        f_b = dist_sq[best]
        f_p = dist_sq[(best + 1) % m]
        curv = f_m - 2.0 * f_b + f_p
        if curv > 1e-300:
            shift = 0.5 * (f_m - f_p) / curv
            tau = _wrap(path, tau + cell * min(max(shift, -0.5), 0.5))
    max_step = 1.0 / n
    for _ in range(cfg.newton_iters):
        tau = newton_step(path, x, tau, max_step)
    # keep whichever candidate actually minimizes the distance
    h = path.point(tau)
    if float((h - x) @ (h - x)) <= dist_sq[best]:
        return tau
    return float(taus[best])


def lyapunov_value(x: np.ndarray, path: ParametricPath,
                   cfg: FieldConfig) -> float:
    """V(x) = 0.5 ||x - h(tau_min)||^2."""
    h = path.point(nearest_point(path, x, cfg))
    d = x - h
    return 0.5 * float(d @ d)


def tangent_basis(normal_dir: np.ndarray,
                  fallback: np.ndarray | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair spanning the plane with the given normal.

    Picks the coordinate axis least aligned with the normal, Gram-Schmidts
    it, and completes with a cross product. A zero normal falls back to the
    provided direction (typically the path tangent).
    """
    n = np.asarray(normal_dir, dtype=float)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        if fallback is None:
            raise ValueError("degenerate plane normal and no fallback")
        n = np.asarray(fallback, dtype=float)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("degenerate plane normal and fallback")
    n = n / norm
    k = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[k] = 1.0
    t1 = e - n[k] * n
    t1 = t1 / np.linalg.norm(t1)
    t2 = cross3(n, t1)
    return t1, t2


def collision_contribution(x: np.ndarray, c: np.ndarray, t1: np.ndarray,
                           t2: np.ndarray, kappa_c: float,
                           eps_reg: float) -> np.ndarray:
    """Inverse-square repulsion from c, projected onto span(t1, t2)."""
    d = x - c
    r = max(float(np.linalg.norm(d)), eps_reg)
    rep = (kappa_c / (r * r * r)) * d
    return float(rep @ t1) * t1 + float(rep @ t2) * t2


class ObstacleRegistry:
    """Collision points accumulated during a trial (1 cm merge radius)."""

    merge_radius = 0.01

    def __init__(self):
        self._points: list[np.ndarray] = []
        self._times: list[float] = []

    def add(self, point: np.ndarray, t: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        for q in self._points:
            if np.linalg.norm(p - q) < self.merge_radius:
                return False
        self._points.append(p.copy())
        self._times.append(float(t))
        return True

    def __len__(self):
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        if not self._points:
            return np.zeros((0, 3))
        return np.stack(self._points)

    @property
    def times(self) -> list[float]:
        return list(self._times)


def register_obstacle(registry: ObstacleRegistry, contact_point: np.ndarray,
                      t: float = 0.0) -> ObstacleRegistry:
    """Append a collision location (deduplicated); returns the registry."""
    registry.add(contact_point, t)
    return registry


def field(x: np.ndarray, path: ParametricPath, cfg: FieldConfig,
          registry: ObstacleRegistry | None = None) -> np.ndarray:
    """Guidance velocity g(x); ||g|| = v_field away from degeneracies."""
    g, _, _ = field_detail(x, path, cfg, registry)
    return g


def field_detail(x: np.ndarray, path: ParametricPath, cfg: FieldConfig,
                 registry: ObstacleRegistry | None = None
                 ) -> tuple[np.ndarray, float, np.ndarray]:
    """Field plus diagnostics: (g, tau_min, unnormalized attraction)."""
    tau = nearest_point(path, x, cfg)
    h = path.point(tau)
    hp = path.velocity(tau)
    delta = h - x
    dist = max(float(np.linalg.norm(delta)), cfg.eps_reg)
    attraction = cfg.kappa_p * delta + (cfg.kappa_v / dist) * hp

    total = attraction
    if registry is not None and len(registry) > 0:
        t1, t2 = tangent_basis(attraction, fallback=hp)
        total = attraction.copy()
        for c in registry.points:
            total += collision_contribution(x, c, t1, t2, cfg.kappa_c,
                                            cfg.eps_reg)
    norm = np.linalg.norm(total)
    if norm < 1e-12:
        return np.zeros(3), tau, attraction
    return (cfg.v_field / norm) * total, tau, attraction


def advance_reference(ref: PositionReference, path: ParametricPath,
                      cfg: FieldConfig, registry: ObstacleRegistry | None,
                      dt: float) -> PositionReference:
    """Integrate the reference along the field evaluated at the reference.

        p+ = p + dt g(p);  v+ = g(p);  yaw+ = atan2(g_y, g_x)
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    g = field(ref.p_des, path, cfg, registry)
    return PositionReference(ref.p_des + dt * g, g,
                             float(np.arctan2(g[1], g[0])))


def sample_field_grid(path: ParametricPath, cfg: FieldConfig,
                      registry: ObstacleRegistry | None,
                      xs: np.ndarray, ys: np.ndarray, zs: np.ndarray
                      ) -> np.ndarray:
    """Dense field samples as rows (x, y, z, gx, gy, gz) for visualization."""
    rows = []
    for z in zs:
        for y in ys:
            for x in xs:
                p = np.array([x, y, z], dtype=float)
                g = field(p, path, cfg, registry)
                rows.append(np.concatenate([p, g]))
    return np.stack(rows)
