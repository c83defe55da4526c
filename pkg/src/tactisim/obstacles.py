"""Obstacle primitives and penetration queries.

Shapes implement `penetrations(points)` returning per-point penetration
depth (> 0 strictly inside, 0 outside) and the outward unit normal of the
nearest surface. Outside a shape the normal defaults to +z; callers must
gate on depth. A `Scene` combines shapes by deepest penetration per point,
so each vertex feels a single well-defined contact surface.

Shapes serialize to plain dicts with a `type` tag for the scenario files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, eq=False)
class HalfSpace:
    """Solid half-space: the region behind `normal` seen from `point`."""

    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        nn = np.linalg.norm(n)
        if nn < 1e-9:
            raise ValueError("degenerate half-space normal")
        object.__setattr__(self, "normal", n / nn)
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "_offset", float(self.point @ (n / nn)))

    def penetrations(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self._offset - points @ self.normal
        inside = d > 0.0
        depths = np.where(inside, d, 0.0)
        normals = np.where(inside[:, None], self.normal, _UP)
        return depths, normals

    def to_dict(self) -> dict:
        return {"type": "halfspace", "point_m": self.point.tolist(),
                "normal": self.normal.tolist()}


@dataclass(frozen=True, eq=False)
class Box:
    """Axis-aligned box given by center and half extents."""

    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float)
        if np.any(he <= 0.0):
            raise ValueError("box half extents must be positive")
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def penetrations(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        local = points - self.center
        # distance to each of the 6 faces, positive while inside
        gaps = self.half_extents - np.abs(local)          # (n, 3)
        inside = np.all(gaps > 0.0, axis=1)
        axis = np.argmin(gaps, axis=1)
        n_pts = points.shape[0]
        depths = np.zeros(n_pts)
        normals = np.tile(_UP, (n_pts, 1))
        if np.any(inside):
            idx = np.nonzero(inside)[0]
            ax = axis[idx]
            depths[idx] = gaps[idx, ax]
            sgn = np.sign(local[idx, ax])
            sgn[sgn == 0.0] = 1.0
            normals[idx] = 0.0
            normals[idx, ax] = sgn
        return depths, normals

    def to_dict(self) -> dict:
        return {"type": "box", "center_m": self.center.tolist(),
                "half_extents_m": self.half_extents.tolist()}


@dataclass(frozen=True, eq=False)
class Cylinder:
    """Vertical cylinder: base center, radius, height (axis along +z)."""

    base_center: np.ndarray
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0.0 or self.height <= 0.0:
            raise ValueError("cylinder radius and height must be positive")
        object.__setattr__(self, "base_center",
                           np.asarray(self.base_center, dtype=float))

    def penetrations(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        local = points - self.base_center
        r_xy = np.hypot(local[:, 0], local[:, 1])
        gap_side = self.radius - r_xy
        gap_bot = local[:, 2]
        gap_top = self.height - local[:, 2]
        inside = (gap_side > 0.0) & (gap_bot > 0.0) & (gap_top > 0.0)
        n_pts = points.shape[0]
        depths = np.zeros(n_pts)
        normals = np.tile(_UP, (n_pts, 1))
        if np.any(inside):
            idx = np.nonzero(inside)[0]
            gaps = np.stack([gap_side[idx], gap_bot[idx], gap_top[idx]], axis=1)
            which = np.argmin(gaps, axis=1)
            depths[idx] = gaps[idx, which]
            for j, (i, w) in enumerate(zip(idx, which)):
                if w == 0:
                    r = max(r_xy[i], 1e-12)
                    normals[i] = np.array([local[i, 0] / r, local[i, 1] / r, 0.0])
                elif w == 1:
                    normals[i] = np.array([0.0, 0.0, -1.0])
                else:
                    normals[i] = _UP
        return depths, normals

    def to_dict(self) -> dict:
        return {"type": "cylinder", "base_center_m": self.base_center.tolist(),
                "radius_m": self.radius, "height_m": self.height}


_OPENINGS = {"+x": 0, "-x": 0, "+y": 1, "-y": 1}


@dataclass(frozen=True, eq=False)
class UShape:
    """Concave U made of three axis-aligned boxes (two side walls, one back).

    `opening` is the axis direction the cavity faces ("+x", "-x", "+y",
    "-y"). `opening_width` is the clear span between the side walls,
    `depth` the cavity depth along the opening axis.
    """

    center: np.ndarray
    opening: str = "-x"
    opening_width: float = 1.5
    depth: float = 2.0
    height: float = 2.0
    thickness: float = 0.2

    parts: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.opening not in _OPENINGS:
            raise ValueError(f"opening must be one of {sorted(_OPENINGS)}")
        if min(self.opening_width, self.depth, self.height, self.thickness) <= 0:
            raise ValueError("U-shape dimensions must be positive")
        c = np.asarray(self.center, dtype=float)  # center of cavity floor plan, z = base
        object.__setattr__(self, "center", c)
        along = _OPENINGS[self.opening]           # axis of the opening
        across = 1 - along
        sign = 1.0 if self.opening.startswith("+") else -1.0
        t, w, d, h = self.thickness, self.opening_width, self.depth, self.height
        zc = c[2] + h / 2.0

        def make(offset_along, offset_across, he_along, he_across):
            center = c.copy().astype(float)
            center[2] = zc
            center[along] += offset_along
            center[across] += offset_across
            he = np.empty(3)
            he[along] = he_along
            he[across] = he_across
            he[2] = h / 2.0
            return Box(center, he)

        back = make(-sign * (d / 2.0 + t / 2.0), 0.0, t / 2.0, w / 2.0 + t)
        side_a = make(0.0, +(w / 2.0 + t / 2.0), d / 2.0, t / 2.0)
        side_b = make(0.0, -(w / 2.0 + t / 2.0), d / 2.0, t / 2.0)
        object.__setattr__(self, "parts", (back, side_a, side_b))

    def penetrations(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _deepest([part.penetrations(points) for part in self.parts],
                        points.shape[0])

    def to_dict(self) -> dict:
        return {"type": "ushape", "center_m": self.center.tolist(),
                "opening": self.opening, "opening_width_m": self.opening_width,
                "depth_m": self.depth, "height_m": self.height,
                "thickness_m": self.thickness}


Shape = HalfSpace | Box | Cylinder | UShape


def _deepest(results: Sequence[tuple[np.ndarray, np.ndarray]],
             n_pts: int) -> tuple[np.ndarray, np.ndarray]:
    depths = np.zeros(n_pts)
    normals = np.tile(_UP, (n_pts, 1))
    for d, n in results:
        take = d > depths
        if np.any(take):
            depths[take] = d[take]
            normals[take] = n[take]
    return depths, normals


class Scene:
    """Immutable obstacle collection; deepest shape wins per query point."""

    __slots__ = ("shapes",)

    def __init__(self, shapes: Sequence[Shape] = ()):
        self.shapes = tuple(shapes)

    def penetrations(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if len(self.shapes) == 1:
            return self.shapes[0].penetrations(points)
        if not self.shapes:
            n = points.shape[0]
            return np.zeros(n), np.tile(_UP, (n, 1))
        return _deepest([s.penetrations(points) for s in self.shapes],
                        points.shape[0])

    def to_dicts(self) -> list[dict]:
        return [s.to_dict() for s in self.shapes]


def query_penetration(shape: Shape | Scene, point: np.ndarray
                      ) -> tuple[float, np.ndarray]:
    """Scalar penetration query: depth (0 outside) and outward unit normal."""
    depths, normals = shape.penetrations(np.asarray(point, dtype=float)[None, :])
    return float(depths[0]), normals[0]


def shape_from_dict(d: dict) -> Shape:
    kind = d["type"]
    if kind == "halfspace":
        return HalfSpace(np.array(d["point_m"]), np.array(d["normal"]))
    if kind == "box":
        return Box(np.array(d["center_m"]), np.array(d["half_extents_m"]))
    if kind == "cylinder":
        return Cylinder(np.array(d["base_center_m"]), d["radius_m"], d["height_m"])
    if kind == "ushape":
        return UShape(np.array(d["center_m"]), d["opening"],
                      d["opening_width_m"], d["depth_m"], d["height_m"],
                      d["thickness_m"])
    raise ValueError(f"unknown obstacle type {kind!r}")
