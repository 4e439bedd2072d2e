"""Ground-truth scenario geometry.

Positions are plain numpy arrays: shape ``(2,)`` for vehicles on the road
plane and ``(3,)`` for transmitters. Building faces are vertical planes
standing on ``z = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

_EPS = 1e-12


class OutOfHorizonError(ValueError):
    """Raised when a trajectory is evaluated outside its time horizon."""


def as_point(values, dim: int) -> np.ndarray:
    p = np.asarray(values, dtype=float).reshape(-1)
    if p.shape != (dim,):
        raise ValueError(f"expected {dim} coordinates, got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("coordinates must be finite")
    return p


@dataclass(frozen=True)
class ReflectingPlane:
    """Vertical face over the 2D segment ``start -> end``, height ``height``.

    The outward normal is the segment direction rotated by -90 degrees, so a
    face drawn left-to-right faces toward negative y.
    """

    start: tuple[float, float]
    end: tuple[float, float]
    height: float
    id: int = 0

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("face height must be positive")
        if math.dist(self.start, self.end) <= 0:
            raise ValueError("face segment has zero length")

    @property
    def p0(self) -> np.ndarray:
        return np.asarray(self.start, dtype=float)

    @property
    def p1(self) -> np.ndarray:
        return np.asarray(self.end, dtype=float)

    @property
    def normal(self) -> np.ndarray:
        t = self.p1 - self.p0
        t = t / np.linalg.norm(t)
        return np.array([t[1], -t[0]])

    def translated(self, dx: float, dy: float) -> "ReflectingPlane":
        return ReflectingPlane(
            (self.start[0] + dx, self.start[1] + dy),
            (self.end[0] + dx, self.end[1] + dy),
            self.height,
            self.id,
        )


# --- trajectories ----------------------------------------------------------


@dataclass(frozen=True)
class UniformMotion:
    start: tuple[float, float]
    velocity: tuple[float, float]
    t0: float = 0.0
    t1: float = math.inf


@dataclass(frozen=True)
class UniformAcceleration:
    start: tuple[float, float]
    velocity: tuple[float, float]
    acceleration: tuple[float, float]
    t0: float = 0.0
    t1: float = math.inf


@dataclass(frozen=True)
class UniformCircular:
    """Circle around ``center``; ``angular_rate < 0`` runs clockwise."""

    center: tuple[float, float]
    radius: float
    angular_rate: float
    start_angle: float = 0.0
    t0: float = 0.0
    t1: float = math.inf

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("circular radius must be positive")


MotionPhase = Union[UniformMotion, UniformAcceleration, UniformCircular]


@dataclass(frozen=True)
class Trajectory:
    """Consecutive motion phases; ``phases[i].t1 == phases[i+1].t0``.

    ``horizon`` bounds the times at which the trajectory may be evaluated.
    """

    phases: tuple[MotionPhase, ...]
    horizon: tuple[float, float] = (0.0, math.inf)

    def phase_at(self, t: float) -> MotionPhase:
        for ph in self.phases:
            if t < ph.t1:
                return ph
        return self.phases[-1]


@dataclass(frozen=True)
class VehicleTruth:
    position: np.ndarray
    velocity: np.ndarray
    ue_height: float = 1.5

    def __post_init__(self):
        if self.ue_height <= 0:
            raise ValueError("ue_height must be positive")

    @property
    def position3(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1], self.ue_height])


def _evaluate_phase(ph: MotionPhase, t: float) -> tuple[np.ndarray, np.ndarray]:
    tau = t - ph.t0
    if isinstance(ph, UniformMotion):
        v = np.asarray(ph.velocity, dtype=float)
        return np.asarray(ph.start, dtype=float) + v * tau, v.copy()
    if isinstance(ph, UniformAcceleration):
        v0 = np.asarray(ph.velocity, dtype=float)
        a = np.asarray(ph.acceleration, dtype=float)
        return np.asarray(ph.start, dtype=float) + v0 * tau + 0.5 * a * tau**2, v0 + a * tau
    if isinstance(ph, UniformCircular):
        ang = ph.start_angle + ph.angular_rate * tau
        c, s = math.cos(ang), math.sin(ang)
        pos = np.asarray(ph.center, dtype=float) + ph.radius * np.array([c, s])
        vel = ph.radius * ph.angular_rate * np.array([-s, c])
        return pos, vel
    raise TypeError(f"unknown motion phase {type(ph).__name__}")


def evaluate_trajectory(
    model: MotionPhase | Trajectory, t: float, ue_height: float = 1.5
) -> VehicleTruth:
    """Exact position and velocity of ``model`` at time ``t``."""
    if isinstance(model, Trajectory):
        lo, hi = model.horizon
        if not lo - 1e-9 <= t <= hi + 1e-9:
            raise OutOfHorizonError(f"t={t} outside horizon [{lo}, {hi}]")
        ph = model.phase_at(t)
    else:
        ph = model
        if not ph.t0 - 1e-9 <= t <= ph.t1 + 1e-9:
            raise OutOfHorizonError(f"t={t} outside phase [{ph.t0}, {ph.t1}]")
    pos, vel = _evaluate_phase(ph, t)
    return VehicleTruth(pos, vel, ue_height)


# --- mirror geometry -------------------------------------------------------


def mirror_transmitter(bs, plane: ReflectingPlane) -> np.ndarray:
    """Reflect ``bs`` across the infinite vertical plane through ``plane``."""
    bs = np.asarray(bs, dtype=float)
    n = plane.normal
    off = float(np.dot(bs[:2] - plane.p0, n))
    out = bs.copy()
    out[:2] = bs[:2] - 2.0 * off * n
    return out


def _segment_hit(a: np.ndarray, b: np.ndarray, c: np.ndarray, d: np.ndarray):
    """Parameters ``(s, u)`` where ``a + s(b-a) == c + u(d-c)``, or None if parallel."""
    r = b - a
    q = d - c
    den = r[0] * q[1] - r[1] * q[0]
    if abs(den) < _EPS:
        return None
    w = c - a
    s = (w[0] * q[1] - w[1] * q[0]) / den
    u = (w[0] * r[1] - w[1] * r[0]) / den
    return s, u


def _face_arrays(planes: Sequence[ReflectingPlane]):
    if not planes:
        return np.empty((0, 2)), np.empty((0, 2)), np.empty(0), np.empty(0, dtype=int)
    p0 = np.array([p.start for p in planes], dtype=float)
    p1 = np.array([p.end for p in planes], dtype=float)
    h = np.array([p.height for p in planes], dtype=float)
    ids = np.array([p.id for p in planes], dtype=int)
    return p0, p1, h, ids


def _blocked(a3: np.ndarray, b3: np.ndarray, faces, skip=None) -> bool:
    """True if any face (other than ``skip``) cuts the ray a->b below its top edge."""
    p0, p1, h, ids = faces
    if len(h) == 0:
        return False
    r = b3[:2] - a3[:2]
    q = p1 - p0
    den = r[0] * q[:, 1] - r[1] * q[:, 0]
    w = p0 - a3[:2]
    ok = np.abs(den) >= _EPS
    den = np.where(ok, den, 1.0)
    s = (w[:, 0] * q[:, 1] - w[:, 1] * q[:, 0]) / den
    u = (w[:, 0] * r[1] - w[:, 1] * r[0]) / den
    z = a3[2] + s * (b3[2] - a3[2])
    hit = ok & (s > 1e-9) & (s < 1 - 1e-9) & (u >= -1e-12) & (u <= 1 + 1e-12) & (z <= h)
    if skip is not None:
        hit &= ids != skip
    return bool(np.any(hit))


@dataclass(frozen=True)
class GeometricPath:
    """One propagation path. ``plane_id is None`` marks the line-of-sight path."""

    plane_id: int | None
    vt: np.ndarray
    reflection_point: np.ndarray | None = None

    @property
    def is_los(self) -> bool:
        return self.plane_id is None


@dataclass(frozen=True)
class ScenarioWorld:
    base_station: np.ndarray
    planes: tuple[ReflectingPlane, ...] = ()
    vehicles: tuple[Trajectory, ...] = ()
    slot_duration: float = 0.1
    horizon: int = 300
    bounds: tuple[float, float, float, float] = (0.0, 132.0, -16.0, 16.0)
    ue_height: float = 1.5
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "base_station", as_point(self.base_station, 3))
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least one slot")
        object.__setattr__(self, "planes", tuple(self.planes))
        if len({p.id for p in self.planes}) != len(self.planes):
            raise ValueError("plane ids must be unique")
        object.__setattr__(self, "_faces", _face_arrays(self.planes))

    def true_vts(self) -> np.ndarray:
        """All candidate transmitters: the base station then one mirror per face."""
        pts = [self.base_station] + [mirror_transmitter(self.base_station, p) for p in self.planes]
        return np.array(pts)

    def inside(self, xy, tol: float = 1e-6) -> bool:
        x0, x1, y0, y1 = self.bounds
        return x0 - tol <= xy[0] <= x1 + tol and y0 - tol <= xy[1] <= y1 + tol


def visible_paths(world: ScenarioWorld, vehicle: VehicleTruth) -> list[GeometricPath]:
    """Line-of-sight plus every unobstructed single-bounce reflection.

    The LOS path (if present) comes first, reflections follow in plane order.
    """
    bs = world.base_station
    ue = vehicle.position3
    out: list[GeometricPath] = []
    faces = world._faces
    if not _blocked(bs, ue, faces):
        out.append(GeometricPath(None, bs.copy()))
    for pl in world.planes:
        n = pl.normal
        sb = float(np.dot(bs[:2] - pl.p0, n))
        su = float(np.dot(ue[:2] - pl.p0, n))
        if sb * su <= 0:
            continue
        vt = mirror_transmitter(bs, pl)
        hit = _segment_hit(vt[:2], ue[:2], pl.p0, pl.p1)
        if hit is None:
            continue
        s, u = hit
        if not (0.0 <= u <= 1.0):
            continue
        refl = vt + s * (ue - vt)
        if not (0.0 <= refl[2] <= pl.height):
            continue
        if _blocked(bs, refl, faces, skip=pl.id) or _blocked(refl, ue, faces, skip=pl.id):
            continue
        out.append(GeometricPath(pl.id, vt, refl))
    return out
