"""Road-and-buildings scenario: looped vehicle routes on an 8-lane road with
building faces along both road edges."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import (
    ReflectingPlane,
    ScenarioWorld,
    Trajectory,
    UniformAcceleration,
    UniformCircular,
    UniformMotion,
    evaluate_trajectory,
)


@dataclass(frozen=True)
class ScenarioConfig:
    base_station: tuple[float, float, float] = (50.0, 0.0, 8.0)
    road_x: tuple[float, float] = (0.0, 132.0)
    road_y: tuple[float, float] = (-16.0, 16.0)
    lanes: int = 8
    lane_width: float = 4.0
    building_length: float = 12.0
    building_gap: float = 6.0  # math.inf: no buildings
    building_height: float = 20.0
    building_setback: float = 2.0
    building_overhang: float = 12.0  # face rows extend this far past the road ends
    speed_low: float = 5.0
    speed_high: float = 12.0
    route_stagger: float = 2.0  # seconds between neighbouring routes' start phases
    ue_height: float = 1.5
    truth_integration: str = "transition"

    def __post_init__(self):
        if self.lanes < 2 or self.lanes % 2:
            raise ValueError("lanes must be a positive even number")
        if self.building_length <= 0 or self.building_gap <= 0:
            raise ValueError("building length and gap must be positive")
        if not 0 < self.speed_low <= self.speed_high:
            raise ValueError("need 0 < speed_low <= speed_high")
        if self.truth_integration not in ("transition", "analytic"):
            raise ValueError("truth_integration must be 'transition' or 'analytic'")
        if self.lane_width * self.lanes > (self.road_y[1] - self.road_y[0]) + 1e-9:
            raise ValueError("lanes do not fit between road_y bounds")


def lane_offsets(cfg: ScenarioConfig) -> list[float]:
    """Distance from the road centre line to each lane centre on one side."""
    mid = 0.5 * (cfg.road_y[0] + cfg.road_y[1])
    return [mid + (k + 0.5) * cfg.lane_width for k in range(cfg.lanes // 2)]


def _lap(cfg: ScenarioConfig, radius: float, y_mid: float) -> list[tuple[str, dict, float]]:
    # One clockwise lap: top straight (+x), right half-circle, bottom straight (-x), left half-circle.
    r_max = max(lane_offsets(cfg)) - 0.5 * (cfg.road_y[0] + cfg.road_y[1])
    xl = cfg.road_x[0] + r_max
    xr = cfg.road_x[1] - r_max
    third = (xr - xl) / 3.0
    lo, hi = cfg.speed_low, cfg.speed_high
    acc = (hi**2 - lo**2) / (2 * third)
    t_ramp = third / (0.5 * (lo + hi))
    t_flat = third / hi
    t_arc = math.pi * radius / lo
    w = -lo / radius
    out = []
    for sign, x0, ang0, cx in ((1.0, xl, math.pi / 2, xr), (-1.0, xr, -math.pi / 2, xl)):
        y = y_mid + sign * radius
        out += [
            ("acc", dict(start=(x0, y), velocity=(sign * lo, 0.0), acceleration=(sign * acc, 0.0)), t_ramp),
            ("uni", dict(start=(x0 + sign * third, y), velocity=(sign * hi, 0.0)), t_flat),
            ("acc", dict(start=(x0 + sign * 2 * third, y), velocity=(sign * hi, 0.0),
                         acceleration=(-sign * acc, 0.0)), t_ramp),
            ("arc", dict(center=(cx, y_mid), radius=radius, angular_rate=w, start_angle=ang0), t_arc),
        ]
    return out


def loop_trajectory(cfg: ScenarioConfig, radius: float, t_offset: float, t_end: float) -> Trajectory:
    """Clockwise loop of half-width ``radius``, entered ``t_offset`` seconds into a lap."""
    y_mid = 0.5 * (cfg.road_y[0] + cfg.road_y[1])
    lap = _lap(cfg, radius, y_mid)
    period = sum(d for _, _, d in lap)
    t = -(t_offset % period)
    phases = []
    while t < t_end:
        for kind, kw, dur in lap:
            t1 = t + dur
            if kind == "acc":
                phases.append(UniformAcceleration(t0=t, t1=t1, **kw))
            elif kind == "uni":
                phases.append(UniformMotion(t0=t, t1=t1, **kw))
            else:
                phases.append(UniformCircular(t0=t, t1=t1, **kw))
            t = t1
    return Trajectory(tuple(phases), (0.0, t_end))


def lap_period(cfg: ScenarioConfig, radius: float) -> float:
    return sum(d for _, _, d in _lap(cfg, radius, 0.0))


def building_faces(cfg: ScenarioConfig, gap: float | None = None) -> list[ReflectingPlane]:
    """Road-facing building walls along both road edges, normals pointing at the road."""
    gap = cfg.building_gap if gap is None else gap
    if math.isinf(gap):
        return []
    D = cfg.building_length
    x = cfg.road_x[0] - cfg.building_overhang
    x_end = cfg.road_x[1] + cfg.building_overhang
    y_n = cfg.road_y[1] + cfg.building_setback
    y_s = cfg.road_y[0] - cfg.building_setback
    faces = []
    pid = 0
    while x + D <= x_end + 1e-9:
        faces.append(ReflectingPlane((x, y_n), (x + D, y_n), cfg.building_height, pid))
        faces.append(ReflectingPlane((x + D, y_s), (x, y_s), cfg.building_height, pid + 1))
        pid += 2
        x += D + gap
    return faces


def build_world(cfg: ScenarioConfig, density: int, horizon: int, slot_duration: float,
                gap: float | None = None) -> ScenarioWorld:
    """``density`` vehicles spread round-robin over the lane-pair loops."""
    if density < 1:
        raise ValueError("density must be at least one vehicle")
    radii = [r - 0.5 * (cfg.road_y[0] + cfg.road_y[1]) for r in lane_offsets(cfg)]
    n_loops = len(radii)
    t_end = horizon * slot_duration
    trajs = []
    for i in range(density):
        loop = i % n_loops
        on_loop = len(range(loop, density, n_loops))
        period = lap_period(cfg, radii[loop])
        offset = period * (i // n_loops) / on_loop + loop * cfg.route_stagger
        trajs.append(loop_trajectory(cfg, radii[loop], offset, t_end))
    return ScenarioWorld(
        base_station=np.array(cfg.base_station, dtype=float),
        planes=tuple(building_faces(cfg, gap)),
        vehicles=tuple(trajs),
        slot_duration=slot_duration,
        horizon=horizon,
        bounds=(cfg.road_x[0], cfg.road_x[1], cfg.road_y[0], cfg.road_y[1]),
        ue_height=cfg.ue_height,
    )


def ground_truth(world: ScenarioWorld, integration: str = "transition") -> tuple[np.ndarray, np.ndarray]:
    """Vehicle positions and velocities at every slot, shape ``(K+1, M, 2)``.

    With ``"transition"`` the slot positions are the trapezoidal integral of
    the sampled velocities, so dead reckoning on exact velocities is exact.
    ``"analytic"`` samples the continuous trajectories directly.
    """
    K, M, dt = world.horizon, len(world.vehicles), world.slot_duration
    pos = np.empty((K + 1, M, 2))
    vel = np.empty((K + 1, M, 2))
    for m, traj in enumerate(world.vehicles):
        for k in range(K + 1):
            vt = evaluate_trajectory(traj, k * dt, world.ue_height)
            pos[k, m] = vt.position
            vel[k, m] = vt.velocity
    if integration == "transition":
        for k in range(1, K + 1):
            pos[k] = pos[k - 1] + 0.5 * (vel[k - 1] + vel[k]) * dt
    return pos, vel
