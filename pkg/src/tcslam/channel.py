"""Multipath measurement synthesis and the measurement-to-transmitter map."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .rng import truncated_normal
from .world import ScenarioWorld, VehicleTruth, visible_paths

MIN_DISTANCE = 1e-6


@dataclass(frozen=True)
class NoiseModel:
    """Measurement, motion and GPS noise, all zero-mean truncated Gaussians.

    ``sigma_angle`` applies to both angles independently; ``truncation`` is a
    multiple of each sigma.
    """

    sigma_d: float = 2.61
    sigma_angle: float = math.radians(2.08)
    sigma_v: float = 0.1
    sigma_omega: float = math.radians(0.1)
    sigma_gps: float = 3.0
    truncation: float = 2.0

    def __post_init__(self):
        for name in ("sigma_d", "sigma_angle", "sigma_v", "sigma_omega", "sigma_gps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")

    @classmethod
    def noiseless(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class MultipathObservation:
    theta: float
    phi: float
    distance: float
    vehicle: int
    path: int  # 1-based within the vehicle and slot

    @property
    def index(self) -> tuple[int, int]:
        return (self.vehicle, self.path)


def direction_vector(theta, phi, d) -> np.ndarray:
    """``d * (sin phi cos theta, sin phi sin theta, cos phi)``; broadcasts."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    d = np.asarray(d, dtype=float)
    sp = np.sin(phi)
    return np.stack([d * sp * np.cos(theta), d * sp * np.sin(theta), d * np.cos(phi)], axis=-1)


def angles_to(offset) -> tuple[float, float, float]:
    """Inverse of :func:`direction_vector` for one offset vector."""
    dx, dy, dz = (float(v) for v in offset)
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d == 0.0:
        return 0.0, 0.0, 0.0
    return math.atan2(dy, dx), math.acos(max(-1.0, min(1.0, dz / d))), d


def observe_paths(
    world: ScenarioWorld,
    vehicle: VehicleTruth,
    noise: NoiseModel,
    rng: np.random.Generator,
    vehicle_id: int = 0,
) -> list[MultipathObservation]:
    paths = visible_paths(world, vehicle)
    if not paths:
        return []
    ue = vehicle.position3
    true = np.array([angles_to(p.vt - ue) for p in paths])
    n = len(paths)
    k = noise.truncation
    dd = truncated_normal(rng, noise.sigma_d, n, k)
    dth = truncated_normal(rng, noise.sigma_angle, n, k)
    dph = truncated_normal(rng, noise.sigma_angle, n, k)
    return [
        MultipathObservation(
            theta=float(true[i, 0] + dth[i]),
            phi=float(true[i, 1] + dph[i]),
            distance=max(MIN_DISTANCE, float(true[i, 2] + dd[i])),
            vehicle=vehicle_id,
            path=i + 1,
        )
        for i in range(n)
    ]


def observation_vector(z: MultipathObservation) -> np.ndarray:
    return direction_vector(z.theta, z.phi, z.distance)


def vt_from_observation(vehicle_position, z: MultipathObservation) -> np.ndarray:
    """Transmitter position seen through ``z`` from a 3D receiver position."""
    return np.asarray(vehicle_position, dtype=float) + observation_vector(z)


def report_motion(true_velocity, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """True velocity plus a speed error of random length at a small angle to the heading."""
    v = np.asarray(true_velocity, dtype=float)
    n_v = float(truncated_normal(rng, noise.sigma_v, None, noise.truncation))
    n_w = float(truncated_normal(rng, noise.sigma_omega, None, noise.truncation))
    heading = math.atan2(v[1], v[0]) if np.any(v) else 0.0
    return v + n_v * np.array([math.cos(heading + n_w), math.sin(heading + n_w)])


def calibrate_sigma_from_median(median_error: float) -> float:
    """Sigma of a zero-mean Gaussian whose absolute value has the given median."""
    if not median_error > 0:
        raise ValueError("median error must be positive")
    return float(median_error / norm.ppf(0.75))
