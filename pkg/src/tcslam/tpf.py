"""Team particle filter: vehicle (2D) and CVT (3D) particle filters updated
against each other in stochastic batches within every slot."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .channel import MultipathObservation, NoiseModel, observation_vector
from .rng import substream, truncated_normal

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass
class ParticleSet:
    positions: np.ndarray  # (N, D)
    weights: np.ndarray | None = None  # (N,), sums to one; None means uniform
    id: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.weights is None:
            self.weights = np.full(len(self.positions), 1.0 / len(self.positions))
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def copy(self):
        return type(self)(self.positions.copy(), self.weights.copy(), self.id)


class VehicleFilter(ParticleSet):
    """2D vehicle position hypotheses."""


class CvtFilter(ParticleSet):
    """3D transmitter position hypotheses for one cluster."""


@dataclass(frozen=True)
class TpfConfig:
    n_vehicle: int = 120
    n_cvt: int = 120
    n_batches: int = 10
    xi: float = 0.01
    sigma_w: float | None = None  # None: derive per observation from sensor noise
    sigma_w_floor: float = 1e-3
    resample_trigger: float = 0.5
    ue_height: float = 1.5

    def __post_init__(self):
        if self.n_batches < 1 or self.n_vehicle < self.n_batches or self.n_cvt < self.n_batches:
            raise ValueError("every batch needs at least one particle")
        if self.xi <= 0:
            raise ValueError("xi must be positive")
        if self.sigma_w is not None and self.sigma_w <= 0:
            raise ValueError("sigma_w must be positive")
        if not 0 <= self.resample_trigger <= 1:
            raise ValueError("resample_trigger must lie in [0, 1]")


@dataclass
class SlotResult:
    vehicles: dict[int, np.ndarray]
    cvts: dict[int, np.ndarray]
    iterations: int
    degeneracies: int = 0
    resamples: int = 0
    history: list[dict[int, np.ndarray]] = field(default_factory=list)


def kernel_width(z: MultipathObservation, noise: NoiseModel, config: TpfConfig) -> float:
    if config.sigma_w is not None:
        return config.sigma_w
    s = math.hypot(noise.sigma_d, z.distance * noise.sigma_angle)
    return max(s, config.sigma_w_floor)


def log_kernel(dist2: np.ndarray, sigma: float) -> np.ndarray:
    """Log of a zero-mean Gaussian density evaluated at a distance."""
    return -0.5 * dist2 / sigma**2 - math.log(sigma) - _LOG_SQRT_2PI


def lift(xy: np.ndarray, ue_height: float) -> np.ndarray:
    xy = np.atleast_2d(xy)
    return np.column_stack([xy, np.full(len(xy), ue_height)])


# --- prediction -------------------------------------------------------------


def predict_vehicle(filt: VehicleFilter, v_prev, v_now, dt: float, noise: NoiseModel,
                    rng: np.random.Generator) -> VehicleFilter:
    """Trapezoidal dead reckoning with an independent velocity error per particle."""
    mean_v = 0.5 * (np.asarray(v_prev, dtype=float) + np.asarray(v_now, dtype=float))
    n = filt.n
    n_v = truncated_normal(rng, noise.sigma_v, n, noise.truncation)
    n_w = truncated_normal(rng, noise.sigma_omega, n, noise.truncation)
    heading = math.atan2(mean_v[1], mean_v[0]) if np.any(mean_v) else 0.0
    jitter = n_v[:, None] * np.column_stack([np.cos(heading + n_w), np.sin(heading + n_w)])
    filt.positions = filt.positions + (mean_v[None, :] + jitter) * dt
    return filt


def predict_cvt(filt: CvtFilter) -> CvtFilter:
    """Transmitters are static: the transition is the identity."""
    return filt


def init_vehicle_filter(fix, n: int, sigma: float, truncation: float, rng: np.random.Generator,
                        vid: int = 0) -> VehicleFilter:
    pts = np.asarray(fix, dtype=float)[None, :] + truncated_normal(rng, sigma, (n, 2), truncation)
    return VehicleFilter(pts, np.full(n, 1.0 / n), vid)


def init_cvt_filter(
    sources: Sequence[tuple[VehicleFilter, MultipathObservation]],
    n: int,
    noise: NoiseModel,
    rng: np.random.Generator,
    ue_height: float = 1.5,
    cid: int = 0,
) -> CvtFilter:
    """Seed a CVT cloud by pushing weighted vehicle particles through observations.

    Particles cycle over ``sources``; each draws a vehicle particle by weight
    and perturbs range by ``sigma_d`` along the ray and each transverse axis
    by ``d * sigma_angle``.
    """
    if not sources:
        raise ValueError("need at least one (vehicle filter, observation) pair")
    k = noise.truncation
    pts = np.empty((n, 3))
    owner = np.arange(n) % len(sources)
    for s, (vf, z) in enumerate(sources):
        rows = np.flatnonzero(owner == s)
        pick = rng.choice(vf.n, size=len(rows), p=vf.weights)
        base = lift(vf.positions[pick], ue_height)
        ray = observation_vector(z)
        d = z.distance
        u = ray / d if d > 0 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(u, [0.0, 0.0, 1.0])
        if np.linalg.norm(e1) < 1e-9:
            e1 = np.array([1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(u, e1)
        dr = truncated_normal(rng, noise.sigma_d, len(rows), k)
        t1 = truncated_normal(rng, d * noise.sigma_angle, len(rows), k)
        t2 = truncated_normal(rng, d * noise.sigma_angle, len(rows), k)
        pts[rows] = base + ray + dr[:, None] * u + t1[:, None] * e1 + t2[:, None] * e2
    return CvtFilter(pts, np.full(n, 1.0 / n), cid)


# --- weight updates -----------------------------------------------------------


def cvt_path_loglik(points: np.ndarray, vehicle: VehicleFilter, z: MultipathObservation,
                    sigma: float, ue_height: float) -> np.ndarray:
    """log sum_j w_j G(|r_C - (r_V^j + R(z))|) for each CVT candidate in ``points``."""
    predicted = lift(vehicle.positions, ue_height) + observation_vector(z)
    d2 = ((points[:, None, :] - predicted[None, :, :]) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore"):
        logw = np.log(vehicle.weights)
    return logsumexp(logw[None, :] + log_kernel(d2, sigma), axis=1)


def vehicle_path_loglik(points: np.ndarray, cvt: CvtFilter, z: MultipathObservation,
                        sigma: float) -> np.ndarray:
    """log sum_a w_a G(|r_V - proj(r_C^a - R(z))|) for each vehicle candidate."""
    predicted = (cvt.positions - observation_vector(z))[:, :2]
    d2 = ((points[:, None, :] - predicted[None, :, :]) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore"):
        logw = np.log(cvt.weights)
    return logsumexp(logw[None, :] + log_kernel(d2, sigma), axis=1)


def _reweight(filt: ParticleSet, batch: np.ndarray, loglik: np.ndarray) -> bool:
    """Multiply batch weights by the likelihood, keeping the batch's total mass.

    Returns True when the update degenerated and weights were reset.
    """
    w = filt.weights
    mass = w[batch].sum()
    if mass <= 0:
        return False
    with np.errstate(divide="ignore"):
        lw = np.log(w[batch]) + loglik
    top = np.max(lw)
    if not np.isfinite(top):
        filt.weights = np.full(filt.n, 1.0 / filt.n)
        return True
    shaped = np.exp(lw - top)
    new = w.copy()
    new[batch] = mass * shaped / shaped.sum()
    total = new.sum()
    if not (np.isfinite(total) and total > 0):
        filt.weights = np.full(filt.n, 1.0 / filt.n)
        return True
    filt.weights = new / total
    return False


def update_cvt_batch(
    cvt: CvtFilter,
    batch: np.ndarray,
    observations: Sequence[MultipathObservation],
    vehicles: Mapping[int, VehicleFilter],
    sigmas: Sequence[float],
    ue_height: float = 1.5,
) -> bool:
    if len(batch) == 0 or not observations:
        return False
    pts = cvt.positions[batch]
    ll = np.zeros(len(batch))
    for z, s in zip(observations, sigmas):
        ll += cvt_path_loglik(pts, vehicles[z.vehicle], z, s, ue_height)
    return _reweight(cvt, batch, ll)


def update_vehicle_batch(
    vehicle: VehicleFilter,
    batch: np.ndarray,
    paths: Sequence[tuple[CvtFilter, MultipathObservation, float]],
) -> bool:
    if len(batch) == 0 or not paths:
        return False
    pts = vehicle.positions[batch]
    ll = np.zeros(len(batch))
    for cvt, z, s in paths:
        ll += vehicle_path_loglik(pts, cvt, z, s)
    return _reweight(vehicle, batch, ll)


# --- resampling and estimation -------------------------------------------------


def systematic_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = len(weights)
    u = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, u, side="right").clip(max=n - 1)


def resample(filt: ParticleSet, trigger: float, rng: np.random.Generator) -> bool:
    """Systematic resampling when the effective sample size falls below ``trigger * N``."""
    if filt.ess >= trigger * filt.n:
        return False
    idx = systematic_indices(filt.weights, rng)
    filt.positions = filt.positions[idx]
    filt.weights = np.full(filt.n, 1.0 / filt.n)
    return True


def estimate(filt: ParticleSet) -> np.ndarray:
    return filt.weights @ filt.positions


def random_batches(n: int, n_batches: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Equal-size random partition of ``range(n)``."""
    return [np.sort(b) for b in np.array_split(rng.permutation(n), n_batches)]


# --- one slot -----------------------------------------------------------------


def run_slot(
    vehicles: Mapping[int, VehicleFilter],
    cvts: Mapping[int, CvtFilter],
    associations: Mapping[int, Sequence[tuple[int, int]]],
    observations: Mapping[tuple[int, int], MultipathObservation],
    config: TpfConfig,
    noise: NoiseModel,
    seed: int = 0,
    slot: int = 0,
    keep_history: bool = False,
) -> SlotResult:
    """Interleaved batch updates of all CVT and vehicle filters for one slot.

    Filters are modified in place. Each iteration updates batch ``b`` of
    every associated CVT filter against the current vehicle clouds, then
    batch ``b`` of every vehicle filter against the updated CVT clouds.
    Stops early once no vehicle estimate moves by ``xi`` or more.
    """
    cvt_obs: dict[int, list[MultipathObservation]] = {}
    veh_paths: dict[int, list[tuple[int, MultipathObservation]]] = {m: [] for m in vehicles}
    for u in sorted(associations):
        if u not in cvts:
            continue
        zs = [observations[key] for key in associations[u] if key[0] in vehicles]
        if zs:
            cvt_obs[u] = zs
            for z in zs:
                veh_paths[z.vehicle].append((u, z))
    sig = {z.index: kernel_width(z, noise, config) for zs in cvt_obs.values() for z in zs}

    nb = config.n_batches
    v_batches = {m: random_batches(f.n, nb, substream(seed, "batches", slot, 0, m)) for m, f in vehicles.items()}
    c_batches = {u: random_batches(cvts[u].n, nb, substream(seed, "batches", slot, 1, u)) for u in cvt_obs}

    prev = {m: estimate(f) for m, f in vehicles.items()}
    result = SlotResult({}, {}, 0)
    for b in range(nb):
        for u in sorted(cvt_obs):
            zs = cvt_obs[u]
            result.degeneracies += update_cvt_batch(
                cvts[u], c_batches[u][b], zs, vehicles, [sig[z.index] for z in zs], config.ue_height
            )
            result.resamples += resample(cvts[u], config.resample_trigger, substream(seed, "resample", slot, 1, u, b))
        for m in sorted(vehicles):
            if not veh_paths[m]:
                continue
            paths = [(cvts[u], z, sig[z.index]) for u, z in veh_paths[m]]
            result.degeneracies += update_vehicle_batch(vehicles[m], v_batches[m][b], paths)
            result.resamples += resample(vehicles[m], config.resample_trigger,
                                         substream(seed, "resample", slot, 0, m, b))
        cur = {m: estimate(f) for m, f in vehicles.items()}
        result.iterations = b + 1
        if keep_history:
            result.history.append(cur)
        moved = max((float(np.linalg.norm(cur[m] - prev[m])) for m in cur), default=0.0)
        prev = cur
        if moved < config.xi:
            break
    result.vehicles = {m: estimate(f) for m, f in vehicles.items()}
    result.cvts = {u: estimate(f) for u, f in cvts.items()}
    return result
