"""CVT formation and per-slot cluster upkeep.

A slot's transmitter estimates either join an existing cluster, start a
standalone one, or (on the very first slot) get grouped by affinity
propagation. Clusters that end up close together with non-overlapping
vehicles are merged; clusters nobody observes for ``t_d`` slots are dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import apcluster
from .channel import MultipathObservation, vt_from_observation
from .cvt import CvtCluster

PAPER_THRESHOLD = -2.36


@dataclass(frozen=True)
class MaintenanceConfig:
    assoc_threshold: float = PAPER_THRESHOLD
    merge_threshold: float = PAPER_THRESHOLD
    delete_after: int = 10
    window: int = 20
    preference: float | str = "median"
    ap_iterations: int = 1000
    ap_convergence: int = 50
    ap_damping: float = 0.9

    def __post_init__(self):
        if self.assoc_threshold > 0 or self.merge_threshold > 0:
            raise ValueError("association and merge thresholds must be <= 0")
        if self.delete_after < 1:
            raise ValueError("delete_after must be at least one slot")
        if self.window < 1:
            raise ValueError("window must be at least one sample")


def association_quality(cluster_position, vt) -> float:
    return float(apcluster.log_similarity(cluster_position, vt))


def threshold_radius(threshold: float) -> float:
    """Distance at which a log-distance quality equals ``threshold``."""
    return math.expm1(-threshold)


def compute_thresholds(max_range: float, n: float, sigma_d: float, sigma_angle: float) -> tuple[float, float]:
    """Association and merge thresholds from a near-worst transmitter error.

    The worst case stretches the range by ``n*sigma_d`` and rotates it by
    ``n*sigma_angle`` at ``max_range``.
    """
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    far = max_range + n * sigma_d
    eps2 = far**2 + max_range**2 - 2 * max_range * far * math.cos(n * sigma_angle)
    eps = math.sqrt(max(eps2, 0.0))
    level = -math.log1p(eps)
    return level, level


@dataclass
class NewVt:
    vehicle: int
    path: int
    position: np.ndarray


def _next_id(clusters: Sequence[CvtCluster], start: int) -> int:
    return max([start] + [c.id + 1 for c in clusters])


def associate_new_vts(
    clusters: list[CvtCluster],
    new_vts: Sequence[NewVt],
    assoc_threshold: float,
    n_vehicles: int,
    next_id: int = 0,
    slot: int = 0,
    window: int = 20,
) -> tuple[list[CvtCluster], list[CvtCluster]]:
    """Attach each new transmitter to its best cluster or spawn a standalone.

    Candidates are handled in descending best-quality order; a cluster takes
    at most one path per vehicle per slot, and exact quality ties go to the
    lowest cluster id. Returns ``(clusters, spawned)``; ``clusters`` already
    contains the spawned ones.
    """
    existing = sorted(clusters, key=lambda c: c.id)
    spawned: list[CvtCluster] = []
    if existing:
        centers = np.array([c.position for c in existing])
    candidates = []
    for k, nv in enumerate(new_vts):
        if existing:
            q = apcluster.log_similarity(centers, nv.position)
            u = int(np.argmax(q))  # first max -> lowest id
            candidates.append((float(q[u]), k, u))
        else:
            candidates.append((-math.inf, k, -1))
    candidates.sort(key=lambda t: (-t[0], t[1]))
    nid = _next_id(clusters, next_id)
    for q, k, u in candidates:
        nv = new_vts[k]
        if u >= 0 and q >= assoc_threshold and existing[u].index[nv.vehicle] == 0:
            existing[u].add(nv.vehicle, nv.path, nv.position, slot)
            continue
        c = CvtCluster.standalone(nid, n_vehicles, nv.vehicle, nv.path, nv.position, slot, window)
        spawned.append(c)
        nid += 1
    return existing + spawned, spawned


def _merge_round(cl: list[CvtCluster], merge_threshold: float, absorbed: dict[int, int]) -> list[CvtCluster]:
    n = len(cl)
    if n < 2:
        return cl
    pos = np.array([c.position for c in cl])
    q = apcluster.log_similarity(pos[:, None, :], pos[None, :, :])
    iu, ju = np.triu_indices(n, k=1)
    order = sorted(range(len(iu)), key=lambda k: (-q[iu[k], ju[k]], iu[k], ju[k]))
    used = np.zeros(n, dtype=bool)
    gone = set()
    for k in order:
        i, j = int(iu[k]), int(ju[k])
        if q[i, j] < merge_threshold:
            break
        if used[i] or used[j]:
            continue
        if np.any(cl[i].index * cl[j].index):
            continue
        a, b = (i, j) if (cl[i].sample_count, -cl[i].id) >= (cl[j].sample_count, -cl[j].id) else (j, i)
        cl[a].absorb(cl[b])
        absorbed[cl[b].id] = cl[a].id
        gone.add(cl[b].id)
        used[i] = used[j] = True
    return [c for c in cl if c.id not in gone]


def merge_clusters(clusters: list[CvtCluster], merge_threshold: float) -> tuple[list[CvtCluster], dict[int, int]]:
    """Greedy best-first merging of close clusters with disjoint index vectors.

    Within a round each cluster takes part in at most one merge; rounds repeat
    until no close, disjoint pair is left. The survivor is the cluster with
    more samples (ties: lower id). Returns the clusters and a map
    ``absorbed id -> final survivor id``.
    """
    cl = sorted(clusters, key=lambda c: c.id)
    absorbed: dict[int, int] = {}
    while True:
        before = len(cl)
        cl = _merge_round(cl, merge_threshold, absorbed)
        if len(cl) == before:
            break
    # Chains (a into b, b into c) resolve to the final survivor.
    for k in absorbed:
        v = absorbed[k]
        while v in absorbed:
            v = absorbed[v]
        absorbed[k] = v
    return cl, absorbed


def delete_stale(clusters: list[CvtCluster], delete_after: int) -> tuple[list[CvtCluster], list[int]]:
    """Advance staleness counters and drop clusters unobserved for ``delete_after`` slots."""
    keep, dropped = [], []
    for c in clusters:
        c.stale_slots = 0 if c.observed else c.stale_slots + 1
        if c.stale_slots >= delete_after:
            dropped.append(c.id)
        else:
            keep.append(c)
    return keep, dropped


@dataclass
class MaintenanceReport:
    spawned: list[int] = field(default_factory=list)
    merged: dict[int, int] = field(default_factory=dict)
    deleted: list[int] = field(default_factory=list)


class CvtMap:
    """Owns the cluster store of one simulation run."""

    def __init__(self, n_vehicles: int, config: MaintenanceConfig | None = None):
        self.n_vehicles = n_vehicles
        self.config = config or MaintenanceConfig()
        self.clusters: list[CvtCluster] = []
        self.initialized = False
        self._next_id = 0

    def by_id(self) -> dict[int, CvtCluster]:
        return {c.id: c for c in self.clusters}

    def maintain(
        self,
        vehicle_positions,
        observations: Sequence[MultipathObservation],
        slot: int = 0,
    ) -> MaintenanceReport:
        """One slot of upkeep given 3D vehicle estimates and this slot's observations."""
        cfg = self.config
        report = MaintenanceReport()
        for c in self.clusters:
            c.index = np.zeros(self.n_vehicles, dtype=int)
        vts = [
            NewVt(z.vehicle, z.path, vt_from_observation(vehicle_positions[z.vehicle], z))
            for z in observations
        ]
        if not self.initialized and vts:
            pts = np.array([v.position for v in vts])
            sim = apcluster.build_similarity(pts, cfg.preference)
            assignment = apcluster.propagate(sim, cfg.ap_iterations, cfg.ap_damping, cfg.ap_convergence)
            self.clusters = apcluster.clusters_to_cvts(
                assignment, pts, [(v.vehicle, v.path) for v in vts], self.n_vehicles,
                first_id=self._next_id, slot=slot, window=cfg.window,
            )
            report.spawned = [c.id for c in self.clusters]
            self._next_id = _next_id(self.clusters, self._next_id)
            self.initialized = True
            return report
        if vts:
            self.clusters, spawned = associate_new_vts(
                self.clusters, vts, cfg.assoc_threshold, self.n_vehicles, self._next_id, slot, cfg.window
            )
            report.spawned = [c.id for c in spawned]
            self._next_id = _next_id(self.clusters, self._next_id)
        self.clusters, report.merged = merge_clusters(self.clusters, cfg.merge_threshold)
        self.clusters, report.deleted = delete_stale(self.clusters, cfg.delete_after)
        # A cluster spawned and absorbed in the same slot never reaches the filter stage.
        report.spawned = [i for i in report.spawned if i not in report.merged]
        return report

    def associations(self) -> dict[int, list[tuple[int, int]]]:
        """``cluster id -> [(vehicle, path), ...]`` for the current slot."""
        out = {}
        for c in self.clusters:
            pairs = [(m, int(p)) for m, p in enumerate(c.index) if p]
            if pairs:
                out[c.id] = pairs
        return out
