"""Affinity propagation over a cloud of virtual-transmitter positions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cvt import CvtCluster


def log_similarity(a, b) -> np.ndarray:
    """``-ln(|a - b| + 1)``, broadcasting over leading axes."""
    return -np.log1p(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), axis=-1))


def build_similarity(points, preference: float | str = "median") -> np.ndarray:
    """Pairwise log-distance similarities with ``preference`` on the diagonal.

    ``preference`` is a number, or ``"median"`` / ``"min"`` of the
    off-diagonal entries.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 1:
        raise ValueError("need at least one point")
    s = log_similarity(pts[:, None, :], pts[None, :, :])
    n = len(pts)
    if isinstance(preference, str):
        off = s[~np.eye(n, dtype=bool)]
        if off.size == 0:
            pref = 0.0
        elif preference == "median":
            pref = float(np.median(off))
        elif preference == "min":
            pref = float(off.min())
        else:
            raise ValueError(f"unknown preference policy {preference!r}")
    else:
        pref = float(preference)
    np.fill_diagonal(s, pref)
    return s


@dataclass
class ClusterAssignment:
    exemplars: np.ndarray  # exemplar index per point
    iterations: int

    @property
    def clusters(self) -> list[list[int]]:
        groups: dict[int, list[int]] = {}
        for p, e in enumerate(self.exemplars):
            groups.setdefault(int(e), []).append(p)
        return [groups[e] for e in sorted(groups)]

    @property
    def n_clusters(self) -> int:
        return len(set(self.exemplars.tolist()))


def propagate(
    sim: np.ndarray,
    max_iter: int = 1000,
    damping: float = 0.9,
    convergence_iter: int = 50,
    tie_break: float = 1e-12,
    msg_tol: float = 1e-6,
) -> ClusterAssignment:
    """Responsibility/availability message passing with damping.

    Damping blends ``damping * old + (1 - damping) * new``. Stops after
    ``max_iter`` sweeps or once a non-empty exemplar set has held for
    ``convergence_iter`` sweeps with messages moving by at most ``msg_tol``
    (relative to the largest similarity). ``tie_break`` scales a fixed-seed
    jitter on the similarities so symmetric pairs can settle on one exemplar.
    """
    s = np.asarray(sim, dtype=float)
    n = s.shape[0]
    if n == 1:
        return ClusterAssignment(np.zeros(1, dtype=int), 0)
    if not 0 <= damping < 1:
        raise ValueError("damping must lie in [0, 1)")
    off = s[~np.eye(n, dtype=bool)]
    if np.ptp(off) == 0 and np.diag(s).max() <= off[0]:
        # All points equally similar and no point prefers itself (e.g. all
        # coincident): one cluster around the highest preference.
        e = int(np.argmax(np.diag(s)))
        return ClusterAssignment(np.full(n, e, dtype=int), 0)
    scale_s = max(float(np.abs(s).max()), 1.0)
    if tie_break > 0:
        noise = tie_break * scale_s * np.random.default_rng(0).standard_normal(s.shape)
        # Preferences only ever shrink, so exact ties favour fewer clusters.
        np.fill_diagonal(noise, -np.abs(np.diag(noise)))
        s = s + noise
    r = np.zeros_like(s)
    a = np.zeros_like(s)
    rows = np.arange(n)
    last = None
    stable = 0
    it = 0
    for it in range(1, max_iter + 1):
        # responsibilities: s(p,q) - max_{q' != q} (a + s)(p,q')
        as_ = a + s
        first = np.argmax(as_, axis=1)
        top = as_[rows, first]
        as_[rows, first] = -np.inf
        second = as_.max(axis=1)
        r_new = s - top[:, None]
        r_new[rows, first] = s[rows, first] - second
        r_old, a_old = r, a
        r = damping * r + (1 - damping) * r_new

        # availabilities
        rp = np.maximum(r, 0)
        rp[rows, rows] = r[rows, rows]
        col = rp.sum(axis=0)
        a_new = col[None, :] - rp
        diag = a_new[rows, rows].copy()
        a_new = np.minimum(a_new, 0)
        a_new[rows, rows] = diag
        a = damping * a + (1 - damping) * a_new

        # Converged once a non-empty exemplar set has held and the messages
        # have settled; during the damped transient a spurious set can persist.
        centers = (np.diag(a) + np.diag(r)) > 0
        settled = max(np.abs(r - r_old).max(), np.abs(a - a_old).max()) <= msg_tol * scale_s
        if last is not None and centers.any() and settled and np.array_equal(centers, last):
            stable += 1
            if stable >= convergence_iter:
                break
        else:
            stable = 0
        last = centers
    return ClusterAssignment(_consistent(np.argmax(a + r, axis=1), s), it)


def _consistent(ex: np.ndarray, s: np.ndarray) -> np.ndarray:
    # Points whose chosen exemplar is not itself an exemplar move to the most similar one.
    n = len(ex)
    centers = np.flatnonzero(ex == np.arange(n))
    if centers.size == 0:
        centers = np.array([int(np.argmax(np.diag(s)))])
    out = ex.copy()
    for p in range(n):
        if out[p] not in centers:
            out[p] = centers[np.argmax(s[p, centers])]
    out[centers] = centers
    return out


def clusters_to_cvts(
    assignment: ClusterAssignment,
    positions,
    path_indices: Sequence[tuple[int, int]],
    n_vehicles: int,
    first_id: int = 0,
    slot: int = 0,
    window: int = 20,
) -> list[CvtCluster]:
    """Turn an exemplar assignment into clusters, one path per vehicle each.

    When a vehicle has several paths in one group, the path whose transmitter
    lies nearest the group mean stays and the rest become standalone clusters.
    """
    pts = np.asarray(positions, dtype=float)
    out: list[CvtCluster] = []
    nid = first_id
    ejected: list[int] = []
    for group in assignment.clusters:
        mean = pts[group].mean(axis=0)
        keep: dict[int, int] = {}
        for p in group:
            m = path_indices[p][0]
            if m not in keep:
                keep[m] = p
                continue
            if np.linalg.norm(pts[p] - mean) < np.linalg.norm(pts[keep[m]] - mean):
                ejected.append(keep[m])
                keep[m] = p
            else:
                ejected.append(p)
        c = CvtCluster(nid, np.zeros(n_vehicles, dtype=int), window=window)
        for p in sorted(keep.values()):
            m, pm = path_indices[p]
            c.add(m, pm, pts[p], slot)
        out.append(c)
        nid += 1
    for p in sorted(ejected):
        m, pm = path_indices[p]
        out.append(CvtCluster.standalone(nid, n_vehicles, m, pm, pts[p], slot, window))
        nid += 1
    return out
