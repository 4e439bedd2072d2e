"""The common-virtual-transmitter cluster record shared by clustering and map upkeep."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CvtCluster:
    """A map feature: member transmitter samples plus this slot's index vector.

    ``members`` maps vehicle id to its most recent ``window`` samples
    ``(slot, path, vt)``. ``index[m]`` is vehicle m's 1-based path index that
    observes this cluster in the current slot, or 0.
    """

    id: int
    index: np.ndarray
    members: dict[int, deque] = field(default_factory=dict)
    stale_slots: int = 0
    window: int = 20

    @classmethod
    def standalone(cls, cid: int, n_vehicles: int, vehicle: int, path: int, vt, slot: int = 0,
                   window: int = 20) -> "CvtCluster":
        c = cls(cid, np.zeros(n_vehicles, dtype=int), window=window)
        c.add(vehicle, path, vt, slot)
        return c

    def add(self, vehicle: int, path: int, vt, slot: int = 0) -> None:
        self.members.setdefault(vehicle, deque(maxlen=self.window)).append(
            (slot, path, np.asarray(vt, dtype=float))
        )
        self.index[vehicle] = path

    def samples(self) -> np.ndarray:
        pts = [s[2] for dq in self.members.values() for s in dq]
        return np.array(pts) if pts else np.empty((0, 3))

    @property
    def position(self) -> np.ndarray:
        return self.samples().mean(axis=0)

    @property
    def sample_count(self) -> int:
        return sum(len(dq) for dq in self.members.values())

    @property
    def member_paths(self) -> set[tuple[int, int]]:
        return {(m, s[1]) for m, dq in self.members.items() for s in dq}

    @property
    def observed(self) -> bool:
        return bool(np.any(self.index))

    def absorb(self, other: "CvtCluster") -> None:
        """Union of member samples and sum of index vectors."""
        for m, dq in other.members.items():
            mine = self.members.setdefault(m, deque(maxlen=self.window))
            merged = sorted(list(mine) + list(dq), key=lambda s: s[0])
            mine.clear()
            mine.extend(merged)
        self.index = self.index + other.index
        self.stale_slots = min(self.stale_slots, other.stale_slots)
