"""Seeded random streams.

Every consumer gets its own generator derived from ``(seed, purpose, *keys)``
so results never depend on the order in which streams are drawn from.
"""
from __future__ import annotations

import zlib

import numpy as np

# Stable integer codes per purpose; never reorder.
_PURPOSES = {
    "gps": 1,
    "observe": 2,
    "motion": 3,
    "predict": 4,
    "cvt_init": 5,
    "batches": 6,
    "resample": 7,
}


def _code(purpose: str) -> int:
    return _PURPOSES.get(purpose) or zlib.crc32(purpose.encode())


def substream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_code(purpose), *(int(k) for k in keys)))
    return np.random.default_rng(ss)


def truncated_normal(rng: np.random.Generator, sigma, size=None, truncation: float = 2.0) -> np.ndarray:
    """Zero-mean normal samples rejected and redrawn outside ``±truncation*sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    shape = sigma.shape if size is None else np.broadcast_shapes(sigma.shape, tuple(np.atleast_1d(size)))
    sig = np.broadcast_to(sigma, shape)
    out = np.asarray(rng.standard_normal(shape), dtype=float)
    bad = np.abs(out) > truncation
    while np.any(bad):
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > truncation
    return out * sig
