"""Error summaries over vehicle and CVT position errors."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


def _errors(samples: Iterable[float]) -> np.ndarray:
    e = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if e.size == 0:
        raise ValueError("no error samples")
    if np.any(e < 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite and non-negative")
    return e


def mae(samples: Iterable[float]) -> float:
    return float(np.mean(_errors(samples)))


def quantile_error(samples: Iterable[float], q: float) -> float:
    """Smallest sample value whose empirical CDF reaches ``q`` (no interpolation)."""
    if not 0 < q < 1:
        raise ValueError("q must lie strictly between 0 and 1")
    e = np.sort(_errors(samples))
    k = max(math.ceil(q * len(e) - 1e-12), 1)
    return float(e[k - 1])


def cdf_table(samples: Iterable[float], edges: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical ``P(error <= edge)`` at each edge."""
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing")
    e = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float))
    if e.size == 0:
        return [(float(x), 0.0) for x in edges]
    frac = np.searchsorted(e, edges, side="right") / e.size
    return [(float(x), float(f)) for x, f in zip(edges, frac)]


def improvement(baseline: float, cooperative: float) -> float:
    """Percentage reduction of ``cooperative`` relative to ``baseline``."""
    if not baseline > 0:
        raise ValueError("baseline must be positive")
    return 100.0 * (baseline - cooperative) / baseline
