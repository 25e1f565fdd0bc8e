"""
Cache manager for design solves.

Monte-Carlo trials of the same grid point solve the same G-optimal design
again and again (every trial starts from the full arm set, and noiseless or
structured instances keep reproducing the same active sets). This module
memoizes those solves so concurrent trial workers can share them.
"""

import hashlib
import threading
from collections import OrderedDict
from typing import Dict, Optional

import numpy as np

try:
    from .models import DesignWeights
except ImportError:
    from models import DesignWeights


class DesignCache:
    """
    Thread-safe LRU cache of DesignWeights keyed by the exact arm matrix and
    solver settings.

    The solver is deterministic, so a hit returns exactly what a fresh solve
    would have returned.
    """

    def __init__(self, max_size: int = 4096):
        """
        Initialize the cache.

        Args:
            max_size: Maximum number of designs kept (default: 4096)
        """
        self.max_size = max_size
        self._cache: "OrderedDict[str, DesignWeights]" = OrderedDict()
        self._lock = threading.Lock()
        self._hits = 0
        self._misses = 0

    @staticmethod
    def make_key(arms: np.ndarray, epsilon: float, max_iter: int) -> str:
        """Digest of the arm matrix bytes, its shape and the solver settings."""
        X = np.ascontiguousarray(arms, dtype=float)
        h = hashlib.sha1(X.tobytes())
        h.update(repr((X.shape, float(epsilon), int(max_iter))).encode())
        return h.hexdigest()

    def get(self, key: str) -> Optional[DesignWeights]:
        """
        Look up a design, marking it most recently used.

        Args:
            key: Key from ``make_key``

        Returns:
            The cached design, or None on a miss
        """
        with self._lock:
            design = self._cache.get(key)
            if design is None:
                self._misses += 1
                return None
            self._cache.move_to_end(key)
            self._hits += 1
            return design

    def set(self, key: str, design: DesignWeights) -> None:
        """Store a design, evicting the least recently used entry when full."""
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
            elif len(self._cache) >= self.max_size:
                self._cache.popitem(last=False)
            self._cache[key] = design

    def clear(self) -> None:
        """Clear all cache entries and counters."""
        with self._lock:
            self._cache.clear()
            self._hits = 0
            self._misses = 0

    def size(self) -> int:
        """Get the number of entries in cache."""
        with self._lock:
            return len(self._cache)

    def get_stats(self) -> Dict[str, float]:
        """
        Get cache statistics.

        Returns:
            Dictionary with entry count, hits, misses and hit rate in percent
        """
        with self._lock:
            lookups = self._hits + self._misses
            return {
                "entries": len(self._cache),
                "max_size": self.max_size,
                "hits": self._hits,
                "misses": self._misses,
                "hit_rate_percent": round(self._hits / lookups * 100, 2) if lookups else 0.0,
            }
