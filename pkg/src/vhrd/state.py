from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SimState:
    """Densities of infected hosts, uninfected and infected vectors at time ``t``."""

    h_i: np.ndarray
    v_u: np.ndarray
    v_i: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.h_i = np.array(self.h_i, dtype=float)
        self.v_u = np.array(self.v_u, dtype=float)
        self.v_i = np.array(self.v_i, dtype=float)
        if not (self.h_i.shape == self.v_u.shape == self.v_i.shape):
            raise ValueError("state components must have equal length")

    @classmethod
    def zeros(cls, n: int, t: float = 0.0) -> "SimState":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), t)

    def fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.h_i, self.v_u, self.v_i

    def distance(self, other: "SimState") -> float:
        """Sup-norm distance over all three components."""
        return float(max(np.abs(a - b).max() for a, b in zip(self.fields(), other.fields())))

    def is_nonnegative(self) -> bool:
        return all(f.min() >= 0 for f in self.fields())
