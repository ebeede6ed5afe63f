from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-site <S^z_j> of one trajectory on a grid of step indices."""

    steps: np.ndarray
    tau: float
    mags: np.ndarray  # (n_times, L)
    drift: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.tau
