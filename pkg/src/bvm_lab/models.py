"""Forward-map wrappers shared by the audit, posterior and diagnostic layers.

A forward model maps a coefficient vector inside a box to an observation
vector of the same length and exposes its exact derivative.  The PDE-backed
model is the object of study; the linear model is a test double for which
every downstream quantity has a closed form.
"""

from __future__ import annotations

import numpy as np

from .forward import Bounds, GridSpec, MediumField, ProblemData, assemble, solve
from .jacobian import jacobian

__all__ = ["PdeForwardModel", "LinearForwardModel"]


class PdeForwardModel:
    """Forward map q -> u of the discretized medium problem on a fixed grid."""

    def __init__(self, grid: GridSpec, data: ProblemData, bounds: Bounds):
        self.grid = grid
        self.data = data
        self.bounds = bounds
        self.dim = grid.dim

    def _system(self, q: np.ndarray):
        return assemble(self.grid, MediumField(q, self.bounds), self.data)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return solve(self._system(np.asarray(q, dtype=float)), self.data).values

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        sys = self._system(np.asarray(q, dtype=float))
        u = solve(sys, self.data)
        return jacobian(sys, u).matrix


class LinearForwardModel:
    """Affine map q -> A q + b with exact derivative A (oracle substitute)."""

    def __init__(self, matrix: np.ndarray, offset: np.ndarray | None = None,
                 bounds: Bounds = Bounds(0.0, 1e12)):
        self.matrix = np.asarray(matrix, dtype=float)
        self.dim = self.matrix.shape[0]
        self.offset = (
            np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        )
        self.bounds = bounds

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(q, dtype=float) + self.offset

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        return self.matrix.copy()
