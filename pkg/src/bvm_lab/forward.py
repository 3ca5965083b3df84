"""Finite-difference forward solver for -laplace(u) + q*u = f on the unit square.

The domain is discretized with the classic five-point stencil on a uniform
N x N subdivision (mesh size h = 1/N).  Unknowns live on the (N-1)^2 interior
nodes, ordered row-wise: node (i, j) with 1 <= i, j <= N-1 maps to the flat
index k = (j-1)*(N-1) + (i-1), i.e. i varies fastest.  Dirichlet data enters
the right-hand side through a boundary-contribution vector.

The assembled operator is M = h^-2 * A + diag(q), where A is the block
tridiagonal Laplacian stencil matrix (tridiag(-1, 4, -1) blocks on the
diagonal, -I on the off-diagonals).  M is symmetric positive definite and is
factorized once per coefficient via a banded Cholesky decomposition, which is
then reused for every right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded, cholesky_banded

__all__ = [
    "Bounds",
    "GridSpec",
    "MediumField",
    "ProblemData",
    "ForwardSystem",
    "ForwardSolution",
    "MaxPrincipleReport",
    "assemble",
    "solve",
    "max_principle_check",
    "eigenvalues_of_A",
    "laplacian_matrix",
    "boundary_vector_stencil",
    "boundary_vector_rowwise",
]

#: Relative residual tolerance enforced on every linear solve.
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class Bounds:
    """Componentwise box [lo, hi] for admissible coefficient values."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo <= self.hi < np.inf):
            raise ValueError(f"invalid bounds [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, values: np.ndarray, margin: float = 0.0) -> bool:
        values = np.asarray(values)
        return bool(
            np.all(values >= self.lo + margin) and np.all(values <= self.hi - margin)
        )

    def sample_uniform(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=size)


DEFAULT_BOUNDS = Bounds(0.1, 10.0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform subdivision of the unit square.

    ``n_sub`` is the number of mesh intervals per side (N), so the mesh size
    is h = 1/N and there are d = (N-1)^2 interior nodes.
    """

    n_sub: int

    def __post_init__(self) -> None:
        if self.n_sub < 2:
            raise ValueError("grid needs at least 2 subdivisions per side")

    @property
    def h(self) -> float:
        return 1.0 / self.n_sub

    @property
    def m(self) -> int:
        """Interior nodes per side, N - 1."""
        return self.n_sub - 1

    @property
    def dim(self) -> int:
        """Total number of interior nodes, d = (N-1)^2."""
        return self.m * self.m

    def flat_index(self, i: int, j: int) -> int:
        """Row-wise flat index of interior node (i, j), 1-based node indices."""
        if not (1 <= i <= self.m and 1 <= j <= self.m):
            raise IndexError(f"({i}, {j}) is not an interior node for N={self.n_sub}")
        return (j - 1) * self.m + (i - 1)

    def node_coords(self, i: int, j: int) -> tuple[float, float]:
        return (i * self.h, j * self.h)

    def interior_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of all interior nodes in flat (row-wise) order."""
        idx = np.arange(1, self.n_sub)
        x, y = np.meshgrid(idx * self.h, idx * self.h, indexing="xy")
        return x.ravel(), y.ravel()


@dataclass(frozen=True)
class MediumField:
    """Coefficient vector on the interior grid, constrained to a box."""

    values: np.ndarray
    bounds: Bounds = DEFAULT_BOUNDS

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", values)
        if not self.bounds.contains(values):
            raise ValueError(
                f"coefficient values outside [{self.bounds.lo}, {self.bounds.hi}]"
            )

    @property
    def dim(self) -> int:
        return self.values.size

    @staticmethod
    def constant(grid: GridSpec, value: float, bounds: Bounds = DEFAULT_BOUNDS) -> "MediumField":
        return MediumField(np.full(grid.dim, float(value)), bounds)

    @staticmethod
    def from_function(
        grid: GridSpec, fn: Callable[[float, float], float], bounds: Bounds = DEFAULT_BOUNDS
    ) -> "MediumField":
        x, y = grid.interior_xy()
        return MediumField(np.vectorize(fn)(x, y).astype(float), bounds)


@dataclass(frozen=True)
class ProblemData:
    """Source vector and boundary-contribution vector for one grid.

    ``g_vec`` holds, for each interior node, the sum of the Dirichlet values
    at its boundary neighbours; it is zero at interior nodes that touch no
    boundary node.  ``data_positive`` records whether all sampled source and
    boundary values were strictly positive (the hypothesis under which the
    discrete maximum principle applies).
    """

    f_vec: np.ndarray
    g_vec: np.ndarray
    data_positive: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "f_vec", np.asarray(self.f_vec, dtype=float).ravel())
        object.__setattr__(self, "g_vec", np.asarray(self.g_vec, dtype=float).ravel())
        if self.f_vec.shape != self.g_vec.shape:
            raise ValueError("f_vec and g_vec must have the same length")

    @staticmethod
    def from_functions(
        grid: GridSpec,
        f_fn: Callable[[float, float], float],
        g_fn: Callable[[float, float], float],
    ) -> "ProblemData":
        x, y = grid.interior_xy()
        f_vec = np.vectorize(f_fn)(x, y).astype(float)
        g_vec, g_samples = boundary_vector_stencil(grid, g_fn, return_samples=True)
        positive = bool(np.all(f_vec > 0.0) and np.all(g_samples > 0.0))
        return ProblemData(f_vec, g_vec, positive)

    @staticmethod
    def constant(grid: GridSpec, f_value: float = 1.0, g_value: float = 1.0) -> "ProblemData":
        return ProblemData.from_functions(grid, lambda x, y: f_value, lambda x, y: g_value)


def boundary_vector_stencil(
    grid: GridSpec,
    g_fn: Callable[[float, float], float],
    return_samples: bool = False,
):
    """Boundary-contribution vector assembled directly from the stencil.

    Each interior node (i, j) receives the Dirichlet value of every boundary
    node among its four stencil neighbours; corner-adjacent nodes therefore
    combine two boundary values.
    """
    N, m, h = grid.n_sub, grid.m, grid.h
    g_vec = np.zeros(grid.dim)
    samples = []

    def g_at(i: int, j: int) -> float:
        v = float(g_fn(i * h, j * h))
        samples.append(v)
        return v

    for j in range(1, N):
        for i in range(1, N):
            k = grid.flat_index(i, j)
            total = 0.0
            if i == 1:
                total += g_at(0, j)
            if i == m:
                total += g_at(N, j)
            if j == 1:
                total += g_at(i, 0)
            if j == m:
                total += g_at(i, N)
            g_vec[k] = total
    if return_samples:
        return g_vec, np.array(samples)
    return g_vec


def boundary_vector_rowwise(grid: GridSpec, g_fn: Callable[[float, float], float]) -> np.ndarray:
    """Boundary-contribution vector written out block by block.

    The classic display of this vector lists a first block whose end entries
    combine two boundary values and whose middle entries run along one edge,
    then middle blocks with a single boundary value at each end, then a
    mirrored last block.  Under the row-wise index k = (j-1)*(N-1) + (i-1)
    this places the edge-running entries along the first grid coordinate,
    which is the transpose of the stencil assembly; the two agree exactly
    whenever g(x, y) == g(y, x).  Kept as an independent cross-check of
    :func:`boundary_vector_stencil`.
    """
    N, m, h = grid.n_sub, grid.m, grid.h
    if N < 3:
        raise ValueError("block layout needs N >= 3 (blocks overlap for N=2)")

    def g_at(i: int, j: int) -> float:
        return float(g_fn(i * h, j * h))

    blocks = []
    # First block: two-value corners, middle entries along an edge.
    first = [g_at(0, 1) + g_at(1, 0)]
    first += [g_at(0, t) for t in range(2, m)]
    first += [g_at(0, m) + g_at(1, N)]
    blocks.append(first)
    # Middle blocks: single boundary value at each end, zeros between.
    for b in range(2, m):
        middle = [g_at(b, 0)] + [0.0] * (m - 2) + [g_at(b, N)]
        blocks.append(middle)
    # Last block, mirroring the first.
    last = [g_at(m, 0) + g_at(N, 1)]
    last += [g_at(N, t) for t in range(2, m)]
    last += [g_at(N, m) + g_at(m, N)]
    blocks.append(last)
    return np.array([entry for block in blocks for entry in block])


@lru_cache(maxsize=64)
def _laplacian_csr(n_sub: int) -> sp.csr_matrix:
    m = n_sub - 1
    if m == 1:
        return sp.csr_matrix(np.array([[4.0]]))
    inner = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(m, m))
    coupling = sp.diags([-1.0, -1.0], [-1, 1], shape=(m, m))
    return (sp.kron(sp.eye(m), inner) + sp.kron(coupling, sp.eye(m))).tocsr()


def laplacian_matrix(grid: GridSpec) -> sp.csr_matrix:
    """Block-tridiagonal five-point Laplacian stencil matrix A (without h^-2)."""
    return _laplacian_csr(grid.n_sub).copy()


@lru_cache(maxsize=64)
def _laplacian_banded(n_sub: int) -> np.ndarray:
    """Upper banded (scipy ``cholesky_banded`` layout) storage of A."""
    grid = GridSpec(n_sub)
    a = _laplacian_csr(n_sub)
    bw = min(grid.m, grid.dim - 1)
    ab = np.zeros((bw + 1, grid.dim))
    for k in range(bw + 1):
        ab[bw - k, k:] = a.diagonal(k)
    ab.setflags(write=False)
    return ab


def _banded_symv(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Product of a symmetric banded matrix (upper storage) with a vector."""
    bw = ab.shape[0] - 1
    y = ab[bw] * x
    for k in range(1, bw + 1):
        band = ab[bw - k, k:]
        y[:-k] += band * x[k:]
        y[k:] += band * x[:-k]
    return y


class ForwardSystem:
    """Assembled operator M = h^-2 A + diag(q) with a cached factorization.

    Instances are immutable after construction and safe to share across
    threads for concurrent solves.
    """

    def __init__(self, grid: GridSpec, q: MediumField, ab: np.ndarray):
        self.grid = grid
        self.q = q
        self._ab = ab
        self._cb = cholesky_banded(ab, lower=False)

    @property
    def matrix(self) -> sp.csr_matrix:
        """Sparse form of M (built on demand; intended for inspection/tests)."""
        h2inv = self.grid.n_sub**2
        return (
            h2inv * _laplacian_csr(self.grid.n_sub)
            + sp.diags(self.q.values, 0, format="csr")
        ).tocsr()

    def solve_rhs(self, rhs: np.ndarray) -> np.ndarray:
        """Solve M x = rhs via the cached Cholesky factor; checks the residual."""
        x = cho_solve_banded((self._cb, False), rhs)
        if rhs.ndim == 1:
            residual = np.linalg.norm(_banded_symv(self._ab, x) - rhs)
            if residual > RESIDUAL_RTOL * (1.0 + np.linalg.norm(rhs)):
                raise FloatingPointError(
                    f"linear solve residual {residual:.3e} exceeds tolerance"
                )
        return x


@dataclass(frozen=True)
class ForwardSolution:
    """Discrete solution values on the interior grid (row-wise order)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).ravel())


@dataclass(frozen=True)
class MaxPrincipleReport:
    min_value: float
    max_value: float
    passed: bool
    data_positive: bool


def assemble(grid: GridSpec, q: MediumField, data: ProblemData) -> ForwardSystem:
    """Assemble M = h^-2 A + diag(q) and factorize it.

    Raises ``ValueError`` on dimension mismatch; bounds membership is enforced
    by :class:`MediumField` itself.
    """
    if q.dim != grid.dim:
        raise ValueError(f"coefficient length {q.dim} != grid dimension {grid.dim}")
    if data.f_vec.size != grid.dim:
        raise ValueError(f"data length {data.f_vec.size} != grid dimension {grid.dim}")
    ab = np.array(_laplacian_banded(grid.n_sub)) * float(grid.n_sub**2)
    ab[-1] += q.values
    return ForwardSystem(grid, q, ab)


def solve(sys: ForwardSystem, data: ProblemData) -> ForwardSolution:
    """Solve M u = f + h^-2 g for the assembled system; defines the forward map."""
    rhs = data.f_vec + float(sys.grid.n_sub**2) * data.g_vec
    return ForwardSolution(sys.solve_rhs(rhs))


def max_principle_check(u: ForwardSolution, data: ProblemData) -> MaxPrincipleReport:
    """Record solution bounds; for positive data the minimum must stay positive.

    Pure diagnostic: when the data carry nonpositive values the check still
    runs and flags the violated hypothesis instead of raising.
    """
    min_u = float(np.min(u.values))
    max_u = float(np.max(u.values))
    return MaxPrincipleReport(
        min_value=min_u,
        max_value=max_u,
        passed=min_u > 0.0,
        data_positive=data.data_positive,
    )


def eigenvalues_of_A(grid: GridSpec) -> np.ndarray:
    """Analytic eigenvalues of the stencil matrix A, sorted ascending.

    lambda_{i,j} = 2*(2 - cos(i*pi/N) - cos(j*pi/N)) for i, j = 1..N-1; used
    as an oracle against numerically computed spectra of the assembled A.
    """
    N = grid.n_sub
    angles = np.cos(np.arange(1, N) * np.pi / N)
    lam = 2.0 * (2.0 - angles[:, None] - angles[None, :])
    return np.sort(lam.ravel())
