"""Exact derivative of the forward map and its spectral diagnostics.

Differentiating (h^-2 A + diag(q)) u = f + h^-2 g with respect to q gives the
derivative matrix J = -M^{-1} diag(u), computed column by column through the
cached factorization.  The asymmetry of J is measured, never assumed: the
product of the symmetric M^{-1} with a non-constant diagonal is generally not
symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardSolution, ForwardSystem, MediumField

__all__ = [
    "JacobianMatrix",
    "SpectralReport",
    "jacobian",
    "relative_asymmetry",
    "spectral_report",
    "sigma_growth_fit",
]

#: Dense spectral operations are refused above this dimension.
SVD_DIM_CAP = 4096


@dataclass(frozen=True)
class JacobianMatrix:
    """Derivative matrix of the forward map at a given coefficient."""

    matrix: np.ndarray
    at_q: MediumField

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SpectralReport:
    """Extreme singular values of a derivative matrix and of its inverse.

    The inverse's spectrum is computed independently (not as reciprocals), so
    that sigma_min_inv ~ 1/sigma_max serves as a consistency check.
    """

    dim: int
    sigma_min: float
    sigma_max: float
    sigma_min_inv: float
    sigma_max_inv: float


def jacobian(sys: ForwardSystem, u: ForwardSolution) -> JacobianMatrix:
    """Exact derivative -M^{-1} diag(u) via repeated banded solves."""
    rhs = np.diag(u.values)
    cols = sys.solve_rhs(rhs)
    return JacobianMatrix(matrix=-cols, at_q=sys.q)


def relative_asymmetry(jac: JacobianMatrix) -> float:
    """Frobenius-norm asymmetry |J - J^T| / |J| (zero iff J is symmetric)."""
    j = jac.matrix
    denom = np.linalg.norm(j)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(j - j.T) / denom)


def spectral_report(jac: JacobianMatrix) -> SpectralReport:
    """Full dense SVD of J and of J^{-1}; desk scale only."""
    j = jac.matrix
    if j.shape[0] > SVD_DIM_CAP:
        raise ValueError(f"dimension {j.shape[0]} exceeds dense SVD cap {SVD_DIM_CAP}")
    if not np.all(np.isfinite(j)):
        raise ValueError("derivative matrix contains non-finite entries")
    sv = np.linalg.svd(j, compute_uv=False)
    sv_inv = np.linalg.svd(np.linalg.inv(j), compute_uv=False)
    return SpectralReport(
        dim=j.shape[0],
        sigma_min=float(sv[-1]),
        sigma_max=float(sv[0]),
        sigma_min_inv=float(sv_inv[-1]),
        sigma_max_inv=float(sv_inv[0]),
    )


def sigma_growth_fit(reports: list[SpectralReport]) -> dict[str, float]:
    """Least-squares slope of log sigma_max(J^{-1}) against log d.

    The slope estimates the polynomial degree of ill-posedness; for the
    medium problem it should sit near 1 (the inverse spectrum grows like d).
    """
    if len(reports) < 3:
        raise ValueError("need at least 3 reports to fit a growth exponent")
    dims = np.array([r.dim for r in reports], dtype=float)
    if np.unique(dims).size < 3:
        raise ValueError("need at least 3 distinct dimensions")
    sig = np.array([r.sigma_max_inv for r in reports], dtype=float)
    slope, intercept = np.polyfit(np.log(dims), np.log(sig), 1)
    return {"slope": float(slope), "intercept": float(intercept)}
