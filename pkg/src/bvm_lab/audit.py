"""Randomized audits of the forward map's stability and linearization error.

The theory behind the Gaussian posterior approximation rests on two-sided
Lipschitz stability of the forward map over the admissible box and on a
quadratic bound for its linearization remainder.  Both are universally
quantified statements; at desk scale the honest substitute is a seeded,
worst-case-seeking random audit.  Every report therefore carries a
``sampled_not_exhaustive`` flag: measured constants, not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import Bounds, ProblemData
from .models import PdeForwardModel

__all__ = ["AuditReport", "audit_stability", "audit_linearization"]


@dataclass(frozen=True)
class AuditReport:
    """Empirical stability/linearization constants over sampled pairs."""

    dim: int
    n_pairs: int
    #: max over pairs of |G(q1)-G(q2)| / |q1-q2| (forward Lipschitz constant).
    a2_lower: float
    #: max over pairs of |q1-q2| / (d * |G(q1)-G(q2)|) (inverse stability / d).
    a2_upper: float
    #: max over pairs of |G(q1)-G(q2)-J(q2)(q1-q2)| / |q1-q2|^2.
    a3_ratio: float
    #: log-log slope of the linearization residual vs step size (nan until
    #: measured by :func:`audit_linearization`).
    a3_slope: float
    sampled_not_exhaustive: bool = True


def _as_model(model_or_grid, data: ProblemData | None, bounds: Bounds | None):
    if data is not None:
        bounds = bounds if bounds is not None else Bounds(0.1, 10.0)
        return PdeForwardModel(model_or_grid, data, bounds)
    return model_or_grid


def audit_stability(
    grid_or_model,
    data: ProblemData | None = None,
    n_pairs: int = 50,
    rng_seed: int = 0,
    bounds: Bounds | None = None,
) -> AuditReport:
    """Sample coefficient pairs uniformly in the box and record stability ratios.

    Degenerate pairs (q1 == q2) are resampled so no ratio divides by zero.
    Deterministic under a fixed seed.
    """
    if n_pairs < 10:
        raise ValueError("need at least 10 pairs for a meaningful audit")
    model = _as_model(grid_or_model, data, bounds)
    rng = np.random.default_rng(rng_seed)
    d = model.dim
    box = model.bounds
    if box.width == 0.0:
        raise ValueError("degenerate box: every sampled pair would coincide")

    lip, inv_stab, curv = 0.0, 0.0, 0.0
    done = 0
    while done < n_pairs:
        q1 = box.sample_uniform(rng, d)
        q2 = box.sample_uniform(rng, d)
        dq = np.linalg.norm(q1 - q2)
        if dq == 0.0:
            continue
        g1, g2 = model(q1), model(q2)
        dg = np.linalg.norm(g1 - g2)
        residual = np.linalg.norm(g1 - g2 - model.jacobian(q2) @ (q1 - q2))
        lip = max(lip, dg / dq)
        inv_stab = max(inv_stab, dq / (d * dg))
        curv = max(curv, residual / dq**2)
        done += 1

    return AuditReport(
        dim=d,
        n_pairs=n_pairs,
        a2_lower=lip,
        a2_upper=inv_stab,
        a3_ratio=curv,
        a3_slope=float("nan"),
    )


def audit_linearization(
    grid_or_model,
    data: ProblemData | None = None,
    base_q: np.ndarray | None = None,
    radii: list[float] | None = None,
    n_dirs: int = 8,
    rng_seed: int = 0,
    bounds: Bounds | None = None,
) -> AuditReport:
    """Measure the linearization residual r(t) = |G(q0+t p) - G(q0) - t J p|.

    Directions whose whole radius range would leave the box are rejected and
    resampled; if every candidate direction is rejected the base point is too
    close to the boundary.  The fitted log-log slope of r against t should be
    close to 2 for a smooth forward map.
    """
    model = _as_model(grid_or_model, data, bounds)
    d = model.dim
    box = model.bounds
    if base_q is None:
        base_q = np.full(d, box.mid)
    base_q = np.asarray(base_q, dtype=float)
    radii = [1e-1, 1e-2, 1e-3] if radii is None else list(radii)
    if any(t <= 0 for t in radii):
        raise ValueError("radii must be positive")

    rng = np.random.default_rng(rng_seed)
    t_max = max(radii)
    directions = []
    attempts = 0
    while len(directions) < n_dirs and attempts < 100 * n_dirs:
        attempts += 1
        p = rng.standard_normal(d)
        p /= np.linalg.norm(p)
        if box.contains(base_q + t_max * p) and box.contains(base_q - 0.0 * p):
            directions.append(p)
    if not directions:
        raise ValueError("base point too close to boundary")

    g0 = model(base_q)
    jac0 = model.jacobian(base_q)
    log_t, log_r, max_ratio = [], [], 0.0
    for p in directions:
        jp = jac0 @ p
        for t in radii:
            r = np.linalg.norm(model(base_q + t * p) - g0 - t * jp)
            max_ratio = max(max_ratio, r / t**2)
            if r > 0.0:
                log_t.append(np.log(t))
                log_r.append(np.log(r))
    if len(set(log_t)) >= 2:
        slope = float(np.polyfit(log_t, log_r, 1)[0])
    else:
        slope = float("nan")

    return AuditReport(
        dim=d,
        n_pairs=len(directions) * len(radii),
        a2_lower=float("nan"),
        a2_upper=float("nan"),
        a3_ratio=max_ratio,
        a3_slope=slope,
    )
