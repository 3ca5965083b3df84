"""Synthetic-data posterior, local rescaling and its Gaussian approximation.

Observations follow Y = G(q0) + n^{-1/2} eta with standard normal eta, where
n is the inverse noise variance.  The posterior over the box-supported
coefficient combines the Gaussian likelihood with a product prior.  Around
the truth, in the rescaled coordinate u = sqrt(n) (q - q0), the posterior is
approximately N(shift, Sigma) with Sigma = (J^T J)^{-1} and
shift = Sigma J^T eta, J the derivative of the forward map at q0.  Back in
original coordinates the approximating law is N(q0 + n^{-1/2} shift,
n^{-1} Sigma).

The module exposes the exact shifted log-likelihood ratio, its quadratic
surrogate, and the gap between them on a sampled ball, which is the
quantity whose smallness drives the Gaussian approximation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import truncnorm

from .forward import Bounds, GridSpec, MediumField, ProblemData
from .gaussian import FrozenGaussian
from .models import PdeForwardModel

__all__ = [
    "UniformPrior",
    "TruncatedNormalPrior",
    "prior_from_dict",
    "check_prior_regularity",
    "PosteriorSpec",
    "GaussianApprox",
    "ExpansionGapReport",
    "synthesize_data",
    "synthesize_for_model",
    "log_posterior_unnorm",
    "log_likelihood_ratio",
    "log_gaussian_surrogate",
    "gaussian_approx",
    "expansion_gap",
    "ball_radius",
    "sample_ball",
    "spec_to_dict",
    "spec_from_dict",
]

#: Condition-number ceiling for the derivative matrix in gaussian_approx.
JACOBIAN_COND_MAX = 1e12


# ---------------------------------------------------------------------------
# Priors (independent products over components, supported on the box)
# ---------------------------------------------------------------------------


class UniformPrior:
    """Uniform product prior on the admissible box."""

    kind = "uniform"

    def __init__(self, bounds: Bounds):
        self.bounds = bounds
        self._log_comp = -np.log(bounds.width)

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self._log_comp)
        out[(x < self.bounds.lo) | (x > self.bounds.hi)] = -np.inf
        return out

    def log_density(self, q: np.ndarray) -> float:
        q = np.asarray(q, dtype=float)
        if not self.bounds.contains(q):
            return -np.inf
        return float(q.size * self._log_comp)

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        return self.bounds.sample_uniform(rng, dim)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lo": self.bounds.lo, "hi": self.bounds.hi}


class TruncatedNormalPrior:
    """Product of normals truncated to the box.

    Defaults: per-component mean at the box midpoint, standard deviation a
    quarter of the box width.
    """

    kind = "truncated-normal-product"

    def __init__(self, bounds: Bounds, mean: float | None = None, std: float | None = None):
        self.bounds = bounds
        self.mean = bounds.mid if mean is None else float(mean)
        self.std = bounds.width / 4.0 if std is None else float(std)
        self._a = (bounds.lo - self.mean) / self.std
        self._b = (bounds.hi - self.mean) / self.std
        self._dist = truncnorm(self._a, self._b, loc=self.mean, scale=self.std)

    def component_log_density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            out = self._dist.logpdf(x)
        return out

    def log_density(self, q: np.ndarray) -> float:
        q = np.asarray(q, dtype=float)
        if not self.bounds.contains(q):
            return -np.inf
        return float(np.sum(self._dist.logpdf(q)))

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        return self._dist.rvs(size=dim, random_state=rng)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lo": self.bounds.lo,
            "hi": self.bounds.hi,
            "mean": self.mean,
            "std": self.std,
        }


def prior_from_dict(payload: dict):
    bounds = Bounds(payload["lo"], payload["hi"])
    if payload["kind"] == UniformPrior.kind:
        return UniformPrior(bounds)
    if payload["kind"] == TruncatedNormalPrior.kind:
        return TruncatedNormalPrior(bounds, payload.get("mean"), payload.get("std"))
    raise ValueError(f"unknown prior kind {payload['kind']!r}")


def check_prior_regularity(prior, n_grid: int = 401) -> dict[str, float]:
    """Numerical check that a component log-density is bounded and Lipschitz.

    Evaluates the per-component log density on an interior grid and returns
    the max-min gap and the largest finite-difference slope; both must be
    finite for the priors shipped here.
    """
    bounds = prior.bounds
    pad = 1e-9 * max(1.0, bounds.width)
    xs = np.linspace(bounds.lo + pad, bounds.hi - pad, n_grid)
    logs = prior.component_log_density(xs)
    if not np.all(np.isfinite(logs)):
        raise ValueError("component log density is not finite inside the box")
    gap = float(np.max(logs) - np.min(logs))
    lips = float(np.max(np.abs(np.diff(logs)) / np.diff(xs)))
    return {"log_gap": gap, "lipschitz": lips}


# ---------------------------------------------------------------------------
# Posterior specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSpec:
    """Everything needed to evaluate the unnormalized posterior.

    ``noise_n`` is the inverse noise variance (noise std = noise_n^{-1/2});
    ``eta`` is the realized standard normal noise, stored for diagnostics.
    """

    model: object
    prior: object
    q0: np.ndarray
    noise_n: float
    y: np.ndarray
    eta: np.ndarray
    g_at_truth: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float).ravel())
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).ravel())
        object.__setattr__(self, "eta", np.asarray(self.eta, dtype=float).ravel())
        g0 = self.model(self.q0) if self.g_at_truth is None else np.asarray(self.g_at_truth)
        object.__setattr__(self, "g_at_truth", g0)
        recon = np.linalg.norm(self.y - g0 - self.eta / np.sqrt(self.noise_n))
        if recon > 1e-12 * max(1.0, np.linalg.norm(self.y)):
            raise ValueError(f"observation fails reconstruction check ({recon:.3e})")

    @property
    def dim(self) -> int:
        return self.q0.size

    @property
    def bounds(self) -> Bounds:
        return self.model.bounds

    def local_to_orig(self, u: np.ndarray) -> np.ndarray:
        return self.q0 + np.asarray(u, dtype=float) / np.sqrt(self.noise_n)

    def orig_to_local(self, q: np.ndarray) -> np.ndarray:
        return np.sqrt(self.noise_n) * (np.asarray(q, dtype=float) - self.q0)


def synthesize_for_model(
    model, prior, q0: np.ndarray, noise_n: float, rng_seed: int
) -> PosteriorSpec:
    """Draw noise and build a synthetic observation for an arbitrary model."""
    if noise_n <= 0:
        raise ValueError("noise parameter must be positive")
    q0 = np.asarray(q0, dtype=float).ravel()
    if not model.bounds.contains(q0):
        raise ValueError("truth lies outside the admissible box")
    if not model.bounds.contains(q0, margin=1e-12 * max(1.0, model.bounds.width)):
        warnings.warn("truth lies on the boundary of the admissible box", stacklevel=2)
    rng = np.random.default_rng(rng_seed)
    eta = rng.standard_normal(q0.size)
    g0 = model(q0)
    y = g0 + eta / np.sqrt(noise_n)
    return PosteriorSpec(model, prior, q0, float(noise_n), y, eta, g_at_truth=g0)


def synthesize_data(
    grid: GridSpec,
    data: ProblemData,
    q0: MediumField,
    noise_n: float,
    rng_seed: int,
    prior=None,
) -> PosteriorSpec:
    """PDE-backed specialization of :func:`synthesize_for_model`."""
    model = PdeForwardModel(grid, data, q0.bounds)
    prior = UniformPrior(q0.bounds) if prior is None else prior
    return synthesize_for_model(model, prior, q0.values, noise_n, rng_seed)


def log_posterior_unnorm(spec: PosteriorSpec, q: np.ndarray) -> float:
    """Unnormalized log posterior; -inf outside the admissible box."""
    q = np.asarray(q, dtype=float).ravel()
    if not spec.bounds.contains(q):
        return -np.inf
    misfit = spec.y - spec.model(q)
    return float(-0.5 * spec.noise_n * (misfit @ misfit) + spec.prior.log_density(q))


def log_likelihood_ratio(spec: PosteriorSpec, u: np.ndarray) -> float:
    """Shifted log-likelihood ratio at local coordinate u (completed-square form).

    Equals ``<eta, T(u)> - |T(u)|^2 / 2`` with
    T(u) = sqrt(n) (G(q0 + n^{-1/2} u) - G(q0)).
    """
    q = spec.local_to_orig(u)
    if not spec.bounds.contains(q):
        raise ValueError("local point maps outside the admissible box")
    t = np.sqrt(spec.noise_n) * (spec.model(q) - spec.g_at_truth)
    return float(spec.eta @ t - 0.5 * (t @ t))


def log_gaussian_surrogate(spec: PosteriorSpec, approx: "GaussianApprox", u: np.ndarray) -> float:
    """Quadratic surrogate 2 <eta, J u> - |J u|^2 of the shifted likelihood.

    Implemented exactly in this doubled form; note it is twice the exponent
    of the N(shift, Sigma) kernel, whose log-density this module uses for all
    distributional computations (see ``GaussianApprox.local_gaussian``).
    """
    ju = approx.jac_at_truth @ np.asarray(u, dtype=float)
    return float(2.0 * (spec.eta @ ju) - ju @ ju)


def spec_to_dict(spec: PosteriorSpec) -> dict:
    """JSON-ready payload for a PDE-backed posterior specification."""
    model = spec.model
    if not isinstance(model, PdeForwardModel):
        raise TypeError("only PDE-backed specifications are serializable")
    return {
        "schema_version": 1,
        "n_grid": model.grid.n_sub,
        "noise_n": spec.noise_n,
        "q0": spec.q0.tolist(),
        "eta": spec.eta.tolist(),
        "y": spec.y.tolist(),
        "prior": spec.prior.to_dict(),
        "f_vec": model.data.f_vec.tolist(),
        "g_vec": model.data.g_vec.tolist(),
        "data_positive": model.data.data_positive,
    }


def spec_from_dict(payload: dict) -> PosteriorSpec:
    """Rebuild a specification; the observation reconstruction check re-runs."""
    grid = GridSpec(payload["n_grid"])
    data = ProblemData(
        np.asarray(payload["f_vec"]),
        np.asarray(payload["g_vec"]),
        payload.get("data_positive", True),
    )
    prior = prior_from_dict(payload["prior"])
    model = PdeForwardModel(grid, data, prior.bounds)
    return PosteriorSpec(
        model=model,
        prior=prior,
        q0=np.asarray(payload["q0"]),
        noise_n=float(payload["noise_n"]),
        y=np.asarray(payload["y"]),
        eta=np.asarray(payload["eta"]),
    )


# ---------------------------------------------------------------------------
# Gaussian approximation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianApprox:
    """Gaussian approximation of the posterior in local and original coordinates."""

    #: covariance (J^T J)^{-1} of the local-coordinate Gaussian
    cov_local: np.ndarray
    #: random center Sigma J^T eta of the local-coordinate Gaussian
    shift_local: np.ndarray
    #: center q0 + n^{-1/2} shift in original coordinates
    center: np.ndarray
    #: covariance n^{-1} Sigma in original coordinates
    cov: np.ndarray
    jac_at_truth: np.ndarray = field(repr=False)
    local_gaussian: FrozenGaussian = field(repr=False)
    orig_gaussian: FrozenGaussian = field(repr=False)

    @property
    def dim(self) -> int:
        return self.shift_local.size


def gaussian_approx(spec: PosteriorSpec) -> GaussianApprox:
    """Build the approximating Gaussian from the derivative at the truth."""
    jac = spec.model.jacobian(spec.q0)
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] <= 0 or sv[0] / sv[-1] > JACOBIAN_COND_MAX:
        raise ValueError("derivative matrix at the truth is numerically singular")
    gram = jac.T @ jac
    factor = cho_factor(gram)
    sigma = cho_solve(factor, np.eye(spec.dim))
    sigma = 0.5 * (sigma + sigma.T)
    shift = cho_solve(factor, jac.T @ spec.eta)
    center = spec.q0 + shift / np.sqrt(spec.noise_n)
    cov = sigma / spec.noise_n
    return GaussianApprox(
        cov_local=sigma,
        shift_local=shift,
        center=center,
        cov=cov,
        jac_at_truth=jac,
        local_gaussian=FrozenGaussian(shift, sigma),
        orig_gaussian=FrozenGaussian(center, cov),
    )


# ---------------------------------------------------------------------------
# Mass-ball bookkeeping and the expansion gap
# ---------------------------------------------------------------------------


def ball_radius(d: int, ball_constant: float = 1.0, sigma: Callable[[int], float] | None = None) -> float:
    """Radius K * sigma(d) * sqrt(d (log d + log sigma(d))) of the mass ball.

    ``sigma`` encodes the ill-posedness degree and defaults to sigma(d) = d,
    the rate of the medium problem.  Degenerate at d = 1 where the logarithm
    vanishes.
    """
    sig = float(d) if sigma is None else float(sigma(d))
    inner = d * (np.log(d) + np.log(sig))
    if inner <= 0.0:
        warnings.warn("mass-ball radius degenerates at d = 1 (log d = 0)", stacklevel=2)
        return 0.0
    return float(ball_constant * sig * np.sqrt(inner))


def sample_ball(rng: np.random.Generator, dim: int, radius: float, count: int) -> np.ndarray:
    """Uniform samples from the centred euclidean ball of the given radius."""
    z = rng.standard_normal((count, dim))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=count) ** (1.0 / dim)
    return z * r[:, None]


@dataclass(frozen=True)
class ExpansionGapReport:
    max_gap: float
    bound_rhs: float
    curvature_constant: float
    within_bound: bool
    n_samples: int


def expansion_gap(
    spec: PosteriorSpec,
    approx: GaussianApprox,
    u_samples: np.ndarray,
    ball_constant: float = 1.0,
    curvature_constant: float | None = None,
) -> ExpansionGapReport:
    """Largest gap between the exact and quadratic log-likelihood ratios.

    The comparison is against half the doubled surrogate, i.e. against
    ``<eta, J u> - |J u|^2 / 2``, which is both the first-order expansion of
    the exact ratio and the log-kernel of the approximating Gaussian (for a
    linear forward map the gap is identically zero).  The reference bound is
    ``C (n^{-1/2} |eta| K(d)^2 + n^{-1} K(d)^4)`` with C calibrated as twice
    the measured curvature ratio when not supplied.
    """
    u_samples = np.atleast_2d(np.asarray(u_samples, dtype=float))
    if u_samples.size == 0:
        raise ValueError("need at least one local sample")
    if curvature_constant is None:
        from .audit import audit_linearization

        report = audit_linearization(spec.model, base_q=spec.q0)
        curvature_constant = 2.0 * report.a3_ratio

    max_gap = 0.0
    for u in u_samples:
        exact = log_likelihood_ratio(spec, u)
        surrogate = 0.5 * log_gaussian_surrogate(spec, approx, u)
        max_gap = max(max_gap, abs(exact - surrogate))

    k_d = ball_radius(spec.dim, ball_constant)
    eta_norm = float(np.linalg.norm(spec.eta))
    n = spec.noise_n
    bound = curvature_constant * (eta_norm * k_d**2 / np.sqrt(n) + k_d**4 / n)
    return ExpansionGapReport(
        max_gap=float(max_gap),
        bound_rhs=float(bound),
        curvature_constant=float(curvature_constant),
        within_bound=bool(max_gap <= bound),
        n_samples=u_samples.shape[0],
    )
