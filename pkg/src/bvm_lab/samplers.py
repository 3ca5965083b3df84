"""Posterior samplers over the box-supported coefficient space.

Two Metropolis variants are provided: a random walk whose Gaussian proposal
is reflected at the box walls (reflection preserves proposal symmetry), and
an independence sampler that proposes from the Gaussian approximation of the
posterior; the acceptance rate of the latter is itself evidence of how close
the approximation is.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .forward import Bounds
from .gaussian import FrozenGaussian
from .posterior import GaussianApprox, PosteriorSpec, log_posterior_unnorm

__all__ = [
    "ChainConfig",
    "SampleSet",
    "reflect_into_bounds",
    "run_rwm",
    "run_independence",
    "ess",
    "save_chain",
    "load_chain",
]


@dataclass(frozen=True)
class ChainConfig:
    """Markov chain settings.

    ``step_scale`` multiplies n^{-1/2} to give the proposal std of the random
    walk; ``None`` picks 2.4/sqrt(d), rescaled by the approximating Gaussian's
    average marginal spread when one is supplied.  ``n_burn=None`` discards
    the first 20% of the chain.
    """

    kind: str = "rwm-reflect"
    step_scale: Optional[float] = None
    n_steps: int = 10_000
    n_burn: Optional[int] = None
    thin: int = 1
    seed: int = 0
    init: str = "perturb"

    def __post_init__(self) -> None:
        if self.kind not in ("rwm-reflect", "independence-gauss"):
            raise ValueError(f"unknown chain kind {self.kind!r}")
        if self.thin < 1 or self.n_steps <= 0:
            raise ValueError("need n_steps > 0 and thin >= 1")
        burn = self.burn_in
        if not (0 <= burn < self.n_steps):
            raise ValueError("need n_steps > n_burn >= 0")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ValueError("step_scale must be positive")
        if self.init not in ("perturb", "prior"):
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def burn_in(self) -> int:
        return self.n_steps // 5 if self.n_burn is None else self.n_burn


@dataclass(frozen=True)
class SampleSet:
    """Kept posterior draws (rows) with the chain's acceptance diagnostics."""

    samples: np.ndarray
    acceptance_rate: float
    log_density: np.ndarray
    config: ChainConfig

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def reflect_into_bounds(x: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Fold a point into the box by repeated mirroring at the walls.

    Identity on in-bounds points; each individual mirror x -> 2*wall - x is
    an involution, so the folded Gaussian proposal stays symmetric.
    """
    width = bounds.width
    if width == 0.0:
        return np.full_like(np.asarray(x, dtype=float), bounds.lo)
    y = np.mod(np.asarray(x, dtype=float) - bounds.lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return bounds.lo + y


def _metropolis_random_walk(
    log_target: Callable[[np.ndarray], float],
    x0: np.ndarray,
    step_std: float,
    bounds: Bounds,
    cfg: ChainConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float, np.ndarray]:
    x = np.array(x0, dtype=float)
    logp = log_target(x)
    if not np.isfinite(logp):
        raise ValueError("initial point has zero posterior density")
    kept, trace = [], []
    accepted = burn_accepted = 0
    for step in range(cfg.n_steps):
        proposal = reflect_into_bounds(x + step_std * rng.standard_normal(x.size), bounds)
        logp_prop = log_target(proposal)
        if np.log(rng.uniform()) < logp_prop - logp:
            x, logp = proposal, logp_prop
            accepted += 1
            if step < cfg.burn_in:
                burn_accepted += 1
        if step == cfg.burn_in - 1 and burn_accepted == 0:
            raise RuntimeError(
                "no proposal accepted during burn-in; adjust step_scale"
            )
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            kept.append(x.copy())
            trace.append(logp)
    return np.array(kept), accepted / cfg.n_steps, np.array(trace)


def run_rwm(
    spec: PosteriorSpec, cfg: ChainConfig, approx: GaussianApprox | None = None
) -> SampleSet:
    """Random-walk Metropolis targeting the unnormalized posterior.

    The proposal is isotropic Gaussian with std ``step_scale * n^{-1/2}``,
    reflected into the box componentwise.  Deterministic under a fixed seed.
    """
    rng = np.random.default_rng(cfg.seed)
    d = spec.dim
    scale = cfg.step_scale
    if scale is None:
        scale = 2.4 / np.sqrt(d)
        if approx is not None:
            # Match the posterior's average marginal spread in local coordinates.
            scale *= float(np.sqrt(np.trace(approx.cov_local) / d))
    step_std = scale / np.sqrt(spec.noise_n)

    if cfg.init == "prior":
        x0 = spec.prior.sample(rng, d)
    else:
        x0 = reflect_into_bounds(
            spec.q0 + 0.1 * step_std * rng.standard_normal(d), spec.bounds
        )
    samples, rate, trace = _metropolis_random_walk(
        lambda q: log_posterior_unnorm(spec, q), x0, step_std, spec.bounds, cfg, rng
    )
    return SampleSet(samples, rate, trace, cfg)


def _draw_inside(
    proposal: FrozenGaussian, bounds: Bounds, rng: np.random.Generator, count: int
) -> np.ndarray:
    """Rejection-resample Gaussian draws until ``count`` land inside the box."""
    out = np.empty((count, proposal.dim))
    have = 0
    drawn = inside = 0
    while have < count:
        batch = proposal.rvs(rng, max(256, count))
        mask = np.all((batch >= bounds.lo) & (batch <= bounds.hi), axis=1)
        drawn += batch.shape[0]
        inside += int(mask.sum())
        take = batch[mask][: count - have]
        out[have : have + take.shape[0]] = take
        have += take.shape[0]
        if drawn >= 10_000 and inside < 0.01 * drawn:
            raise RuntimeError(
                "approximation mass lies almost entirely outside the support "
                f"({inside}/{drawn} proposals inside)"
            )
    return out


def _independence_mh(
    log_target: Callable[[np.ndarray], float],
    proposal: FrozenGaussian,
    bounds: Bounds,
    cfg: ChainConfig,
    rng: np.random.Generator,
    x0: np.ndarray,
) -> tuple[np.ndarray, float, np.ndarray]:
    x = np.array(x0, dtype=float)
    logp = log_target(x)
    log_q = proposal.logpdf(x)
    candidates = _draw_inside(proposal, bounds, rng, cfg.n_steps)
    log_u = np.log(rng.uniform(size=cfg.n_steps))
    kept, trace = [], []
    accepted = 0
    for step in range(cfg.n_steps):
        cand = candidates[step]
        logp_cand = log_target(cand)
        log_q_cand = proposal.logpdf(cand)
        if log_u[step] < (logp_cand - log_q_cand) - (logp - log_q):
            x, logp, log_q = cand, logp_cand, log_q_cand
            accepted += 1
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            kept.append(x.copy())
            trace.append(logp)
    return np.array(kept), accepted / cfg.n_steps, np.array(trace)


def run_independence(
    spec: PosteriorSpec, approx: GaussianApprox, cfg: ChainConfig
) -> SampleSet:
    """Independence Metropolis-Hastings with the approximating Gaussian proposal.

    Proposals falling outside the box are rejection-resampled (truncation
    constants cancel in the acceptance ratio).  A high acceptance rate means
    the Gaussian approximation tracks the posterior closely.
    """
    rng = np.random.default_rng(cfg.seed)
    samples, rate, trace = _independence_mh(
        lambda q: log_posterior_unnorm(spec, q),
        approx.orig_gaussian,
        spec.bounds,
        cfg,
        rng,
        x0=spec.q0,
    )
    return SampleSet(samples, rate, trace, replace(cfg, kind="independence-gauss"))


def ess(samples: SampleSet | np.ndarray) -> np.ndarray:
    """Per-component effective sample size (initial-positive-sequence rule)."""
    x = samples.samples if isinstance(samples, SampleSet) else np.asarray(samples)
    x = np.atleast_2d(x.astype(float))
    if x.ndim != 2:
        raise ValueError("expected a (count, dim) sample array")
    n, d = x.shape
    if n < 100:
        raise ValueError("need at least 100 kept samples for an ESS estimate")
    out = np.empty(d)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    for j in range(d):
        col = x[:, j] - x[:, j].mean()
        var = col @ col / n
        if var == 0.0:
            out[j] = 1.0
            continue
        f = np.fft.rfft(col, nfft)
        acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
        rho = acov / acov[0]
        pair_sums = rho[0:-1:2] + rho[1::2]
        tau = -1.0
        for p in pair_sums:
            if p <= 0.0:
                break
            tau += 2.0 * p
        out[j] = float(np.clip(n / max(tau, 1e-12), 1.0, n))
    return out


# ---------------------------------------------------------------------------
# Flat binary chain storage: uint64 dim, uint64 count, float64 body, plus a
# JSON sidecar with chain metadata.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<QQ")


def save_chain(path: str | Path, sample_set: SampleSet, extra_meta: dict | None = None) -> None:
    path = Path(path)
    arr = np.ascontiguousarray(sample_set.samples, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(sample_set.dim, sample_set.count))
        fh.write(arr.tobytes())
    meta = {
        "dim": sample_set.dim,
        "count": sample_set.count,
        "acceptance_rate": sample_set.acceptance_rate,
        "kind": sample_set.config.kind,
        "n_steps": sample_set.config.n_steps,
        "n_burn": sample_set.config.burn_in,
        "thin": sample_set.config.thin,
        "seed": sample_set.config.seed,
    }
    meta.update(extra_meta or {})
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_chain(path: str | Path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        dim, count = _HEADER.unpack(fh.read(_HEADER.size))
        body = np.frombuffer(fh.read(), dtype="<f8")
    if body.size != dim * count:
        raise ValueError(f"chain file {path} is truncated")
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return body.reshape(count, dim).copy(), meta
