"""Sweep harness over (dimension, noise) cells with reproducible records.

Each cell synthesizes data at a fixed seed, builds the Gaussian
approximation, and records the TV estimate, credible-set coverage and
contraction mass together with the growth-condition quantities.  Cells
already present on disk are skipped, making re-runs idempotent; per-cell
failures are recorded with an error tag and never abort the sweep.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .diagnostics import coverage_for_model, tv_grid, tv_importance, contraction_probe
from .forward import Bounds, GridSpec, MediumField, ProblemData
from .models import PdeForwardModel
from .posterior import (
    TruncatedNormalPrior,
    UniformPrior,
    ball_radius,
    gaussian_approx,
    synthesize_data,
)
from .samplers import ChainConfig, run_rwm

__all__ = [
    "SweepPlan",
    "SweepRecord",
    "delta_n",
    "default_truth",
    "run_sweep",
    "emit_report",
    "load_records_csv",
]

SCHEMA_VERSION = 1

#: CSV column order; doubles as the record schema.
CSV_FIELDS = [
    "schema_version",
    "d",
    "n",
    "seed",
    "delta_n_cubic",
    "delta_n_general",
    "tv_estimate",
    "tv_stderr",
    "tv_method",
    "coverage",
    "coverage_alpha",
    "coverage_reps",
    "coverage_ci",
    "contraction_eps_n",
    "contraction_mass",
    "wall_time",
    "error",
]


def delta_n(
    d: int,
    n: float,
    ball_constant: float = 1.0,
    variant: str = "cubic",
    sigma: Callable[[int], float] | None = None,
) -> float:
    """Growth-condition quantity controlling the Gaussian approximation error.

    ``cubic`` returns n^{-1/2} d^3 log d, the rate specialized to the medium
    problem; ``general`` returns sqrt(d/n) K(d)^2 with the mass-ball radius
    K(d).  The two differ by a factor of order sqrt(d); both are recorded by
    the sweep rather than adjudicated.  Natural logarithm throughout.
    """
    if n <= 0:
        raise ValueError("noise parameter must be positive")
    if d < 2:
        warnings.warn("growth condition degenerates at d = 1 (log d = 0)", stacklevel=2)
        return 0.0
    if variant == "cubic":
        return float(d**3 * math.log(d) / math.sqrt(n))
    if variant == "general":
        k_d = ball_radius(d, ball_constant, sigma)
        return float(math.sqrt(d / n) * k_d**2)
    raise ValueError(f"unknown delta_n variant {variant!r}")


def default_truth(grid: GridSpec, bounds: Bounds = Bounds(0.1, 10.0)) -> MediumField:
    """Smooth in-bounds coefficient used as the default ground truth."""
    x, y = grid.interior_xy()
    return MediumField(1.0 + 0.5 * np.sin(np.pi * x) * np.sin(np.pi * y), bounds)


@dataclass(frozen=True)
class SweepPlan:
    """Configuration of one (grid size, noise level, replication) sweep."""

    n_grid_list: Sequence[int]
    noise_levels: Sequence[float]
    replications: int = 1
    base_seed: int = 0
    ball_constant: float = 1.0
    prior_kind: str = "uniform"
    out_dir: str = "sweep-out"
    tv_method: str = "importance"
    tv_samples: int = 20_000
    tv_cells: int = 2000
    coverage_alpha: float = 0.1
    coverage_reps: int = 50
    contraction_factors: Sequence[float] = (1.0,)
    chain_steps: int = 4000
    max_cells: int = 500

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid_list", tuple(int(n) for n in self.n_grid_list))
        object.__setattr__(self, "noise_levels", tuple(float(n) for n in self.noise_levels))
        object.__setattr__(
            self, "contraction_factors", tuple(float(m) for m in self.contraction_factors)
        )
        if not self.n_grid_list or not self.noise_levels:
            raise ValueError("grid and noise lists must be nonempty")
        if self.replications < 1:
            raise ValueError("need at least one replication per cell")
        if self.prior_kind not in ("uniform", "tnorm"):
            raise ValueError(f"unknown prior kind {self.prior_kind!r}")
        if self.tv_method not in ("importance", "grid"):
            raise ValueError(f"unknown tv method {self.tv_method!r}")
        n_cells = len(self.n_grid_list) * len(self.noise_levels) * self.replications
        if n_cells > self.max_cells:
            raise ValueError(f"plan has {n_cells} cells, exceeding cap {self.max_cells}")

    @property
    def cells(self) -> list[tuple[int, float, int]]:
        """(N, n, seed) triples; seeds are distinct by construction."""
        out = []
        index = 0
        for n_grid in self.n_grid_list:
            for noise in self.noise_levels:
                for _ in range(self.replications):
                    out.append((int(n_grid), float(noise), self.base_seed + index))
                    index += 1
        return out

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["n_grid_list"] = list(self.n_grid_list)
        payload["noise_levels"] = list(self.noise_levels)
        payload["contraction_factors"] = list(self.contraction_factors)
        return payload

    @staticmethod
    def from_dict(payload: dict) -> "SweepPlan":
        return SweepPlan(**payload)

    @staticmethod
    def from_json(path: str | Path) -> "SweepPlan":
        return SweepPlan.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SweepRecord:
    """One sweep cell: growth quantities, TV, coverage and contraction."""

    d: int
    n: float
    seed: int
    delta_n_cubic: float
    delta_n_general: float
    tv_estimate: float = float("nan")
    tv_stderr: float = float("nan")
    tv_method: str = ""
    coverage: float = float("nan")
    coverage_alpha: float = float("nan")
    coverage_reps: int = 0
    coverage_ci: float = float("nan")
    contraction_eps_n: float = float("nan")
    contraction_mass: float = float("nan")
    wall_time: float = float("nan")
    error: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_row(self) -> dict:
        return {name: getattr(self, name) for name in CSV_FIELDS}


def _prior_for(kind: str, bounds: Bounds):
    return UniformPrior(bounds) if kind == "uniform" else TruncatedNormalPrior(bounds)


def _run_cell(plan: SweepPlan, n_grid: int, noise: float, seed: int) -> SweepRecord:
    start = time.perf_counter()
    grid = GridSpec(n_grid)
    d = grid.dim
    base = dict(
        d=d,
        n=noise,
        seed=seed,
        delta_n_cubic=delta_n(d, noise, plan.ball_constant, "cubic"),
        delta_n_general=delta_n(d, noise, plan.ball_constant, "general"),
    )
    try:
        data = ProblemData.constant(grid)
        q0 = default_truth(grid)
        prior = _prior_for(plan.prior_kind, q0.bounds)
        spec = synthesize_data(grid, data, q0, noise, seed, prior)
        approx = gaussian_approx(spec)

        if plan.tv_method == "grid" and d <= 2:
            tv = tv_grid(spec, approx, plan.tv_cells)
        else:
            tv = tv_importance(spec, approx, plan.tv_samples, seed=seed + 1)

        model = PdeForwardModel(grid, data, q0.bounds)
        cov = coverage_for_model(
            model, prior, q0.values, noise, plan.coverage_alpha,
            plan.coverage_reps, seed + 2,
        )

        chain = run_rwm(
            spec,
            ChainConfig(n_steps=plan.chain_steps, seed=seed + 3),
            approx=approx,
        )
        contraction = contraction_probe(
            chain, q0.values, noise, plan.ball_constant, plan.contraction_factors
        )[0]

        return SweepRecord(
            **base,
            tv_estimate=tv.value,
            tv_stderr=tv.std_err,
            tv_method=tv.method,
            coverage=cov.coverage,
            coverage_alpha=cov.alpha,
            coverage_reps=cov.n_reps,
            coverage_ci=cov.ci_halfwidth,
            contraction_eps_n=contraction.eps_n,
            contraction_mass=contraction.mass_outside,
            wall_time=time.perf_counter() - start,
        )
    except Exception as exc:  # per-cell failures must not abort the sweep
        return SweepRecord(
            **base, wall_time=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )


def _cell_path(records_dir: Path, n_grid: int, noise: float, seed: int) -> Path:
    return records_dir / f"cell_N{n_grid}_n{noise!r}_s{seed}.json"


def run_sweep(plan: SweepPlan) -> list[SweepRecord]:
    """Execute all plan cells, skipping those already on disk.

    Worker count is capped by the BVM_LAB_THREADS environment variable.
    Record files are written only by the coordinating thread.
    """
    out_dir = Path(plan.out_dir)
    records_dir = out_dir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "plan.json").write_text(
        json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n"
    )

    pending = []
    records: dict[tuple, SweepRecord] = {}
    for n_grid, noise, seed in plan.cells:
        path = _cell_path(records_dir, n_grid, noise, seed)
        if path.exists():
            payload = json.loads(path.read_text())
            records[(n_grid, noise, seed)] = SweepRecord(**payload)
        else:
            pending.append((n_grid, noise, seed))

    if pending:
        max_workers = int(os.environ.get("BVM_LAB_THREADS", "0")) or min(
            len(pending), os.cpu_count() or 1
        )
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            fresh = list(
                pool.map(lambda cell: _run_cell(plan, *cell), pending)
            )
        for cell, record in zip(pending, fresh):
            payload = {name: getattr(record, name) for name in CSV_FIELDS}
            _cell_path(records_dir, *cell).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n"
            )
            records[cell] = record

    ordered = [records[cell] for cell in plan.cells]
    return ordered


# ---------------------------------------------------------------------------
# Reports: CSV + JSON + SVG plots
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(records: Sequence[SweepRecord], out_dir: str | Path) -> dict[str, list[str]]:
    """Write records.csv, records.json and the SVG plot set; deterministic bytes."""
    if not records:
        raise ValueError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    csv_path = out_dir / "records.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow({k: _fmt(v) for k, v in record.to_row().items()})

    json_path = out_dir / "records.json"
    json_path.write_text(
        json.dumps(
            {"schema_version": SCHEMA_VERSION, "records": [r.to_row() for r in records]},
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )

    svg_paths = _emit_plots(records, out_dir / "plots")
    return {"csv": [str(csv_path)], "json": [str(json_path)], "svg": svg_paths}


def load_records_csv(path: str | Path) -> list[SweepRecord]:
    """Parse records.csv back into records (round-trips with emit_report)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                SweepRecord(
                    d=int(row["d"]),
                    n=float(row["n"]),
                    seed=int(row["seed"]),
                    delta_n_cubic=float(row["delta_n_cubic"]),
                    delta_n_general=float(row["delta_n_general"]),
                    tv_estimate=float(row["tv_estimate"]),
                    tv_stderr=float(row["tv_stderr"]),
                    tv_method=row["tv_method"],
                    coverage=float(row["coverage"]),
                    coverage_alpha=float(row["coverage_alpha"]),
                    coverage_reps=int(row["coverage_reps"]),
                    coverage_ci=float(row["coverage_ci"]),
                    contraction_eps_n=float(row["contraction_eps_n"]),
                    contraction_mass=float(row["contraction_mass"]),
                    wall_time=float(row["wall_time"]),
                    error=row["error"],
                    schema_version=int(row["schema_version"]),
                )
            )
    return out


def _emit_plots(records: Sequence[SweepRecord], plots_dir: Path) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "bvm-lab"
    plots_dir.mkdir(parents=True, exist_ok=True)
    ok = [r for r in records if not r.error]
    dims = sorted({r.d for r in ok})
    paths = []

    def _save(fig, name: str) -> None:
        path = plots_dir / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(str(path))

    def _per_dim_lines(ax, value_of, label: str) -> None:
        for d in dims:
            rows = sorted((r for r in ok if r.d == d), key=lambda r: r.n)
            ax.plot([r.n for r in rows], [value_of(r) for r in rows],
                    marker="o", label=f"d={d}")
        ax.set_xscale("log")
        ax.set_xlabel("noise parameter n")
        ax.set_ylabel(label)
        if dims:
            ax.legend()

    fig, ax = plt.subplots(figsize=(6, 4))
    _per_dim_lines(ax, lambda r: r.tv_estimate, "TV estimate")
    if any(r.tv_estimate > 0 for r in ok):
        ax.set_yscale("log")
    ax.set_title("TV distance to the Gaussian approximation")
    _save(fig, "tv_vs_n.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    scatter = [(r.delta_n_cubic, r.tv_estimate) for r in ok
               if r.delta_n_cubic > 0 and r.tv_estimate > 0]
    if scatter:
        ax.scatter([p[0] for p in scatter], [p[1] for p in scatter])
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("growth quantity delta_n")
    ax.set_ylabel("TV estimate")
    ax.set_title("TV against the growth condition")
    _save(fig, "tv_vs_delta.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    _per_dim_lines(ax, lambda r: r.coverage, "coverage")
    nominal = {1.0 - r.coverage_alpha for r in ok if np.isfinite(r.coverage_alpha)}
    for level in sorted(nominal):
        ax.axhline(level, color="gray", linestyle="--", linewidth=0.8)
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Credible-set coverage")
    _save(fig, "coverage_vs_n.svg")

    fig, ax = plt.subplots(figsize=(6, 4))
    _per_dim_lines(ax, lambda r: r.contraction_mass, "mass outside ball")
    ax.set_ylim(-0.05, 1.05)
    ax.set_title("Posterior mass outside the contraction ball")
    _save(fig, "contraction_vs_n.svg")

    return paths
