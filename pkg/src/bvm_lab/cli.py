"""Command-line interface: forward solves, spectra, audits, posterior pipeline.

All JSON outputs are written with sorted keys and a trailing newline, so any
command rerun with identical inputs and seeds produces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audit import audit_linearization, audit_stability
from .diagnostics import contraction_probe, credible_coverage, tv_grid, tv_importance
from .forward import Bounds, GridSpec, MediumField, ProblemData, assemble, solve
from .jacobian import jacobian, relative_asymmetry, sigma_growth_fit, spectral_report
from .posterior import (
    TruncatedNormalPrior,
    UniformPrior,
    gaussian_approx,
    spec_from_dict,
    spec_to_dict,
    synthesize_data,
)
from .samplers import ChainConfig, load_chain, run_independence, run_rwm, save_chain
from .sweep import SweepPlan, default_truth, emit_report, run_sweep

__all__ = ["main"]


def _write_json(path: str | Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _bounds(args) -> Bounds:
    return Bounds(args.q_min, args.q_max)


def _add_bounds_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--q-min", type=float, default=0.1)
    parser.add_argument("--q-max", type=float, default=10.0)


def _cmd_solve(args) -> int:
    grid = GridSpec(args.n_grid)
    if args.q_file:
        q_values = np.asarray(json.loads(Path(args.q_file).read_text()), dtype=float)
    else:
        q_values = default_truth(grid, _bounds(args)).values
    q = MediumField(q_values, _bounds(args))
    data = ProblemData.constant(grid, args.f_const, args.g_const)
    u = solve(assemble(grid, q, data), data)
    _write_json(args.out, {
        "n_grid": grid.n_sub,
        "d": grid.dim,
        "ordering": "row-wise",
        "q": q.values.tolist(),
        "u": u.values.tolist(),
    })
    return 0


def _cmd_spectra(args) -> int:
    grids = [int(tok) for tok in args.n_grid.split(",") if tok]
    reports, rows = [], []
    for n_sub in grids:
        grid = GridSpec(n_sub)
        data = ProblemData.constant(grid)
        q = default_truth(grid, _bounds(args))
        sys_ = assemble(grid, q, data)
        jac = jacobian(sys_, solve(sys_, data))
        report = spectral_report(jac)
        reports.append(report)
        rows.append({
            "n_grid": n_sub,
            "d": report.dim,
            "sigma_min": report.sigma_min,
            "sigma_max": report.sigma_max,
            "sigma_min_inv": report.sigma_min_inv,
            "sigma_max_inv": report.sigma_max_inv,
            "relative_asymmetry": relative_asymmetry(jac),
        })
    payload = {"reports": rows}
    if len(reports) >= 3:
        payload["growth_fit"] = sigma_growth_fit(reports)
    _write_json(args.out, payload)
    return 0


def _cmd_audit(args) -> int:
    grid = GridSpec(args.n_grid)
    data = ProblemData.constant(grid)
    bounds = _bounds(args)
    stability = audit_stability(grid, data, args.pairs, args.seed, bounds)
    linearization = audit_linearization(
        grid, data, base_q=default_truth(grid, bounds).values,
        rng_seed=args.seed, bounds=bounds,
    )
    _write_json(args.out, {
        "d": stability.dim,
        "n_pairs": stability.n_pairs,
        "a2_lower": stability.a2_lower,
        "a2_upper": stability.a2_upper,
        "a3_ratio": stability.a3_ratio,
        "a3_slope": linearization.a3_slope,
        "a3_ratio_directional": linearization.a3_ratio,
        "sampled_not_exhaustive": True,
    })
    return 0


def _cmd_posterior(args) -> int:
    grid = GridSpec(args.n_grid)
    data = ProblemData.constant(grid)
    bounds = _bounds(args)
    q0 = default_truth(grid, bounds)
    prior = UniformPrior(bounds) if args.prior == "uniform" else TruncatedNormalPrior(bounds)
    spec = synthesize_data(grid, data, q0, args.noise_n, args.seed, prior)
    _write_json(args.out, spec_to_dict(spec))
    return 0


def _cmd_sample(args) -> int:
    spec = spec_from_dict(json.loads(Path(args.spec).read_text()))
    cfg = ChainConfig(
        kind="rwm-reflect" if args.kind == "rwm" else "independence-gauss",
        step_scale=args.step_scale,
        n_steps=args.steps,
        n_burn=args.burn,
        thin=args.thin,
        seed=args.seed,
    )
    approx = gaussian_approx(spec)
    if args.kind == "rwm":
        out = run_rwm(spec, cfg, approx=approx)
    else:
        out = run_independence(spec, approx, cfg)
    save_chain(args.out, out, {"spec_path": str(args.spec)})
    return 0


def _cmd_tv(args) -> int:
    spec = spec_from_dict(json.loads(Path(args.spec).read_text()))
    approx = gaussian_approx(spec)
    if args.method == "grid":
        estimate = tv_grid(spec, approx, args.cells)
    else:
        estimate = tv_importance(spec, approx, args.samples, args.seed)
    _write_json(args.out, {
        "d": spec.dim,
        "noise_n": spec.noise_n,
        "method": estimate.method,
        "m": estimate.m,
        "tv": estimate.value,
        "std_err": estimate.std_err,
    })
    return 0


def _cmd_coverage(args) -> int:
    grid = GridSpec(args.n_grid)
    data = ProblemData.constant(grid)
    q0 = default_truth(grid, _bounds(args))
    result = credible_coverage(
        grid, data, q0, args.noise_n, args.alpha, args.reps, args.seed,
        method=args.method,
    )
    _write_json(args.out, {
        "alpha": result.alpha,
        "n_reps": result.n_reps,
        "hits": result.hits,
        "coverage": result.coverage,
        "ci_halfwidth": result.ci_halfwidth,
        "method": args.method,
    })
    return 0


def _cmd_contraction(args) -> int:
    spec = spec_from_dict(json.loads(Path(args.spec).read_text()))
    samples, _meta = load_chain(args.chain)
    factors = [float(tok) for tok in args.m_factors.split(",") if tok]
    results = contraction_probe(
        samples, spec.q0, spec.noise_n, args.ball_constant, factors
    )
    _write_json(args.out, {
        "d": spec.dim,
        "noise_n": spec.noise_n,
        "ball_constant": args.ball_constant,
        "results": [
            {"m_factor": r.m_factor, "eps_n": r.eps_n, "mass_outside": r.mass_outside}
            for r in results
        ],
    })
    return 0


def _cmd_sweep(args) -> int:
    plan = SweepPlan.from_json(args.plan)
    records = run_sweep(plan)
    emit_report(records, plan.out_dir)
    failures = [r for r in records if r.error]
    for record in failures:
        print(f"cell d={record.d} n={record.n} seed={record.seed} failed: {record.error}",
              file=sys.stderr)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bvm-lab",
        description="Gaussian-approximation laboratory for the inverse medium problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the forward solver once")
    p.add_argument("--n-grid", type=int, required=True)
    p.add_argument("--q-file", type=str, default=None,
                   help="JSON array of coefficients (row-wise order)")
    p.add_argument("--f-const", type=float, default=1.0)
    p.add_argument("--g-const", type=float, default=1.0)
    _add_bounds_args(p)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("spectra", help="derivative spectra across grid sizes")
    p.add_argument("--n-grid", type=str, required=True, help="comma-separated list")
    _add_bounds_args(p)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_spectra)

    p = sub.add_parser("audit", help="stability and linearization audit")
    p.add_argument("--n-grid", type=int, required=True)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    _add_bounds_args(p)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_audit)

    p = sub.add_parser("posterior", help="synthesize data and save the posterior spec")
    p.add_argument("--n-grid", type=int, required=True)
    p.add_argument("--noise-n", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prior", choices=("uniform", "tnorm"), default="uniform")
    _add_bounds_args(p)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_posterior)

    p = sub.add_parser("sample", help="draw posterior samples")
    p.add_argument("--spec", type=str, required=True)
    p.add_argument("--kind", choices=("rwm", "independence"), default="rwm")
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--burn", type=int, default=None)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--step-scale", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("tv", help="total variation to the Gaussian approximation")
    p.add_argument("--spec", type=str, required=True)
    p.add_argument("--method", choices=("grid", "importance"), default="importance")
    p.add_argument("--cells", type=int, default=2000)
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_tv)

    p = sub.add_parser("coverage", help="credible-set coverage over noise replications")
    p.add_argument("--n-grid", type=int, required=True)
    p.add_argument("--noise-n", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("ellipsoid", "mcmc-hpd"), default="ellipsoid")
    _add_bounds_args(p)
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_coverage)

    p = sub.add_parser("contraction", help="posterior mass outside contraction balls")
    p.add_argument("--spec", type=str, required=True)
    p.add_argument("--chain", type=str, required=True)
    p.add_argument("--ball-constant", type=float, default=1.0)
    p.add_argument("--m-factors", type=str, default="1.0")
    p.add_argument("--out", type=str, required=True)
    p.set_defaults(fn=_cmd_contraction)

    p = sub.add_parser("sweep", help="run a (dimension, noise) sweep from a plan file")
    p.add_argument("--plan", type=str, required=True)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
