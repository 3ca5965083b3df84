import json
from pathlib import Path

import numpy as np
import pytest

from bvm_lab.cli import main
from bvm_lab.forward import GridSpec, MediumField, ProblemData, assemble, solve
from bvm_lab.forward import Bounds
from bvm_lab.samplers import load_chain
from bvm_lab.sweep import default_truth


def run_cli(*args):
    return main([str(a) for a in args])


class TestSolveCommand:
    def test_matches_library(self, tmp_path):
        q_path = tmp_path / "q.json"
        q_path.write_text(json.dumps([1.0] * 9))
        out = tmp_path / "u.json"
        assert run_cli("solve", "--n-grid", 4, "--q-file", q_path, "--out", out) == 0
        payload = json.loads(out.read_text())
        grid = GridSpec(4)
        data = ProblemData.constant(grid)
        q = MediumField(np.ones(9), Bounds(0.1, 10.0))
        expected = solve(assemble(grid, q, data), data).values
        np.testing.assert_allclose(payload["u"], expected, rtol=1e-12)
        assert payload["d"] == 9
        assert payload["ordering"] == "row-wise"

    def test_default_coefficient(self, tmp_path):
        out = tmp_path / "u.json"
        assert run_cli("solve", "--n-grid", 3, "--out", out) == 0
        payload = json.loads(out.read_text())
        np.testing.assert_allclose(payload["q"], default_truth(GridSpec(3)).values)


class TestSpectraCommand:
    def test_growth_fit_present(self, tmp_path):
        out = tmp_path / "spectra.json"
        assert run_cli("spectra", "--n-grid", "4,6,8", "--out", out) == 0
        payload = json.loads(out.read_text())
        assert len(payload["reports"]) == 3
        assert 0.6 <= payload["growth_fit"]["slope"] <= 1.4
        for row in payload["reports"]:
            assert row["sigma_min"] > 0
            assert row["relative_asymmetry"] >= 0

    def test_no_fit_for_short_list(self, tmp_path):
        out = tmp_path / "spectra.json"
        assert run_cli("spectra", "--n-grid", "4,6", "--out", out) == 0
        assert "growth_fit" not in json.loads(out.read_text())


class TestAuditCommand:
    def test_report_fields(self, tmp_path):
        out = tmp_path / "audit.json"
        assert run_cli("audit", "--n-grid", 3, "--pairs", 15, "--seed", 4,
                       "--out", out) == 0
        payload = json.loads(out.read_text())
        assert payload["sampled_not_exhaustive"] is True
        assert payload["n_pairs"] == 15
        assert 1.9 <= payload["a3_slope"] <= 2.1


class TestPosteriorPipeline:
    @pytest.mark.filterwarnings("ignore:mass-ball radius degenerates:UserWarning")
    def test_spec_sample_tv_contraction(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        assert run_cli("posterior", "--n-grid", 2, "--noise-n", 1e4,
                       "--seed", 3, "--out", spec_path) == 0
        payload = json.loads(spec_path.read_text())
        assert payload["n_grid"] == 2
        assert len(payload["q0"]) == 1

        chain_path = tmp_path / "chain.bin"
        assert run_cli("sample", "--spec", spec_path, "--kind", "rwm",
                       "--steps", 2000, "--step-scale", 40.0, "--seed", 5,
                       "--out", chain_path) == 0
        samples, meta = load_chain(chain_path)
        assert samples.shape == (1600, 1)
        assert 0.0 < meta["acceptance_rate"] <= 1.0

        tv_path = tmp_path / "tv.json"
        assert run_cli("tv", "--spec", spec_path, "--method", "grid",
                       "--cells", 500, "--out", tv_path) == 0
        tv_payload = json.loads(tv_path.read_text())
        assert 0.0 <= tv_payload["tv"] <= 1.0
        assert tv_payload["method"] == "grid"

        contraction_path = tmp_path / "contraction.json"
        assert run_cli("contraction", "--spec", spec_path, "--chain", chain_path,
                       "--m-factors", "1.0,2.0", "--out", contraction_path) == 0
        c_payload = json.loads(contraction_path.read_text())
        assert len(c_payload["results"]) == 2

    def test_tnorm_prior(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        assert run_cli("posterior", "--n-grid", 3, "--noise-n", 1e5,
                       "--prior", "tnorm", "--out", spec_path) == 0
        assert json.loads(spec_path.read_text())["prior"]["kind"] == (
            "truncated-normal-product"
        )

    def test_independence_sampler(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        run_cli("posterior", "--n-grid", 2, "--noise-n", 1e6, "--out", spec_path)
        chain_path = tmp_path / "chain.bin"
        assert run_cli("sample", "--spec", spec_path, "--kind", "independence",
                       "--steps", 1000, "--seed", 2, "--out", chain_path) == 0
        _, meta = load_chain(chain_path)
        assert meta["kind"] == "independence-gauss"
        assert meta["acceptance_rate"] > 0.5


class TestCoverageCommand:
    def test_ellipsoid(self, tmp_path):
        out = tmp_path / "coverage.json"
        assert run_cli("coverage", "--n-grid", 3, "--noise-n", 1e6,
                       "--alpha", 0.1, "--reps", 200, "--seed", 1,
                       "--out", out) == 0
        payload = json.loads(out.read_text())
        assert abs(payload["coverage"] - 0.9) <= 0.08
        assert payload["n_reps"] == 200


class TestSweepCommand:
    def test_exit_nonzero_on_cell_failure(self, tmp_path, capsys):
        # At d=16 and very large noise the Gaussian approximation's mass sits
        # outside the box, so the importance-sampling TV degenerates; the
        # cell must be recorded with an error tag and the command exit 1.
        plan = {
            "n_grid_list": [5],
            "noise_levels": [1e2],
            "out_dir": str(tmp_path / "out"),
            "tv_samples": 10_000,
            "coverage_reps": 5,
            "chain_steps": 300,
        }
        plan_path = tmp_path / "plan.json"
        plan_path.write_text(json.dumps(plan))
        assert run_cli("sweep", "--plan", plan_path) == 1
        assert "failed" in capsys.readouterr().err
        rows = json.loads((tmp_path / "out" / "records.json").read_text())["records"]
        assert "zero posterior density" in rows[0]["error"]

    def test_exit_zero_and_reports(self, tmp_path):
        plan = {
            "n_grid_list": [3],
            "noise_levels": [1e5, 1e6],
            "out_dir": str(tmp_path / "out"),
            "tv_samples": 10_000,
            "coverage_reps": 10,
            "chain_steps": 500,
        }
        plan_path = tmp_path / "plan.json"
        plan_path.write_text(json.dumps(plan))
        assert run_cli("sweep", "--plan", plan_path) == 0
        out_dir = Path(plan["out_dir"])
        assert (out_dir / "records.csv").exists()
        assert (out_dir / "records.json").exists()
        assert len(list((out_dir / "plots").glob("*.svg"))) == 4


@pytest.mark.filterwarnings("ignore:growth condition degenerates:UserWarning")
@pytest.mark.filterwarnings("ignore:mass-ball radius degenerates:UserWarning")
class TestByteIdenticalReruns:
    """Rerunning any command with identical inputs reproduces identical bytes."""

    def _assert_identical(self, tmp_path, name, *args):
        out_a = tmp_path / f"{name}_a.json"
        out_b = tmp_path / f"{name}_b.json"
        assert run_cli(*args, "--out", out_a) == 0
        assert run_cli(*args, "--out", out_b) == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_solve(self, tmp_path):
        self._assert_identical(tmp_path, "solve", "solve", "--n-grid", 4)

    def test_spectra(self, tmp_path):
        self._assert_identical(tmp_path, "spectra", "spectra", "--n-grid", "4,6,8")

    def test_audit(self, tmp_path):
        self._assert_identical(tmp_path, "audit", "audit", "--n-grid", 3,
                               "--pairs", 12, "--seed", 7)

    def test_posterior(self, tmp_path):
        self._assert_identical(tmp_path, "posterior", "posterior", "--n-grid", 3,
                               "--noise-n", 1e5, "--seed", 9)

    @pytest.mark.filterwarnings("ignore:fewer than 100 replications:UserWarning")
    def test_coverage(self, tmp_path):
        self._assert_identical(tmp_path, "coverage", "coverage", "--n-grid", 3,
                               "--noise-n", 1e5, "--reps", 50, "--seed", 2)

    def test_sample_tv_contraction(self, tmp_path):
        spec_path = tmp_path / "spec.json"
        run_cli("posterior", "--n-grid", 2, "--noise-n", 1e4, "--out", spec_path)
        chains = []
        for tag in ("a", "b"):
            chain_path = tmp_path / f"chain_{tag}.bin"
            run_cli("sample", "--spec", spec_path, "--steps", 1500,
                    "--step-scale", 40.0, "--seed", 4, "--out", chain_path)
            chains.append(chain_path)
        assert chains[0].read_bytes() == chains[1].read_bytes()
        sidecars = [p.with_suffix(p.suffix + ".json") for p in chains]
        assert sidecars[0].read_bytes() == sidecars[1].read_bytes()

        self._assert_identical(tmp_path, "tv", "tv", "--spec", spec_path,
                               "--method", "importance", "--samples", 10_000,
                               "--seed", 3)
        self._assert_identical(tmp_path, "contraction", "contraction",
                               "--spec", spec_path, "--chain", chains[0])

    def test_sweep_resume_is_byte_identical(self, tmp_path):
        plan = {
            "n_grid_list": [2, 3],
            "noise_levels": [1e5],
            "out_dir": str(tmp_path / "out"),
            "tv_samples": 10_000,
            "coverage_reps": 10,
            "chain_steps": 500,
        }
        plan_path = tmp_path / "plan.json"
        plan_path.write_text(json.dumps(plan))
        assert run_cli("sweep", "--plan", plan_path) == 0
        out_dir = Path(plan["out_dir"])
        first = {
            p.relative_to(out_dir): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()
        }
        assert run_cli("sweep", "--plan", plan_path) == 0
        second = {
            p.relative_to(out_dir): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()
        }
        assert first == second
