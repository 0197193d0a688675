from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ctrlrom.cli import main
from ctrlrom.errors import GreedyBudgetError
from ctrlrom.experiment import (
    ExperimentConfig,
    FAILURE_MARKER,
    default_config,
    load_config,
    run_experiment,
    run_svd_diagnostic,
    save_config,
)


def tiny_heat_config(outdir, **overrides):
    base = dict(
        family="heat",
        n_y=8,
        T=0.1,
        steps_per_point=10,
        train_grid=(3, 3),
        tolerance=1e-4,
        max_basis=12,
        cg_tol=1e-12,
        surrogate_kinds=("kernel", "gpr", "mlp"),
        kernel_beta=0.1,
        gpr_restarts=3,
        mlp_restarts=2,
        test_count=4,
        test_seed=99,
        output_dir=str(outdir),
    )
    base.update(overrides)
    return ExperimentConfig(**base).validate()


class TestConfigFile:
    def test_round_trip_lossless(self, tmp_path):
        cfg = tiny_heat_config(tmp_path / "out", tolerance=3.7e-5, kernel_beta=0.123456789012345)
        path = tmp_path / "config.ini"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_defaults_per_family(self):
        heat = default_config("heat")
        wave = default_config("wave")
        assert heat.train_grid == (8, 8)
        assert heat.tolerance == 1e-6
        assert wave.train_grid == (50,)
        # benchmark stopping point 1e-2 expressed in the weighted norm
        assert wave.tolerance == pytest.approx(1e-2 / (1.0 / 61.0) ** 0.5, rel=1e-3)
        assert wave.kernel_beta == 1.0

    def test_partial_file_keeps_family_defaults(self, tmp_path):
        path = tmp_path / "partial.ini"
        path.write_text("[family]\nfamily = wave\n\n[test]\ntest_count = 7\n", encoding="utf-8")
        cfg = load_config(path)
        assert cfg.family == "wave"
        assert cfg.test_count == 7
        assert cfg.tolerance == default_config("wave").tolerance

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(family="advection").validate()


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("run")
    cfg = tiny_heat_config(outdir)
    report = run_experiment(cfg)
    return cfg, Path(outdir), report


class TestRunExperiment:
    def test_artifacts_written(self, completed_run):
        _, outdir, _ = completed_run
        for name in (
            "greedy_results.csv",
            "analysis_results_errors.csv",
            "timings.csv",
            "basis.crb",
            "training_data.csv",
            "surrogate_kernel.csv",
            "surrogate_gpr.csv",
            "surrogate_mlp.bin",
        ):
            assert (outdir / name).exists(), name

    def test_row_count_matches_test_count(self, completed_run):
        cfg, outdir, report = completed_run
        lines = (outdir / "analysis_results_errors.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + cfg.test_count
        assert len(report.rows) == cfg.test_count

    def test_reliability_on_emitted_rows(self, completed_run):
        _, _, report = completed_run
        assert report.ok()
        for row in report.rows:
            for res in row.results.values():
                assert res.true_adjoint_error <= res.estimated_error * (1 + 1e-6)

    def test_summaries_are_means_of_rows(self, completed_run):
        _, _, report = completed_run
        for summary in report.summaries():
            adjoint = [r.results[summary.name].true_adjoint_error for r in report.rows]
            assert summary.avg_adjoint_error == pytest.approx(float(np.mean(adjoint)))
            assert summary.max_adjoint_error == pytest.approx(float(np.max(adjoint)))

    def test_rerun_reproduces_error_csv_bytes(self, completed_run, tmp_path):
        cfg, outdir, _ = completed_run
        rerun_dir = tmp_path / "rerun"
        run_experiment(replace(cfg, output_dir=str(rerun_dir)))
        first = (outdir / "analysis_results_errors.csv").read_bytes()
        second = (rerun_dir / "analysis_results_errors.csv").read_bytes()
        assert first == second

    def test_zero_test_count_gives_history_only(self, tmp_path):
        cfg = tiny_heat_config(tmp_path, test_count=0)
        report = run_experiment(cfg)
        assert report.rows == []
        lines = (tmp_path / "analysis_results_errors.csv").read_text().strip().splitlines()
        assert len(lines) == 1  # headers only
        greedy_lines = (tmp_path / "greedy_results.csv").read_text().strip().splitlines()
        assert len(greedy_lines) == 1 + len(report.greedy_history)

    def test_failure_leaves_marker(self, tmp_path):
        cfg = tiny_heat_config(tmp_path, max_basis=1, tolerance=1e-14)
        with pytest.raises(GreedyBudgetError):
            run_experiment(cfg)
        marker = tmp_path / FAILURE_MARKER
        assert marker.exists()
        assert "offline-greedy" in marker.read_text()

    def test_successful_rerun_clears_stale_marker(self, tmp_path):
        cfg = tiny_heat_config(tmp_path, max_basis=1, tolerance=1e-14)
        with pytest.raises(GreedyBudgetError):
            run_experiment(cfg)
        assert (tmp_path / FAILURE_MARKER).exists()
        run_experiment(tiny_heat_config(tmp_path, test_count=2))
        assert not (tmp_path / FAILURE_MARKER).exists()


class TestSvdDiagnostic:
    def test_heat_spectrum(self, tmp_path):
        cfg = tiny_heat_config(tmp_path, train_grid=(3, 3))
        spectra = run_svd_diagnostic(cfg, outdir=tmp_path)
        sigma = spectra[None]
        assert len(sigma) == min(9, cfg.n_y)  # min(snapshots, state dimension)
        assert np.all(np.diff(sigma) <= 1e-12)  # descending
        assert (tmp_path / "singular_values.csv").exists()

    def test_wave_damping_sweep(self, tmp_path):
        cfg = ExperimentConfig(
            family="wave", n_y=6, T=0.5, steps_per_point=4, train_grid=(4,),
            tolerance=1e-2, cg_tol=1e-10, test_count=0, output_dir=str(tmp_path),
        ).validate()
        spectra = run_svd_diagnostic(cfg, damping_list=[0.0, 20.0], outdir=tmp_path)
        assert set(spectra) == {0.0, 20.0}
        header = (tmp_path / "singular_values.csv").read_text().splitlines()[0]
        assert "nu=0" in header and "nu=20" in header


class TestCli:
    def test_full_run_exit_code_and_files(self, tmp_path):
        cfg = tiny_heat_config(tmp_path / "out")
        cfg_path = tmp_path / "cfg.ini"
        save_config(cfg, cfg_path)
        assert main(["full-run", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "out" / "analysis_results_errors.csv").exists()

    def test_staged_pipeline(self, tmp_path):
        outdir = tmp_path / "staged"
        cfg = tiny_heat_config(outdir, test_count=3)
        cfg_path = tmp_path / "cfg.ini"
        save_config(cfg, cfg_path)
        assert main(["offline", "--config", str(cfg_path)]) == 0
        assert (outdir / "basis.crb").exists()
        assert main(["train-surrogates", "--config", str(cfg_path)]) == 0
        assert (outdir / "surrogate_gpr.csv").exists()
        assert main(["online", "--config", str(cfg_path)]) == 0
        assert (outdir / "timings.csv").exists()

    def test_flag_overrides(self, tmp_path):
        outdir = tmp_path / "flags"
        assert main([
            "offline", "--family", "heat", "--n-y", "6", "--final-time", "0.1",
            "--steps-per-point", "8", "--train-grid", "2", "2",
            "--tolerance", "1e-3", "--output-dir", str(outdir),
        ]) == 0
        assert (outdir / "basis.crb").exists()

    def test_svd_diag_command(self, tmp_path):
        outdir = tmp_path / "svd"
        assert main([
            "svd-diag", "--family", "heat", "--n-y", "6", "--final-time", "0.1",
            "--steps-per-point", "8", "--train-grid", "3", "3",
            "--output-dir", str(outdir),
        ]) == 0
        assert (outdir / "singular_values.csv").exists()
