"""Tests for experiments and verification suites"""

import pytest

from app.config import SweepPreset, get_sweep_preset
from app.models.experiment import ExperimentSpec, PermSource, Protocol
from app.services import experiment_service
from app.services.experiment_service import (
    DEFAULT_BUDGETS,
    engine_self_check,
    run_experiment,
    run_single,
    run_sweep,
    verify_suite,
)
from app.utils.exceptions import UnknownSuiteError


class TestExperimentSpec:
    """Test experiment configuration"""

    def test_file_source_needs_path(self):
        """Test perm_source=file without perm_path"""
        with pytest.raises(ValueError):
            ExperimentSpec(d=4, g=4, perm_source=PermSource.FILE)

    def test_n(self):
        """Test derived size"""
        assert ExperimentSpec(d=8, g=2).n == 16


class TestRunExperiment:
    """Test seeded experiment blocks"""

    def test_rows_and_aggregate(self):
        """Test one row per run, ordered by seed index"""
        report = run_experiment(ExperimentSpec(d=4, g=4, runs=5, seed=0x2A, protocol=Protocol.PAPER5))
        assert [r.seed_index for r in report.rows] == [0, 1, 2, 3, 4]
        assert report.aggregate.runs == 5
        assert all(r.slots == 5 * r.iterations for r in report.rows)
        assert all(r.conflicts_ack == 0 and r.conflicts_delivery == 0 for r in report.rows)

    def test_reproducible(self):
        """Test equal specs give equal rows apart from wall time"""
        spec = ExperimentSpec(d=8, g=4, runs=3, seed=7)
        first = [r.model_dump(exclude={"wall_ms"}) for r in run_experiment(spec).rows]
        second = [r.model_dump(exclude={"wall_ms"}) for r in run_experiment(spec).rows]
        assert first == second

    def test_workers_do_not_change_results(self):
        """Test threaded runs match sequential runs"""
        spec = ExperimentSpec(d=8, g=4, runs=4, seed=3)
        sequential = [r.model_dump(exclude={"wall_ms"}) for r in run_experiment(spec).rows]
        threaded = [r.model_dump(exclude={"wall_ms"}) for r in run_experiment(spec.model_copy(update={"workers": 3})).rows]
        assert sequential == threaded

    def test_run_single_trace(self):
        """Test a single run carries its trace"""
        stats, row = run_single(ExperimentSpec(d=4, g=4, runs=1), 0)
        assert stats.iterations == row.iterations == len(stats.per_step)
        assert row.protocol == "reversal6"

    def test_sweep(self):
        """Test every cell is run"""
        results = run_sweep([(2, 2), (4, 2)], ExperimentSpec(d=1, g=1, runs=2))
        assert [(spec.d, spec.g) for spec, _ in results] == [(2, 2), (4, 2)]
        assert all(len(report.rows) == 2 for _, report in results)


class TestSweepPresets:
    """Test sweep grids"""

    def test_cells(self):
        """Test n = ratio * g^2 cells"""
        assert SweepPreset(sizes=(16, 64, 256)).cells() == [
            (4, 4), (8, 8), (16, 16), (8, 2), (16, 4), (32, 8), (32, 2), (64, 4)
        ]

    def test_fallback(self):
        """Test unknown presets fall back to desk"""
        assert get_sweep_preset("nope") is get_sweep_preset("desk")


class TestVerifySuites:
    """Test invariant suites on small budgets"""

    @pytest.mark.parametrize("suite", ["prop1", "offline", "sorting", "buffers", "exactly-once"])
    def test_suite_passes(self, suite, monkeypatch):
        """Test every suite passes"""
        monkeypatch.setattr(experiment_service, "EXHAUSTIVE_MAX_N", 5)
        report = verify_suite(suite, budget=3)
        assert report.passed, report.model_dump()
        assert report.violations == 0
        assert report.checks

    @pytest.mark.slow
    @pytest.mark.parametrize("suite", sorted(DEFAULT_BUDGETS))
    def test_suite_passes_at_default_budget(self, suite):
        """Test every suite at its full trial count"""
        report = verify_suite(suite)
        assert report.passed, report.model_dump()

    def test_default_budgets(self):
        """Test each suite has its own trial count"""
        assert set(DEFAULT_BUDGETS) == {"prop1", "offline", "sorting", "buffers", "exactly-once"}
        assert DEFAULT_BUDGETS["sorting"] == 10000
        assert DEFAULT_BUDGETS["offline"] == 1000

    def test_unknown_suite(self):
        """Test an unregistered suite name"""
        with pytest.raises(UnknownSuiteError):
            verify_suite("nope")


class TestEngineSelfCheck:
    """Test the startup self-check"""

    def test_passes(self):
        """Test all three routers deliver on POPS(2,2)"""
        assert engine_self_check() is True

    def test_reports_failure(self, monkeypatch):
        """Test a router error turns into False"""
        from app.services import experiment_service
        from app.utils.exceptions import InvariantViolation

        def broken(perm, cfg):
            raise InvariantViolation("misplaced")

        monkeypatch.setattr(experiment_service, "route_by_sorting", broken)
        assert engine_self_check() is False
