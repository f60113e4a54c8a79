"""Tests for analysis helpers"""

import numpy as np
import pytest

from app.models.network import NetworkConfig
from app.models.report import RunStats, StepMetrics
from app.services.analysis_service import (
    aggregate_stats,
    baseline_ds_slots,
    build_conflict_graph,
    degree_bound_exceedance,
    phase1_steps,
    schedule_degree_bound,
    summarize,
)
from app.utils.exceptions import DomainError


def _run(iterations: int, degrees=()) -> RunStats:
    steps = [
        StepMetrics(
            step=s + 1,
            probability=1.0,
            pending=16,
            participants=16,
            slot1_survivors=8,
            deliveries=4,
            max_left_degree=deg,
            max_right_degree=deg,
            lam=deg / 4,
        )
        for s, deg in enumerate(degrees)
    ]
    return RunStats(router="randomized", n=64, d=16, g=4, iterations=iterations, slots=6 * iterations, delivered=64, per_step=steps)


class TestConflictGraph:
    """Test conflict graph degrees"""

    def test_sample_regular(self, pops44, sample_permutation):
        """Test the 4-regular instance"""
        graph = build_conflict_graph(np.arange(16), sample_permutation, pops44)
        assert graph.left_degrees.tolist() == [4, 4, 4, 4]
        assert graph.right_degrees.tolist() == [4, 4, 4, 4]
        assert graph.max_degree == 4

    def test_subset(self, pops44, sample_permutation):
        """Test degrees of a pending subset"""
        graph = build_conflict_graph(np.array([0, 1, 9]), sample_permutation, pops44)
        assert graph.edge_count == 3
        assert graph.left_degrees.tolist() == [2, 0, 1, 0]
        assert graph.right_degrees.tolist() == [0, 3, 0, 0]

    def test_empty(self, pops44, sample_permutation):
        """Test an empty pending set"""
        graph = build_conflict_graph(np.array([], dtype=np.int64), sample_permutation, pops44)
        assert graph.max_degree == 0


class TestSchedule:
    """Test schedule constants"""

    def test_phase1_steps(self):
        """Test ceil(c_eps (d/g - 1))"""
        assert phase1_steps(NetworkConfig(16, 4), 4.0) == 12
        assert phase1_steps(NetworkConfig(4, 4), 4.0) == 0
        assert phase1_steps(NetworkConfig(6, 4), 3.0) == 2

    def test_degree_bound_reaches_g(self):
        """Test the bound meets g right after the thinned phase"""
        cfg = NetworkConfig(16, 4)
        assert schedule_degree_bound(1, cfg) == 16
        assert schedule_degree_bound(13, cfg) == pytest.approx(4)

    def test_degree_bound_step_domain(self):
        """Test s must be positive"""
        with pytest.raises(DomainError):
            schedule_degree_bound(0, NetworkConfig(4, 4))


class TestBaseline:
    """Test the deterministic baseline slot count"""

    @pytest.mark.parametrize(
        "g, slots",
        list(zip([2**k for k in range(1, 13)], [37, 54, 79, 112, 153, 202, 259, 324, 397, 478, 567, 664])),
    )
    def test_d_equals_g(self, g, slots):
        """Test published values for d = g"""
        assert baseline_ds_slots(NetworkConfig(g, g)) == slots

    def test_d_greater_than_g(self):
        """Test d = 4g"""
        assert baseline_ds_slots(NetworkConfig(8, 2)) == 118

    def test_fractional_ratio_rounds_up(self):
        """Test d/g not integral"""
        # 4*1.5*4 + 2*1.5*2 + 21*1.5 + 6 + 7 = 74.5
        assert baseline_ds_slots(NetworkConfig(6, 4)) == 75

    def test_g_not_power_of_two(self):
        """Test g must be a power of two"""
        with pytest.raises(DomainError):
            baseline_ds_slots(NetworkConfig(3, 3))


class TestAggregates:
    """Test cross-run statistics"""

    def test_constant(self):
        """Test identical runs"""
        summary = summarize([8, 8, 8])
        assert (summary.mean, summary.sigma, summary.max) == (8, 0, 8)

    def test_population_sigma(self):
        """Test sigma divides by the run count"""
        summary = summarize([3, 5])
        assert (summary.mean, summary.sigma, summary.max) == (4, 1, 5)

    def test_empty(self):
        """Test no runs"""
        with pytest.raises(DomainError):
            summarize([])
        with pytest.raises(DomainError):
            aggregate_stats([])

    def test_aggregate_stats(self):
        """Test iterations, slots and first-step deliveries"""
        agg = aggregate_stats([_run(3, [4]), _run(5, [4])])
        assert agg.runs == 2
        assert agg.iterations.mean == 4
        assert agg.slots.max == 30
        assert agg.extra["first_step_deliveries"].mean == 4

    def test_degree_bound_exceedance(self):
        """Test the fraction of runs exceeding the degree schedule"""
        cfg = NetworkConfig(16, 4)
        within = _run(14, [16, 15, 14])
        above = _run(14, [16, 16])
        assert degree_bound_exceedance([within, above], cfg) == 0.5
        assert degree_bound_exceedance([within], cfg) == 0.0
