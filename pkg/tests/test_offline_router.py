"""Tests for offline routing by edge coloring"""

import itertools

import numpy as np
import pytest

from app.models.network import NetworkConfig
from app.services.offline_router import (
    EdgeColoring,
    GroupMultigraph,
    build_offline_schedule,
    edge_color_bipartite,
    equalize_color_classes,
    route_offline,
    verify_coloring,
)
from app.services.permutation_service import uniform_permutation
from app.utils.exceptions import InvariantViolation, PermutationValidationError


class TestEdgeColoring:
    """Test bipartite edge coloring"""

    def test_sample_multigraph(self, pops44, sample_permutation):
        """Test a 4-regular multigraph gets 4 perfect matchings"""
        mg = GroupMultigraph.from_permutation(sample_permutation, pops44)
        assert mg.max_degree == 4
        coloring = edge_color_bipartite(mg)
        assert coloring.num_colors == 4
        for c in range(4):
            cls = mg.edges[coloring.colors == c]
            assert sorted(cls[:, 0].tolist()) == [0, 1, 2, 3]
            assert sorted(cls[:, 1].tolist()) == [0, 1, 2, 3]

    def test_parallel_edges(self):
        """Test multigraph edges between the same groups get distinct colors"""
        cfg = NetworkConfig(3, 2)
        mg = GroupMultigraph.from_permutation(np.arange(6), cfg)
        coloring = edge_color_bipartite(mg)
        assert coloring.num_colors == 3
        assert sorted(coloring.colors[:3].tolist()) == [0, 1, 2]

    def test_improper_coloring_detected(self, pops44, sample_permutation):
        """Test verify_coloring rejects clashing colors"""
        mg = GroupMultigraph.from_permutation(sample_permutation, pops44)
        with pytest.raises(InvariantViolation):
            verify_coloring(mg, EdgeColoring(colors=np.zeros(16, dtype=np.int64), num_colors=4))

    def test_equalize_into_g_classes(self):
        """Test d < g recoloring gives g classes of d edges"""
        cfg = NetworkConfig(2, 8)
        mg = GroupMultigraph.from_permutation(uniform_permutation(cfg.n, 5), cfg)
        coloring = equalize_color_classes(mg, edge_color_bipartite(mg), cfg.g)
        assert coloring.class_sizes().tolist() == [2] * 8

    def test_equalize_needs_enough_colors(self, pops44, sample_permutation):
        """Test fewer colors than the degree is impossible"""
        mg = GroupMultigraph.from_permutation(sample_permutation, pops44)
        with pytest.raises(InvariantViolation):
            equalize_color_classes(mg, edge_color_bipartite(mg), 2)


class TestRouteOffline:
    """Test offline routing end to end"""

    def test_sample_in_two_slots(self, pops44, sample_permutation):
        """Test POPS(4,4) needs 2 slots and no conflicts"""
        schedule, stats = route_offline(sample_permutation, pops44)
        assert stats.slots == 2
        assert stats.delivered == 16
        assert stats.slot_conflicts == [0, 0]
        assert schedule.batch_count == 1

    @pytest.mark.parametrize("d, g, slots", [(8, 2, 8), (6, 4, 4), (2, 8, 2), (16, 4, 8), (5, 5, 2)])
    def test_slot_counts(self, d, g, slots):
        """Test 2 * ceil(d / g) slots"""
        cfg = NetworkConfig(d, g)
        for seed in range(5):
            _, stats = route_offline(uniform_permutation(cfg.n, seed), cfg)
            assert stats.slots == slots
            assert not any(stats.slot_conflicts)

    def test_d_one_direct(self):
        """Test d = 1 routes every permutation in one slot"""
        cfg = NetworkConfig(1, 4)
        for perm in itertools.permutations(range(4)):
            schedule, stats = route_offline(list(perm), cfg)
            assert stats.slots == 1
            assert schedule.direct

    def test_pops22_exhaustive(self):
        """Test every permutation of POPS(2,2)"""
        cfg = NetworkConfig(2, 2)
        for perm in itertools.permutations(range(4)):
            _, stats = route_offline(list(perm), cfg)
            assert stats.slots == 2
            assert stats.slot_conflicts == [0, 0]

    def test_relays_unique(self):
        """Test no relay holds two packets of a batch"""
        cfg = NetworkConfig(8, 4)
        schedule = build_offline_schedule(uniform_permutation(cfg.n, 1), cfg)
        for k in range(schedule.batch_count):
            relays = schedule.relay[schedule.batch == k]
            assert len(set(relays.tolist())) == relays.size
            assert np.all(relays // cfg.d == schedule.intermediate[schedule.batch == k])

    def test_schedule_dump(self, pops44, sample_permutation):
        """Test the JSON view"""
        schedule, _ = route_offline(sample_permutation, pops44)
        dump = schedule.dump()
        assert dump.slots == 2
        assert len(dump.itineraries) == 16
        first = dump.itineraries[0]
        assert first.slot_a[1] == 0
        assert first.slot_b[0] == sample_permutation[0] // 4
        assert first.slot_a[0] == first.slot_b[1] == first.intermediate

    def test_invalid_permutation(self, pops44):
        """Test non-bijections are rejected"""
        with pytest.raises(PermutationValidationError):
            route_offline(list(range(15)), pops44)
