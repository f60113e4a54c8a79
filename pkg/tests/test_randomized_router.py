"""Tests for the randomized router"""

import numpy as np
import pytest

from app.models.experiment import LossPolicy, Protocol, ScheduleMode
from app.models.network import CouplerState, NetworkConfig
from app.services.analysis_service import degree_bound_exceedance
from app.services.permutation_service import stress_permutation, uniform_permutation
from app.services.randomized_router import (
    ParticipationSchedule,
    RoutingState,
    contention_cap,
    first_step_delivered_fraction,
    participation_probability,
    record_failures,
    route_randomized,
    run_step,
    scheduled_probability,
    step_probability,
)
from app.utils.exceptions import PacketLossDetected, PermutationValidationError, UnsupportedConfigError


class TestParticipationSchedule:
    """Test the coin bias law"""

    def test_d_equals_g_always_participates(self):
        """Test there is no thinned phase when d == g"""
        cfg = NetworkConfig(8, 8)
        sched = ParticipationSchedule.for_config(cfg)
        assert sched.phase1_steps == 0
        assert participation_probability(1, cfg, sched) == 1.0

    def test_thinned_phase(self):
        """Test the probabilities of the d = 4g schedule"""
        cfg = NetworkConfig(16, 4)
        sched = ParticipationSchedule.for_config(cfg, c_eps=4.0)
        assert sched.phase1_steps == 12
        assert participation_probability(1, cfg, sched) == pytest.approx(0.25)
        assert participation_probability(5, cfg, sched) == pytest.approx(1 / 3)
        assert participation_probability(12, cfg, sched) <= 1.0
        assert participation_probability(13, cfg, sched) == 1.0

    def test_probabilities_nondecreasing(self):
        """Test p grows towards 1 over the first phase"""
        cfg = NetworkConfig(64, 4)
        sched = ParticipationSchedule.for_config(cfg)
        probs = [participation_probability(s, cfg, sched) for s in range(1, sched.phase1_steps + 3)]
        assert all(a <= b for a, b in zip(probs, probs[1:]))
        assert probs[-1] == 1.0

    def test_adaptive_mode_per_group(self):
        """Test adaptive probabilities follow pending counts per group"""
        cfg = NetworkConfig(8, 2)
        state = RoutingState.from_pending(np.arange(16), cfg, list(range(8)) + [8, 9])
        p = step_probability(state, ParticipationSchedule.for_config(cfg, mode=ScheduleMode.ADAPTIVE))
        assert p[0] == pytest.approx(2 / 8)
        assert p[15] == pytest.approx(1.0)


class TestRunStep:
    """Test single steps"""

    def test_single_packet_walk(self):
        """Test the couplers used by one packet with a scripted intermediate group"""
        cfg = NetworkConfig(3, 3)
        perm = [0, 5, 2, 3, 4, 1, 6, 7, 8]
        state = RoutingState.from_pending(perm, cfg, [5])
        report = run_step(state, Protocol.PAPER5, 1.0, seed=0, intermediate=np.full(9, 2))

        first, second, *_, delivery = report.outcomes
        assert first.reading(2, 1).state is CouplerState.DELIVERED
        assert second.reading(1, 2).state is CouplerState.DELIVERED
        assert delivery.reading(0, 1).state is CouplerState.DELIVERED
        assert report.delivered.tolist() == [5]
        assert state.done
        assert state.deliveries[5] == 1
        assert state.slot == 5

    def test_reversal_walk_acks_back(self):
        """Test the six-slot protocol deletes the original after delivery"""
        cfg = NetworkConfig(3, 3)
        perm = [0, 5, 2, 3, 4, 1, 6, 7, 8]
        state = RoutingState.from_pending(perm, cfg, [5])
        report = run_step(state, Protocol.REVERSAL6, 1.0, seed=0, intermediate=np.full(9, 2))
        assert len(report.outcomes) == 6
        assert report.outcomes[2].reading(0, 1).state is CouplerState.DELIVERED
        assert report.metrics.ack_mismatches == 0
        assert state.done

    def test_d_equals_g_ack_and_delivery_slots_conflict_free(self, pops44, sample_permutation):
        """Test slots 3-5 never conflict on POPS(4,4)"""
        for seed in range(20):
            stats = route_randomized(sample_permutation, pops44, Protocol.PAPER5, seed=seed, loss_policy=LossPolicy.ABORT)
            assert stats.delivered == 16
            for m in stats.per_step:
                assert m.conflicts[2:] == [0, 0, 0]
                assert m.ack_mismatches == 0

    def test_d_less_than_g_unsupported(self):
        """Test the randomized router needs d >= g"""
        cfg = NetworkConfig(2, 4)
        with pytest.raises(UnsupportedConfigError):
            route_randomized(np.arange(8), cfg)

    def test_invalid_permutation(self, pops44):
        """Test a non-bijection is rejected"""
        with pytest.raises(PermutationValidationError):
            route_randomized([0] * 16, pops44)

    def test_step_metrics(self, pops44, sample_permutation):
        """Test the first step sees the full 4-regular conflict graph"""
        state = RoutingState(sample_permutation, pops44)
        report = run_step(state, Protocol.PAPER5, 1.0, seed=1)
        m = report.metrics
        assert m.pending == 16
        assert m.participants == 16
        assert m.max_left_degree == 4
        assert m.max_right_degree == 4
        assert m.lam == 1.0
        assert len(m.conflicts) == 5
        assert m.max_buffer <= 3


class TestRouteRandomized:
    """Test full runs"""

    @pytest.mark.parametrize("protocol", [Protocol.PAPER5, Protocol.REVERSAL6])
    def test_delivers_everything_once(self, protocol):
        """Test every packet arrives exactly once"""
        cfg = NetworkConfig(8, 8)
        stats = route_randomized(uniform_permutation(64, 3), cfg, protocol, seed=3)
        assert stats.delivered == 64
        assert stats.duplicates == 0
        assert stats.slots == protocol.slots_per_step * stats.iterations

    def test_seeded_runs_reproducible(self):
        """Test equal seeds give equal traces"""
        cfg = NetworkConfig(16, 4)
        perm = uniform_permutation(cfg.n, 9)
        first = route_randomized(perm, cfg, seed=9)
        second = route_randomized(perm, cfg, seed=9)
        assert first.model_dump() == second.model_dump()

    def test_thinned_phase_runs(self):
        """Test d > g uses the participation schedule"""
        cfg = NetworkConfig(16, 4)
        stats = route_randomized(uniform_permutation(cfg.n, 2), cfg, Protocol.REVERSAL6, seed=2)
        assert stats.per_step[0].probability == pytest.approx(0.25)
        assert stats.delivered == cfg.n

    def test_adaptive_schedule(self):
        """Test the adaptive schedule completes"""
        cfg = NetworkConfig(16, 4)
        sched = ParticipationSchedule.for_config(cfg, mode=ScheduleMode.ADAPTIVE)
        stats = route_randomized(uniform_permutation(cfg.n, 4), cfg, Protocol.REVERSAL6, sched, seed=4)
        assert stats.delivered == cfg.n

    def test_immediate_exit_buffers(self):
        """Test occupancy stays within two with immediate exit"""
        cfg = NetworkConfig(8, 8)
        stats = route_randomized(uniform_permutation(64, 6), cfg, seed=6, immediate_exit=True)
        assert max(m.max_buffer for m in stats.per_step) <= 2

    def test_reversal_exactly_once_on_stress_input(self):
        """Test the six-slot protocol never loses a packet with d > g"""
        cfg = NetworkConfig(16, 4)
        perm = stress_permutation(cfg)
        for seed in range(10):
            stats = route_randomized(perm, cfg, Protocol.REVERSAL6, seed=seed, loss_policy=LossPolicy.ABORT)
            assert stats.losses == 0
            assert stats.delivered == cfg.n

    def test_paper5_losses_repaired(self):
        """Test lost packets are requeued and still delivered"""
        cfg = NetworkConfig(16, 4)
        perm = stress_permutation(cfg)
        for seed in range(10):
            stats = route_randomized(perm, cfg, Protocol.PAPER5, seed=seed, loss_policy=LossPolicy.REPAIR)
            assert stats.delivered == cfg.n
            assert stats.duplicates == 0

    def test_paper5_abort_raises_on_loss(self):
        """Test paper5 loses acknowledged packets on the stress input and abort surfaces it"""
        cfg = NetworkConfig(16, 4)
        perm = stress_permutation(cfg)
        losses = [
            route_randomized(perm, cfg, Protocol.PAPER5, seed=s, loss_policy=LossPolicy.REPAIR).losses
            for s in range(30)
        ]
        assert sum(losses) > 0
        seed = next(s for s, lost in enumerate(losses) if lost)
        with pytest.raises(PacketLossDetected) as exc_info:
            route_randomized(perm, cfg, Protocol.PAPER5, seed=seed, loss_policy=LossPolicy.ABORT)
        assert exc_info.value.packet_ids


class TestContentionBackoff:
    """Test participation backoff after failed saturated steps"""

    def test_cap_halves_down_to_floor(self):
        """Test the cap is 2^-f bounded below by 1/ceil(d/g)"""
        state = RoutingState(np.arange(64), NetworkConfig(16, 4))
        state.failures[1] = 1
        state.failures[2] = 5
        cap = contention_cap(state)
        assert cap[0] == 1.0
        assert cap[1] == 0.5
        assert cap[2] == 0.25

    def test_floor_rounds_ratio_up(self):
        """Test the floor for a ratio that is not an integer"""
        state = RoutingState(np.arange(15), NetworkConfig(5, 3))
        state.failures[:] = 10
        assert contention_cap(state)[0] == pytest.approx(0.5)

    def test_failures_counted_on_saturated_steps_only(self):
        """Test pending participants of a p = 1 step are charged, others are not"""
        state = RoutingState(np.arange(64), NetworkConfig(16, 4))
        state.pending[1] = False
        participants = np.array([0, 1, 2])
        record_failures(state, participants, 0.5)
        assert not state.failures.any()
        record_failures(state, participants, 1.0)
        assert state.failures[:4].tolist() == [1, 0, 1, 0]

    def test_failures_per_group_in_adaptive_mode(self):
        """Test only processors whose own probability saturated are charged"""
        state = RoutingState(np.arange(64), NetworkConfig(16, 4))
        scheduled = np.where(np.arange(64) < 16, 1.0, 0.5)
        record_failures(state, np.array([3, 20]), scheduled)
        assert state.failures[3] == 1
        assert state.failures[20] == 0

    def test_step_probability_capped(self):
        """Test a packet with failures takes part less often once the schedule saturates"""
        cfg = NetworkConfig(16, 4)
        sched = ParticipationSchedule.for_config(cfg)
        state = RoutingState(np.arange(64), cfg)
        state.step = sched.phase1_steps + 5
        assert step_probability(state, sched) == 1.0
        state.failures[7] = 2
        p = step_probability(state, sched)
        assert p[7] == 0.25
        assert p[8] == 1.0

    def test_d_equals_g_unchanged(self):
        """Test the cap never applies when d == g"""
        cfg = NetworkConfig(4, 4)
        sched = ParticipationSchedule.for_config(cfg)
        state = RoutingState(np.arange(16), cfg)
        state.failures[:] = 3
        assert step_probability(state, sched) == 1.0

    @pytest.mark.parametrize("protocol", [Protocol.REVERSAL6, Protocol.PAPER5])
    def test_uniform_runs_finish_with_d_above_g(self, protocol):
        """Test 100 uniform permutations on POPS(16,4) all complete"""
        cfg = NetworkConfig(16, 4)
        for k in range(100):
            stats = route_randomized(uniform_permutation(cfg.n, k), cfg, protocol, seed=k, max_steps=2000)
            assert stats.delivered == cfg.n
            assert stats.duplicates == 0

    def test_same_class_pair_finishes(self):
        """Test two packets sharing a delivery coupler both arrive after the schedule saturates"""
        cfg = NetworkConfig(8, 2)
        sched = ParticipationSchedule(phase1_steps=0, c_eps=4.0)
        state = RoutingState.from_pending(np.roll(np.arange(16), 8), cfg, [0, 2])
        assert state.perm[0] // cfg.d == state.perm[2] // cfg.d
        assert state.perm[0] % cfg.g == state.perm[2] % cfg.g
        for _ in range(200):
            if state.done:
                break
            scheduled = scheduled_probability(state, sched)
            report = run_step(state, Protocol.REVERSAL6, step_probability(state, sched), seed=9)
            record_failures(state, report.participants, scheduled)
        assert state.done
        assert state.deliveries[[0, 2]].tolist() == [1, 1]


class TestStatisticalBehaviour:
    """Long reproductions of published iteration counts"""

    @pytest.mark.slow
    @pytest.mark.parametrize("g, expected", [(16, 6.10), (64, 6.82), (256, 7.16)])
    def test_mean_iterations_d_equals_g(self, g, expected):
        """Test mean iterations over 100 runs"""
        cfg = NetworkConfig(g, g)
        iterations = []
        for k in range(100):
            perm = uniform_permutation(cfg.n, k)
            iterations.append(route_randomized(perm, cfg, Protocol.PAPER5, seed=k).iterations)
        assert abs(np.mean(iterations) - expected) <= 0.5
        assert max(iterations) <= 9

    @pytest.mark.slow
    def test_saturated_first_step_fraction(self):
        """Test the single-step delivery fraction at p = 1 on POPS(1024,1024)"""
        cfg = NetworkConfig(1024, 1024)
        fractions = [first_step_delivered_fraction(uniform_permutation(cfg.n, s), cfg, seed=s) for s in range(20)]
        assert abs(np.mean(fractions) - 0.2546) <= 0.01

    @pytest.mark.slow
    @pytest.mark.parametrize("d, g, expected", [(512, 128, 19.06), (1024, 64, 67.12)])
    def test_mean_iterations_d_above_g(self, d, g, expected):
        """Test reversal6 mean iterations on n = 65536 within 10%"""
        cfg = NetworkConfig(d, g)
        iterations = [
            route_randomized(uniform_permutation(cfg.n, k), cfg, Protocol.REVERSAL6, seed=k).iterations
            for k in range(10)
        ]
        assert abs(np.mean(iterations) - expected) <= 0.1 * expected

    @pytest.mark.slow
    @pytest.mark.parametrize("g, expected", [(32, 32.50), (64, 34.50), (256, 35.55)])
    def test_mean_slots_d_equals_g(self, g, expected):
        """Test paper5 slots are five per step and near the published slot counts"""
        cfg = NetworkConfig(g, g)
        runs = [route_randomized(uniform_permutation(cfg.n, k), cfg, Protocol.PAPER5, seed=k) for k in range(50)]
        assert all(r.slots == 5 * r.iterations for r in runs)
        assert abs(np.mean([r.slots for r in runs]) - expected) <= 0.15 * expected

    @pytest.mark.slow
    def test_degree_bound_exceedance_on_runs(self):
        """Test the exceedance share over real d = 4g runs"""
        cfg = NetworkConfig(64, 16)
        runs = [route_randomized(uniform_permutation(cfg.n, k), cfg, seed=k) for k in range(20)]
        assert 0.0 <= degree_bound_exceedance(runs, cfg) <= 1.0

    def test_first_step_fraction_small(self, pops44, sample_permutation):
        """Test the fraction is a proper share"""
        fraction = first_step_delivered_fraction(sample_permutation, pops44, seed=0)
        assert 0.0 < fraction <= 1.0
