import csv
import math

import numpy as np
import pytest

from adaptsim.adaptation import PR1, ActivationPolicy, NodeProfile, ThresholdScale
from adaptsim.arch_graph import DataKind, build_abstract
from adaptsim.context import EnergyCostModel, LinkStochastics, StochasticParams
from adaptsim.errors import IncomparableTraces, ScenarioError, UnknownNode
from adaptsim.refinement import refine
from adaptsim.sim_engine import (
    LINK_CSV_HEADER,
    NODE_CSV_HEADER,
    NodeLifetime,
    Scenario,
    ScheduledEvent,
    compare,
    init_state,
    lifetime,
    run,
    step,
)
from conftest import pair_scenario

D, P = DataKind.D, DataKind.P
FREE_MSGS = dict(push_send_cost=0, push_recv_cost=0, pull_request_cost=0, pull_transfer_cost=0)


def fixed_bw(mean):
    return LinkStochastics(mean, 0.0, 100.0)


class TestStep:
    def test_no_production_only_time_drain(self):
        tr = run(pair_scenario(D, lam=0.0, duration=20, adaptive=False))
        assert tr.transferred.sum() == 0 and tr.offered.sum() == 0
        # both nodes idle with an active processing entity
        expected = 100 - 0.005 * np.arange(21)
        np.testing.assert_allclose(tr.energy, np.column_stack([expected, expected]), atol=1e-9)

    def test_push_cap_hand_trace(self):
        sc = pair_scenario(D, lam=50.0, duration=3, adaptive=False, queue_bound=5)
        tr = run(sc)
        q = 0
        for r in range(1, 4):
            off = int(tr.offered[r, 0])
            assert off >= 6  # lambda 50 makes this certain in practice
            assert tr.transferred[r, 0] == 1
            q = q + off - 1
            expected_drop = max(0, q - 5)
            q = min(q, 5)
            assert tr.queued[r, 0] == q == 5
            assert tr.dropped[r, 0] == expected_drop

    def test_fractional_rate_token_bucket(self):
        tr = run(pair_scenario(D, lam=20.0, duration=6, adaptive=False, initial_rate=0.5))
        # credit 0.5 -> 1.0 -> 0.5 -> 1.0 ...
        assert tr.transferred[1:, 0].tolist() == [0, 1, 0, 1, 0, 1]

    def test_bandwidth_cap(self):
        stoch = StochasticParams(production={"S.T_D": 40.0}, default_bandwidth=fixed_bw(3.0))
        tr = run(pair_scenario(D, duration=5, adaptive=False, initial_rate=10.0, stochastic=stoch))
        assert tr.transferred[1:, 0].tolist() == [3] * 5

    def test_message_size(self):
        stoch = StochasticParams(production={"S.T_D": 40.0}, default_bandwidth=fixed_bw(9.0))
        tr = run(pair_scenario(D, duration=3, adaptive=False, initial_rate=10.0, stochastic=stoch, message_size=2.0))
        assert tr.transferred[1:, 0].tolist() == [4] * 3

    def test_pull_requests_cost_without_data(self):
        costs = EnergyCostModel(idle_cost=0.01, active_base_cost=0.02, pull_request_cost=0.1, pull_transfer_cost=0.3)
        tr = run(pair_scenario(P, lam=0.0, duration=1, adaptive=False, cost_model=costs))
        r, s = tr.node_index("R"), tr.node_index("S")
        assert tr.energy[1, r] == pytest.approx(100 - 0.01 - 0.1)
        assert tr.energy[1, s] == pytest.approx(100 - 0.01)

    def test_pull_transfer_charged_to_producer(self):
        costs = EnergyCostModel(idle_cost=0.01, active_base_cost=0.02, pull_request_cost=0.1, pull_transfer_cost=0.3)
        tr = run(pair_scenario(P, lam=30.0, duration=1, adaptive=False, cost_model=costs, initial_rate=2.0))
        r, s = tr.node_index("R"), tr.node_index("S")
        assert tr.transferred[1, 0] == 2
        assert tr.energy[1, r] == pytest.approx(100 - 0.02 - 2 * 0.1)
        assert tr.energy[1, s] == pytest.approx(100 - 0.02 - 2 * 0.3)

    def test_static_rate_constant(self):
        tr = run(pair_scenario(D, lam=2.0, duration=50, adaptive=False, initial_energy={"S": 10.0}))
        assert np.all(tr.rate == PR1)
        assert tr.events == []

    def test_adaptation_lowers_rate(self):
        tr = run(pair_scenario(D, lam=2.0, duration=25, initial_energy={"S": 30.0}))
        # S energy in the lowest band: (0.1 + 1 + 1 + 1) / 4 from the first adaptation at t=10
        assert np.all(tr.rate[:10, 0] == PR1)
        assert tr.rate[10, 0] == pytest.approx(0.775)
        t, lid, gr_a, gr_b, rate = tr.events[0]
        assert (t, lid) == (10.0, "S.C->R.C:D")
        assert gr_a == pytest.approx(0.775) and gr_b == PR1 and rate == pytest.approx(0.775)

    def test_activation_switches_low_priority_entity(self):
        sc = pair_scenario(P, lam=1.0, duration=20, initial_energy={"R": 10.0}, activation=ActivationPolicy(20, 30))
        tr = run(sc)
        col = tr.entity_ids.index("R.T_P")
        assert tr.active[9, col] and not tr.active[10, col]
        # consumer inactive: nothing transferred, producer keeps queueing
        assert tr.transferred[11:, 0].sum() == 0

    def test_dead_node_freezes(self):
        costs = EnergyCostModel(idle_cost=1.0, active_base_cost=1.0, inactive_cost=0.0, **FREE_MSGS)
        sc = pair_scenario(D, lam=5.0, duration=30, adaptive=False, cost_model=costs,
                           node_cost_models={"S": EnergyCostModel(**FREE_MSGS)}, initial_energy={"R": 10.0})
        tr = run(sc)
        assert lifetime(tr, "R") == 10.0
        assert tr.transferred[11:, 0].sum() == 0
        r = tr.node_index("R")
        assert np.all(tr.energy[10:, r] == 0.0)
        assert not tr.active[10:, tr.entity_ids.index("R.T_D")].any()

    def test_scheduled_weights_event(self):
        ev = ScheduledEvent(15.0, "weights", "S", {"alpha": 0.0})
        tr = run(pair_scenario(D, lam=1.0, duration=30, initial_energy={"S": 30.0}, scheduled_events=(ev,)))
        assert tr.rate[19, 0] == pytest.approx(0.775)
        # energy ignored from t=15 on, so the next adaptation restores PR1
        assert tr.rate[20, 0] == PR1

    def test_scheduled_priority_event(self):
        prof = NodeProfile(priority=ThresholdScale.from_breaks([0, 50, 100], [0.0, 1.0]))
        ev = ScheduledEvent(5.0, "priority", "S.C->R.C:D", {"degree": 1})
        sc = pair_scenario(D, duration=20)
        sc.profiles = {"R": prof, "S": prof}
        assert run(sc).rate[10, 0] == pytest.approx(0.75)
        sc.scheduled_events = (ev,)
        assert run(sc).rate[10, 0] == PR1

    def test_step_in_place(self):
        sc = pair_scenario(D, lam=1.0, duration=5)
        s = init_state(sc)
        rng = np.random.default_rng(0)
        assert step(s, sc, rng) is s
        assert s.step_index == 1 and s.time == 1.0 and len(s.rows) == 2


class TestRun:
    def test_zero_duration(self):
        tr = run(pair_scenario(D, lam=3.0, duration=0))
        assert len(tr) == 1 and tr.time.tolist() == [0.0]

    def test_deterministic(self, reference):
        sc = reference.with_seed(3)
        sc.duration = 600
        a, b = run(sc), run(sc)
        for name in ("energy", "memory", "state", "bandwidth", "rate", "transferred", "dropped", "queued", "active"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        assert a.events == b.events

    def test_seeds_differ(self, reference):
        sc = reference.with_seed(1)
        sc.duration = 100
        assert not np.array_equal(run(sc).bandwidth, run(sc.with_seed(2)).bandwidth)

    def test_common_random_numbers(self, reference):
        sc = reference.with_seed(4)
        sc.duration = 300
        a, s = run(sc.with_adaptive(True)), run(sc.with_adaptive(False))
        np.testing.assert_array_equal(a.bandwidth, s.bandwidth)

    def test_reference_monotone(self, reference):
        tr = run(reference)
        assert len(tr) == 12001
        assert np.all(np.diff(tr.energy, axis=0) <= 0)
        assert tr.energy.min() >= 0 and tr.energy.max() <= 100

    def test_conservation(self, reference):
        tr = run(reference.with_seed(8))
        prev = np.vstack([np.zeros((1, tr.queued.shape[1]), dtype=np.int64), tr.queued[:-1]])
        np.testing.assert_array_equal(tr.transferred + (tr.queued - prev) + tr.dropped, tr.offered)

    def test_check_rejects(self):
        sc = pair_scenario(D)
        sc.adaptation_interval = 0.5
        with pytest.raises(ScenarioError):
            run(sc)
        with pytest.raises(ScenarioError):
            run(pair_scenario(D, initial_energy={"Z": 50.0}))
        with pytest.raises(ScenarioError):
            run(pair_scenario(D, scheduled_events=(ScheduledEvent(1, "weights", "S", {"alpha": -1}),)))

    def test_unknown_node(self):
        with pytest.raises(UnknownNode):
            run(pair_scenario(D)).energy_of("Z")


class TestLifetime:
    @pytest.mark.parametrize("d, expected", [(0.5, 200.0), (0.3, 334.0), (0.7, 143.0)])
    def test_constant_drain_closed_form(self, d, expected):
        costs = EnergyCostModel(idle_cost=d, inactive_cost=d, active_base_cost=d, **FREE_MSGS)
        tr = run(pair_scenario(D, duration=400, cost_model=costs))
        assert expected == math.ceil(100 / d - 1e-9)
        assert lifetime(tr, "S") == lifetime(tr, "R") == expected

    def test_survivor(self):
        tr = run(pair_scenario(D, duration=50))
        assert lifetime(tr, "S") == 50.0

    def test_dt_granularity(self):
        costs = EnergyCostModel(idle_cost=0.3, inactive_cost=0.3, active_base_cost=0.3, **FREE_MSGS)
        tr = run(pair_scenario(D, duration=400, cost_model=costs, dt=4.0, adaptation_interval=8.0))
        # 1.2 per step: 84 steps to exhaust 100
        assert lifetime(tr, "S") == 336.0


class TestCompare:
    def test_identical(self):
        tr = run(pair_scenario(D, lam=1.0, duration=30))
        rep = compare(tr, tr)
        assert all(lt.delta_seconds == 0 and lt.delta_percent == 0 for lt in rep.nodes.values())

    def test_percent_definition(self):
        lt = NodeLifetime(adaptive_s=114.0, static_s=100.0)
        assert lt.delta_seconds == 14.0 and lt.delta_percent == pytest.approx(14.0)

    def test_mismatched_nodes(self):
        a = run(pair_scenario(D, duration=5))
        g = refine(build_abstract([("X", ""), ("Y", "")], []), "direct")
        b = run(Scenario(graph=g, profiles={"X": NodeProfile(), "Y": NodeProfile()}, duration=5))
        with pytest.raises(IncomparableTraces):
            compare(a, b)

    def test_mismatched_seed(self):
        sc = pair_scenario(D, duration=5)
        with pytest.raises(IncomparableTraces):
            compare(run(sc), run(sc.with_seed(1)))

    def test_rows(self):
        tr = run(pair_scenario(D, duration=5))
        assert [r[0] for r in compare(tr, tr).rows()] == ["R", "S"]


class TestCsv:
    def test_headers_and_round_trip(self, tmp_path, reference):
        sc = reference.with_seed(2)
        sc.duration = 200
        tr = run(sc)
        tr.write_nodes_csv(tmp_path / "n.csv")
        tr.write_links_csv(tmp_path / "l.csv")
        with open(tmp_path / "n.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == NODE_CSV_HEADER
        assert len(rows) == 1 + 201 * 4
        energy = np.array([float(r[2]) for r in rows[1:]]).reshape(201, 4)
        np.testing.assert_array_equal(energy, tr.energy)
        with open(tmp_path / "l.csv") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == LINK_CSV_HEADER
        bw = np.array([float(r[2]) for r in rows[1:]]).reshape(201, 5)
        np.testing.assert_array_equal(bw, tr.bandwidth)
        assert {r[4] for r in rows[1:]} <= {str(i) for i in range(200)}
