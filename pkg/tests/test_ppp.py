import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delayopt.graph import Graph
from delayopt.network import CapacityProfile, NetworkSpec
from delayopt.ppp import (COMM, COMP, EventStream, capacity_audit, clock_rng, gate_events, merge_streams,
                          network_events, poisson_tail_bound, sample_ppp, window_count)
from delayopt.problems import gen_graph
from delayopt.tuning import max_capacity_intensities

TWO = Graph(2, [(0, 1)])


def _edge_events(times, edge=0, i=0, j=1):
    k = len(times)
    return EventStream(np.asarray(times, float), np.full(k, COMM, np.int8), np.full(k, i), np.full(k, j),
                       np.full(k, edge), np.ones(k, np.uint8), np.zeros(k, np.uint8))


class TestSamplePPP:
    def test_vanishing_rate(self):
        s = sample_ppp(1e-12, 1.0, np.random.default_rng(0))
        assert len(s.points) == 0

    def test_mean_gap(self):
        s = sample_ppp(10.0, 1000.0, np.random.default_rng(1))
        gaps = np.diff(np.r_[0.0, s.points])
        assert 0.094 <= gaps.mean() <= 0.106

    def test_superposition(self):
        a = sample_ppp(2.0, 1000.0, np.random.default_rng(2))
        b = sample_ppp(3.0, 1000.0, np.random.default_rng(3))
        t, sid, _ = merge_streams([a, b])
        assert abs(len(t) - 5000) <= 3 * math.sqrt(5000)
        assert (np.diff(t) >= 0).all()
        assert (sid == 0).sum() == len(a.points)

    def test_bad_rate(self):
        with pytest.raises(ValueError):
            sample_ppp(0.0, 1.0, np.random.default_rng(0))

    @given(st.floats(0.01, 50.0), st.floats(0.1, 20.0), st.integers(0, 2**32 - 1))
    def test_sorted_in_range_deterministic(self, rate, horizon, seed):
        s1 = sample_ppp(rate, horizon, np.random.default_rng(seed))
        s2 = sample_ppp(rate, horizon, np.random.default_rng(seed))
        np.testing.assert_array_equal(s1.points, s2.points)
        assert (np.diff(s1.points) > 0).all()
        assert len(s1.points) == 0 or (s1.points[0] >= 0 and s1.points[-1] <= horizon)

    def test_clock_independence(self):
        x = clock_rng(7, 0, 1, 2).random(5)
        clock_rng(7, 0, 3, 4).random(5)
        np.testing.assert_array_equal(x, clock_rng(7, 0, 1, 2).random(5))
        assert not np.array_equal(x, clock_rng(7, 0, 2, 1).random(5))
        assert not np.array_equal(x, clock_rng(8, 0, 1, 2).random(5))

    def test_adding_a_clock_keeps_others(self):
        g3 = Graph(3, [(0, 1), (1, 2)])
        g4 = Graph(3, [(0, 1), (1, 2), (0, 2)])
        e3 = network_events(NetworkSpec.build(g3, 1.0), 50.0, 4)
        e4 = network_events(NetworkSpec.build(g4, 1.0), 50.0, 4)
        for e in ((0, 1), (1, 2)):
            a = e3.time[(e3.i == e[0]) & (e3.j == e[1])]
            b = e4.time[(e4.i == e[0]) & (e4.j == e[1])]
            np.testing.assert_array_equal(a, b)


class TestWindowCount:
    def test_boundary_included(self):
        assert window_count([1.0, 2.0, 3.0], 3.0, 2.0) == 2

    def test_zero_width(self):
        assert window_count([1.0, 2.0, 3.0], 3.0, 0.0) == 0

    def test_right_end_excluded(self):
        assert window_count([0.5], 0.5, 1.0) == 0

    @given(st.lists(st.floats(0, 10), max_size=30), st.floats(0, 12), st.floats(0, 5))
    def test_matches_bruteforce(self, pts, t, tau):
        pts = np.sort(np.asarray(pts, float))
        expect = sum(1 for p in pts if t - tau <= p < t) if tau > 0 else 0
        assert window_count(pts, t, tau) == expect


class TestGating:
    def test_unbounded_accepts_all(self):
        net = NetworkSpec.build(gen_graph("ring", {"n": 5}), 1.0)
        ev = network_events(net, 30.0, 0)
        assert ev.accepted.all() and not ev.violated.any()

    def test_single_edge_example(self):
        net = NetworkSpec.build(TWO, 1.0, caps=CapacityProfile.build(TWO, q_edge=1))
        ev = gate_events(_edge_events([0.1, 0.5, 2.0]), net)
        assert list(ev.accepted) == [1, 0, 1]
        assert ev.violations(1) == ["edge"]
        assert ev.violations(0) == []

    def test_accepted_vs_base_counts(self):
        net = NetworkSpec.build(TWO, 1.0, caps=CapacityProfile.build(TWO, q_edge=1))
        times = [0.1, 0.5, 1.2, 2.0]
        acc = gate_events(_edge_events(times), net, "accepted").accepted
        base = gate_events(_edge_events(times), net, "base").accepted
        # base counting also sees the refused ticks at 0.5 and 1.2
        assert list(acc) == [1, 0, 1, 0]
        assert list(base) == [1, 0, 0, 0]

    def test_node_comm_cap(self):
        g = Graph(3, [(0, 1), (0, 2)])
        net = NetworkSpec.build(g, 1.0, caps=CapacityProfile.build(g, q_comm=[1, None, None]))
        ev = _edge_events([0.1, 0.2], edge=0)
        ev.edge[1], ev.j[1] = 1, 2
        ev = gate_events(ev, net)
        assert list(ev.accepted) == [1, 0]
        assert ev.violations(1) == ["comm_i"]

    def test_comp_cap(self):
        net = NetworkSpec.build(TWO, 1.0, 1.0, p_comp=1.0, caps=CapacityProfile.build(TWO, q_comp=1))
        k = 2
        ev = EventStream(np.array([0.2, 0.7]), np.full(k, COMP, np.int8), np.zeros(k, np.int64),
                         np.full(k, -1), np.full(k, -1), np.ones(k, np.uint8), np.zeros(k, np.uint8))
        ev = gate_events(ev, net)
        assert list(ev.accepted) == [1, 0]
        assert ev.violations(1) == ["comp"]

    @given(st.integers(0, 2**16), st.integers(1, 3), st.integers(1, 4), st.sampled_from(["accepted", "base"]))
    def test_audit_never_violated(self, seed, qe, qc, mode):
        g = gen_graph("ring", {"n": 5})
        tau = np.random.default_rng(seed).uniform(0.1, 1.0, g.m)
        net = NetworkSpec.build(g, tau, 0.3, p_comm=3.0 / tau, p_comp=5.0,
                                caps=CapacityProfile.build(g, qe, qc, 1))
        ev = network_events(net, 20.0, seed, mode)
        assert capacity_audit(ev, net) == 0
        assert ev.accepted.sum() < len(ev)
        np.testing.assert_array_equal(ev.accepted == 1, ev.violated == 0)

    def test_audit_detects_violation(self):
        net = NetworkSpec.build(TWO, 1.0, caps=CapacityProfile.build(TWO, q_edge=1))
        assert capacity_audit(_edge_events([0.1, 0.5]), net) == 1

    def test_determinism(self):
        g = gen_graph("erdos_renyi", {"n": 8, "prob": 0.5}, 3)
        net = NetworkSpec.build(g, 0.5, caps=CapacityProfile.build(g, 2, 3))
        a, b = network_events(net, 40.0, 11), network_events(net, 40.0, 11)
        for f in ("time", "kind", "i", "j", "edge", "accepted", "violated"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))

    def test_boundary_acceptance(self):
        g = gen_graph("ring", {"n": 10})
        tau = np.random.default_rng(5).uniform(0.1, 1.0, g.m)
        caps = CapacityProfile.build(g, 1, 1)
        p, _ = max_capacity_intensities(g, NetworkSpec.build(g, tau).delays, caps)
        net = NetworkSpec.build(g, tau, p_comm=p, caps=caps)
        ev = network_events(net, 1e5 / p.sum(), 0)
        frac = ev.accepted.mean()
        se = math.sqrt(frac * (1 - frac) / len(ev))
        assert len(ev) > 9e4
        assert frac + 2 * se >= 0.5
        assert capacity_audit(ev, net) == 0


class TestTailBound:
    def test_examples(self):
        assert poisson_tail_bound(3.0, 0.0) == 1.0
        assert poisson_tail_bound(1.0, 1.0) == pytest.approx(math.exp(-0.5))

    def test_monte_carlo(self):
        z = np.random.default_rng(0).poisson(1.0, 200_000)
        assert (z >= 2).mean() == pytest.approx(1 - 2 / math.e, abs=0.005)
        assert (z >= 2).mean() <= poisson_tail_bound(1.0, 1.0)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            poisson_tail_bound(-1.0, 0.5)
