import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delayopt.config import load_preset
from delayopt.gossip import ProtocolConfig, consensus_error, ewa, run_gossip, simulate_events
from delayopt.graph import Graph, GraphError
from delayopt.network import CapacityProfile, NetworkSpec
from delayopt.ppp import COMM, EventStream
from delayopt.problems import gen_graph
from delayopt.tuning import gossip_step_sizes, tune_gossip

from conftest import BACKENDS

TWO = Graph(2, [(0, 1)])


def _events(times):
    k = len(times)
    return EventStream(np.asarray(times, float), np.full(k, COMM, np.int8), np.zeros(k, np.int64),
                       np.ones(k, np.int64), np.zeros(k, np.int64), np.ones(k, np.uint8), np.zeros(k, np.uint8))


def _two_node_run(times, tau, coef, x0, samples, kernels):
    ev = _events(times)
    k = len(times)
    x0 = np.asarray(x0, float).reshape(2, 1)
    return simulate_events(2, 1, ev, np.full(k, tau), np.asarray(coef, float), np.zeros(k), np.full(k, tau),
                           x0, np.zeros_like(x0), samples, 0.0, np.full((2, 1), x0.mean()),
                           record_states=True, kernels=kernels)


@pytest.mark.parametrize("kernels", BACKENDS)
class TestUpdateRule:
    def test_exact_pairwise_average(self, kernels):
        tr = _two_node_run([0.3], 0.0, [0.5], [0.0, 2.0], [0.0, 0.3], kernels)
        assert tr.states[1].ravel().tolist() == [1.0, 1.0]
        assert tr.err2.tolist() == [2.0, 0.0]

    def test_stale_reads(self, kernels):
        # the second tick still reads the initial (0, 2) while x_0 is already 0.5
        tr = _two_node_run([0.2, 0.9], 1.0, [0.25, 0.5], [0.0, 2.0], [0.5, 1.0], kernels)
        assert tr.states[0, 0, 0] == 0.5
        assert tr.states[1, 0, 0] == 1.5
        assert tr.states[1].sum() == pytest.approx(2.0)

    def test_reads_after_delay(self, kernels):
        # at t=1.6 the read time 0.6 sees the state after the tick at 0.5
        tr = _two_node_run([0.5, 1.6], 1.0, [0.5, 0.5], [0.0, 2.0], [2.0], kernels)
        assert tr.states[0].ravel().tolist() == [1.0, 1.0]


def _ring_net(n=6, seed=0):
    g = gen_graph("ring", {"n": n})
    tau = np.random.default_rng(seed).uniform(0.1, 1.0, g.m)
    return NetworkSpec.build(g, tau)


class TestRunGossip:
    def test_mass_conservation(self):
        net = _ring_net(8)
        K = gossip_step_sizes(net)
        x0 = np.random.default_rng(1).standard_normal((8, 3))
        tr = run_gossip(net, K, x0, 1e4 / net.p_comm.sum(), 0, record_states=True)
        assert tr.accepted[-1] > 9000
        drift = np.abs(tr.states.sum(axis=1) - x0.sum(axis=0)).max()
        assert drift <= 1e-9 * np.abs(x0.sum(axis=0)).max()
        np.testing.assert_allclose(tr.conserved, np.broadcast_to(x0.sum(axis=0), tr.conserved.shape), atol=1e-12)

    @given(st.integers(0, 2**16), st.integers(1, 3))
    def test_conservation_property(self, seed, d):
        net = _ring_net(5, seed)
        x0 = np.random.default_rng(seed).standard_normal((5, d))
        tr = run_gossip(net, gossip_step_sizes(net), x0, 30.0, seed)
        np.testing.assert_allclose(tr.conserved[-1], x0.sum(axis=0), atol=1e-12)
        assert (np.diff(tr.accepted) >= 0).all() and (np.diff(tr.energy) >= 0).all()

    def test_consensus_start_stays(self):
        net = _ring_net()
        tr = run_gossip(net, gossip_step_sizes(net), np.ones((6, 2)), 20.0, 3)
        assert (tr.err2 == 0).all()

    def test_classic_gossip_monotone(self):
        g = gen_graph("complete", {"n": 6})
        net = NetworkSpec.build(g, 0.0, p_comm=1.0)
        x0 = np.random.default_rng(2).standard_normal((6, 1))
        probe = run_gossip(net, 0.5, x0, 20.0, 4)
        # sample after every tick by sampling densely; each tick averages a pair exactly
        tr = run_gossip(net, 0.5, x0, 20.0, 4, sample_times=np.linspace(0, 20, 20001))
        assert probe.accepted[-1] > 100
        assert (np.diff(tr.err2) <= 1e-15).all()
        assert tr.err2[-1] < 1e-6 * tr.err2[0]

    def test_convergence_and_determinism(self):
        net = _ring_net()
        x0 = np.random.default_rng(0).standard_normal((6, 1))
        a = run_gossip(net, gossip_step_sizes(net), x0, 300.0, 5)
        b = run_gossip(net, gossip_step_sizes(net), x0, 300.0, 5)
        np.testing.assert_array_equal(a.err2, b.err2)
        assert a.err2[-1] < 1e-8 * a.err2[0]

    def test_dual_consistent_scaling_halves(self):
        net = _ring_net()
        K = gossip_step_sizes(net)
        x0 = np.random.default_rng(0).standard_normal((6, 1))
        a = run_gossip(net, K, x0, 30.0, 5, dual_consistent_scaling=True)
        b = run_gossip(net, K / 2, x0, 30.0, 5)
        np.testing.assert_array_equal(a.err2, b.err2)

    def test_bad_step_sizes(self):
        net = _ring_net()
        with pytest.raises(GraphError):
            run_gossip(net, np.zeros(net.graph.m), np.ones((6, 1)), 1.0, 0)

    def test_gated_run_respects_conservation(self):
        g = gen_graph("ring", {"n": 6})
        net = NetworkSpec.build(g, 0.5, p_comm=4.0, caps=CapacityProfile.build(g, 1, 2))
        x0 = np.random.default_rng(0).standard_normal((6, 1))
        tr = run_gossip(net, gossip_step_sizes(net), x0, 50.0, 0)
        assert tr.accepted[-1] < tr.attempted[-1]
        np.testing.assert_allclose(tr.conserved[-1], x0.sum(axis=0), atol=1e-12)

    def test_bound_certificate_small(self):
        net = _ring_net(5, 3)
        tp = tune_gossip(net)
        x0 = np.random.default_rng(9).standard_normal((5, 1))
        T = np.array([5.0, 10.0]) / tp.gamma
        S = np.r_[0.0, T]
        runs = np.array([run_gossip(net, tp.K_comm, x0, T[-1], s, sample_times=S, gamma=tp.gamma).ewa_err2
                         for s in range(20)])
        mean = runs.mean(axis=0)
        se = runs.std(axis=0, ddof=1) / math.sqrt(len(runs))
        err0 = float(((x0 - x0.mean()) ** 2).sum())
        assert (mean[1:] + 2 * se[1:] <= err0 * tp.bound(T)).all()


class TestProtocol:
    def test_ping_above_delay_rejected(self):
        net = _ring_net()
        with pytest.raises(GraphError):
            run_gossip(net, gossip_step_sizes(net), np.ones((6, 1)), 1.0, 0, protocol=ProtocolConfig("protocol", 5.0))

    def test_converges_on_er30(self):
        cfg = load_preset("er30_fig1")
        net = cfg.build_network()
        tp = 0.002
        eff = NetworkSpec.build(net.graph, net.delays.tau_comm + 2 * tp, p_comm=net.p_comm)
        x0 = cfg.initial_state(net.graph.n, 0)
        tr = run_gossip(net, gossip_step_sizes(eff), x0, 0.5, 0, protocol=ProtocolConfig("protocol", tp))
        assert tr.err2[-1] <= 1e-2 * tr.err2[0]
        np.testing.assert_allclose(tr.conserved[-1], x0.sum(axis=0), atol=1e-10)

    def test_caps_refuse_handshakes(self):
        g = gen_graph("ring", {"n": 6})
        net = NetworkSpec.build(g, 0.5, p_comm=4.0, caps=CapacityProfile.build(g, 1, 1))
        x0 = np.random.default_rng(0).standard_normal((6, 1))
        tr = run_gossip(net, gossip_step_sizes(net), x0, 40.0, 1, protocol=ProtocolConfig("protocol", 0.05))
        assert 0 < tr.accepted[-1] < tr.attempted[-1]
        np.testing.assert_allclose(tr.conserved[-1], x0.sum(axis=0), atol=1e-12)
        assert tr.err2[-1] < tr.err2[0]


class TestEwa:
    def test_constant(self):
        assert ewa([0.0], [[3.0]], 0.7, 5.0)[0] == pytest.approx(3.0)

    def test_two_segments(self):
        got = ewa([0.0, 1.0], [0.0, 1.0], 1.0, 2.0)
        e = math.e
        assert got == pytest.approx((e * e - e) / (e * e - 1), rel=1e-14)

    def test_small_gamma_is_time_average(self):
        ct = [0.0, 0.5, 1.7, 2.0]
        v = [1.0, -2.0, 4.0, 0.5]
        direct = (0.5 * 1.0 + 1.2 * -2.0 + 0.3 * 4.0 + 1.0 * 0.5) / 3.0
        assert ewa(ct, v, 1e-8, 3.0) == pytest.approx(direct, rel=1e-5)

    def test_time_zero(self):
        assert ewa([0.0, 1.0], [2.0, 5.0], 1.0, 0.0) == 2.0

    def test_simulator_ewa_matches_closed_form(self):
        net = _ring_net(4, 1)
        x0 = np.random.default_rng(0).standard_normal((4, 1))
        gamma = 0.3
        S = np.linspace(0, 10, 4001)
        tr = run_gossip(net, gossip_step_sizes(net), x0, 10.0, 2, sample_times=S, gamma=gamma, record_states=True)
        # states only change at ticks; dense samples recover the trajectory up to the grid spacing
        avg = ewa(S, tr.states, gamma, 10.0)
        err = float(((avg - x0.mean()) ** 2).sum())
        assert err == pytest.approx(tr.ewa_err2[-1], rel=2e-2)


class TestConsensusError:
    def test_examples(self):
        assert consensus_error([[[0.0], [2.0]]])[0] == 2.0
        assert consensus_error([[[1.0], [1.0]], [[1.0], [1.0]]]).tolist() == [0.0, 0.0]
        assert consensus_error([[[0.0], [2.0]], [[1.0], [1.0]]]).tolist() == [2.0, 0.0]
