import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from delayopt.ddo import conj_grad_phi, phi_grad, printed_fixed_point, run_ddo, simulate_events
from delayopt.gossip import run_gossip
from delayopt.graph import Graph, GraphError
from delayopt.network import NetworkSpec
from delayopt.ppp import COMP, EventStream
from delayopt.problems import LogSumExpLocal, QuadraticLocal, exact_minimizer, gen_graph, gen_quadratics
from delayopt.tuning import ddo_step_sizes, tune_ddo

from conftest import BACKENDS


class NewtonOnly:
    """Wraps a local so the conjugate oracle takes the Newton path."""

    def __init__(self, f):
        self.f = f

    def value(self, z):
        return self.f.value(z)

    def grad(self, z):
        return self.f.grad(z)

    def hess(self, z):
        return self.f.hess(z)


class Concave:
    def value(self, z):
        return 0.0

    def grad(self, z):
        return np.zeros_like(z)

    def hess(self, z):
        return np.zeros((len(z), len(z)))


def _lse(seed, d=3, k=5):
    r = np.random.default_rng(seed)
    return LogSumExpLocal(1.0, r.standard_normal((k, d)), r.standard_normal(k))


class TestConjugate:
    def test_closed_form(self):
        f = QuadraticLocal(1.0, np.array([0.0]))
        assert conj_grad_phi(f, np.array([1.0]), 1.0)[0] == 2.0
        assert conj_grad_phi(NewtonOnly(f), np.array([1.0]), 1.0)[0] == pytest.approx(2.0, abs=1e-10)

    def test_inverse_at_zero(self):
        f = QuadraticLocal(3.0, np.array([1.0, -2.0]))
        np.testing.assert_allclose(conj_grad_phi(f, phi_grad(f, np.zeros(2), 1.0), 1.0), 0.0, atol=1e-15)

    @pytest.mark.parametrize("local", [QuadraticLocal(2.5, np.array([1.0, -1.0, 0.5])), _lse(0), _lse(1)],
                             ids=["quadratic", "lse0", "lse1"])
    def test_round_trip(self, local):
        z = np.random.default_rng(3).standard_normal((100, 3)) * 3
        for zi in z:
            back = conj_grad_phi(local, phi_grad(local, zi, 1.0), 1.0)
            assert np.abs(back - zi).max() <= 1e-8

    @given(st.floats(1.0, 20.0), st.integers(0, 2**16))
    def test_newton_matches_closed_form(self, a, seed):
        r = np.random.default_rng(seed)
        f = QuadraticLocal(a, r.standard_normal(2))
        y = r.standard_normal(2) * 5
        np.testing.assert_allclose(conj_grad_phi(NewtonOnly(f), y, 1.0), conj_grad_phi(f, y, 1.0), atol=1e-9)

    def test_nonconforming_local(self):
        with pytest.raises(RuntimeError):
            conj_grad_phi(Concave(), np.array([1.0]), 1.0)


@pytest.mark.parametrize("kernels", BACKENDS)
def test_single_computation_event(kernels):
    # printed coefficients: K/(2p) on x, sigma K/p on y, with K/p = 0.1
    ev = EventStream(np.array([0.5]), np.array([COMP], np.int8), np.array([0]), np.array([-1]), np.array([-1]),
                     np.ones(1, np.uint8), np.zeros(1, np.uint8))
    tr = simulate_events(1, 1, ev, np.array([0.2]), np.array([0.05]), np.array([0.1]), np.zeros(1),
                         np.zeros((1, 1)), np.zeros((1, 1)), [1.0], 0.0, np.ones((1, 1)),
                         qa=np.ones(1), qc=np.ones((1, 1)), sigma_half=0.5, ydiv=1.0,
                         cons_wx=2.0, cons_wy=1.0, kernels=kernels)
    assert tr.final_dual[0, 0] == pytest.approx(-0.2, abs=1e-15)
    assert tr.final[0, 0] == pytest.approx(0.1, abs=1e-15)
    assert tr.conserved[0, 0] == pytest.approx(0.0, abs=1e-15)


def _setup(n=6, seed=0, L=2.0, d=2):
    g = gen_graph("ring", {"n": n})
    tau = np.random.default_rng(seed).uniform(0.2, 1.0, g.m)
    net = NetworkSpec.build(g, tau, 0.3, p_comp=1 / 0.3)
    return net, gen_quadratics(n, d, 1.0, L, seed)


class TestRunDdo:
    def test_converges_to_minimizer(self):
        net, loc = _setup()
        tp = tune_ddo(net, 1.0, 2.0)
        tr = run_ddo(net, tp.K_comm, tp.K_comp, loc, 1000.0, 0, 1.0)
        xs = exact_minimizer(loc)
        assert tr.err2[-1] <= 1e-12 * net.graph.n * float(xs @ xs)
        np.testing.assert_allclose(tr.final, np.broadcast_to(xs, tr.final.shape), atol=1e-10)

    def test_identical_quadratics(self):
        net, _ = _setup()
        c = np.array([1.5, -0.5])
        loc = [QuadraticLocal(1.7, c) for _ in range(6)]
        tp = tune_ddo(net, 1.0, 1.7)
        tr = run_ddo(net, tp.K_comm, tp.K_comp, loc, 500.0, 1, 1.0)
        assert tr.err2[-1] <= 1e-3 * 6 * float(c @ c)

    @given(st.integers(0, 2**16))
    def test_conserved_quantity(self, seed):
        net, loc = _setup(5, seed % 97)
        K, Kc = ddo_step_sizes(net)
        for variant in ("consistent", "printed"):
            tr = run_ddo(net, K, Kc, loc, 60.0, seed, 1.0, variant=variant)
            assert np.abs(tr.conserved).max() <= 1e-9

    def test_printed_variant_bias(self):
        net, loc = _setup()
        tp = tune_ddo(net, 1.0, 2.0)
        tr = run_ddo(net, tp.K_comm, tp.K_comp, loc, 1000.0, 0, 1.0, variant="printed")
        fp = printed_fixed_point(loc, 1.0)
        np.testing.assert_allclose(tr.final, np.broadcast_to(fp, tr.final.shape), atol=1e-10)
        xs = exact_minimizer(loc)
        assert tr.err2[-1] == pytest.approx(6 * float(((0.5 * fp - xs) ** 2).sum()), rel=1e-6)
        assert tr.err2[-1] > 1e-2 * 6 * float(xs @ xs)

    def test_zero_computation_reduces_to_gossip(self):
        net, loc = _setup()
        net = net.with_intensities(p_comp=np.zeros(6))
        K, Kc = ddo_step_sizes(net)
        x0 = np.random.default_rng(4).standard_normal((6, 2))
        a = run_ddo(net, K, Kc, loc, 40.0, 7, 1.0, x0=x0, record_states=True)
        b = run_gossip(net, K, x0, 40.0, 7, record_states=True)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.attempted, b.attempted)
        np.testing.assert_array_equal(a.energy, b.energy)

    def test_energy_counts_communications(self):
        net, loc = _setup()
        K, Kc = ddo_step_sizes(net)
        a = run_ddo(net, K, Kc, loc, 40.0, 7, 1.0)
        b = run_gossip(net.with_intensities(p_comp=np.zeros(6)), K, np.zeros((6, 2)), 40.0, 7)
        np.testing.assert_array_equal(a.energy, b.energy)
        assert a.attempted[-1] > b.attempted[-1]

    def test_logsumexp_smoke(self):
        g = gen_graph("ring", {"n": 4})
        net = NetworkSpec.build(g, 0.5, 0.2, p_comp=5.0)
        loc = [_lse(s, d=2, k=3) for s in range(4)]
        L = max(f.smoothness for f in loc)
        tp = tune_ddo(net, 1.0, L)
        z = np.zeros(2)
        for _ in range(50):
            z -= np.linalg.solve(sum(f.hess(z) for f in loc), sum(f.grad(z) for f in loc))
        tr = run_ddo(net, tp.K_comm, tp.K_comp, loc, 150.0, 0, 1.0, target=z)
        assert tr.err2[-1] <= 1e-6 * tr.err2[0]
        assert np.abs(tr.conserved).max() <= 1e-9

    def test_curvature_below_sigma_rejected(self):
        net, _ = _setup()
        with pytest.raises(GraphError):
            run_ddo(net, 0.1, np.full(6, 0.1), [QuadraticLocal(0.5, np.zeros(2))] * 6, 1.0, 0, 1.0)

    def test_doubling_delays_never_increases_gamma(self):
        r = np.random.default_rng(0)
        for _ in range(10):
            g = gen_graph("erdos_renyi", {"n": 8, "prob": 0.4}, int(r.integers(1000)))
            tau = r.uniform(0.1, 1.0, g.m)
            tc = r.uniform(0.1, 1.0, g.n)
            p, pc = r.uniform(0.5, 2.0, g.m), r.uniform(0.5, 2.0, g.n)
            a = tune_ddo(NetworkSpec.build(g, tau, tc, p, pc), 1.0, 5.0).gamma
            b = tune_ddo(NetworkSpec.build(g, 2 * tau, 2 * tc, p, pc), 1.0, 5.0).gamma
            assert b <= a
