"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--horizon 2.0]

Each kernel runs on identical inputs under both backends; the outputs are
checked for equality before timings are reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from delayopt.config import load_preset
from delayopt.experiments import tune_config
from delayopt.gossip import run_gossip
from delayopt.graph import DelayProfile
from delayopt.kernels import compiled_backend, python_backend
from delayopt.network import CapacityProfile, NetworkSpec
from delayopt.ode import integrate_delayed
from delayopt.ppp import _constraints, network_events
from delayopt.problems import gen_graph


def _best(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_gate(repeat: int):
    g = gen_graph("erdos_renyi", {"n": 20, "prob": 0.4}, 0)
    tau = np.random.default_rng(0).uniform(0.1, 1.0, g.m)
    net = NetworkSpec.build(g, tau, caps=CapacityProfile.build(g, 1, 4))
    ev = network_events(net, 200.0, 0)
    slots, ct, cc = _constraints(ev, net)
    out = {}
    for name, kb in (("python", python_backend), ("compiled", compiled_backend)):
        out[name] = _best(lambda kb=kb: kb.gate(ev.time, slots, ct, cc, False), repeat)
    a = python_backend.gate(ev.time, slots, ct, cc, False)
    b = compiled_backend.gate(ev.time, slots, ct, cc, False)
    assert np.array_equal(np.asarray(a[0]), np.asarray(b[0]))
    return f"gate ({len(ev)} events)", out


def bench_simulate(repeat: int, horizon: float):
    cfg = load_preset("er30_fig1")
    net = cfg.build_network()
    tp = tune_config(cfg, net)
    x0 = cfg.initial_state(net.graph.n)
    samples = np.linspace(0.0, horizon, 101)
    out, finals = {}, {}
    for name, kb in (("python", python_backend), ("compiled", compiled_backend)):
        out[name] = _best(lambda kb=kb: run_gossip(net, tp.K_comm, x0, horizon, 0, samples, kernels=kb), repeat)
        finals[name] = run_gossip(net, tp.K_comm, x0, horizon, 0, samples, kernels=kb).final
    assert np.array_equal(finals["python"], finals["compiled"])
    events = int(round(net.p_comm.sum() * horizon))
    return f"gossip simulate (~{events} events)", out


def bench_dde(repeat: int):
    g = gen_graph("ring", {"n": 30})
    tau = np.random.default_rng(1).uniform(0.1, 1.0, g.m)
    d = DelayProfile.build(g, tau)
    K = np.full(g.m, 0.2)
    y0 = np.random.default_rng(2).standard_normal((g.n, 1))
    out = {}
    for name, kb in (("python", python_backend), ("compiled", compiled_backend)):
        out[name] = _best(lambda kb=kb: integrate_delayed(g, K, d, y0, 50.0, 0.01, kernels=kb), repeat)
    return "dde_rk4 (5000 steps, n=30)", out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--horizon", type=float, default=2.0, help="gossip horizon on the er30 preset")
    args = parser.parse_args(argv)
    if compiled_backend is None:
        print("compiled kernels are not built; nothing to compare")
        return 1
    print(f"{'kernel':34s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}")
    for label, t in (bench_gate(args.repeat), bench_simulate(args.repeat, args.horizon), bench_dde(args.repeat)):
        print(f"{label:34s} {t['python']:11.4f} {t['compiled']:13.4f} {t['python'] / t['compiled']:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
