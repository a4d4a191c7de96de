"""Monte-Carlo orchestration: per-seed runs, CSV rows, summaries and the
dense-versus-sparsified comparison."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ConfigError, ExperimentConfig
from .ddo import run_ddo
from .gossip import ProtocolConfig, run_gossip
from .graph import lambda2
from .network import NetworkSpec
from .ode import integrate_delayed
from .sparsify import SparsifyProblem, default_omega, objective, optimize, prune_graph
from .tuning import TunedParameters, bound_curve, certify_mean_stability, tune_ddo, tune_gossip

__all__ = [
    "METRICS",
    "SeedResult",
    "tune_config",
    "resolve_horizon",
    "run_experiment",
    "rows_for",
    "csv_text",
    "summarize",
    "BraessReport",
    "run_braess",
    "axis_wins",
]

METRICS = ("err2", "ewa_err2", "energy", "updates_attempted", "updates_accepted", "bound_rhs", "conserved_audit")
AXES = ("time", "updates", "energy")


@dataclass
class SeedResult:
    kind: str
    seed: int
    times: np.ndarray
    metrics: dict
    status: int = 0
    gamma: float = math.nan
    werr2: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.status != 0

    def axis(self, name: str) -> np.ndarray:
        return {"time": self.times, "updates": self.metrics["updates_accepted"],
                "energy": self.metrics["energy"]}[name]


def tune_config(cfg: ExperimentConfig, net: NetworkSpec) -> TunedParameters:
    """Tuned parameters for the configured algorithm, with overrides applied."""
    tuner = cfg.section("tuner")
    safety = float(tuner.get("safety", 0.999))
    if cfg.algorithm == "ddo":
        loc = cfg.section("locals")
        sigma = float(loc.get("sigma", 1.0))
        tp = tune_ddo(net, sigma, float(loc.get("L", sigma)), safety)
    else:
        tp = tune_gossip(net, safety, tuner.get("epsilon"))
    changes = {}
    if tuner.get("K_comm") is not None:
        changes["K_comm"] = net.graph.edge_array(tuner["K_comm"], "tuner.K_comm")
    if tuner.get("gamma") is not None:
        changes["gamma"] = float(tuner["gamma"])
    if changes:
        tp = replace(tp, **changes)
        rho, stable = certify_mean_stability(net.graph, tp.K_comm, net.delays)
        tp = replace(tp, rho=rho, mean_stable=stable, lambda2=lambda2(net.graph, tp.K_comm))
    return tp


def resolve_horizon(cfg: ExperimentConfig, gamma: float, value=None) -> float:
    h = cfg.get("horizon", 10.0) if value is None else value
    if isinstance(h, dict):
        if set(h) != {"gamma_multiple"}:
            raise ConfigError("expected a number or {gamma_multiple: k}", "horizon")
        if not gamma > 0:
            raise ConfigError("gamma_multiple needs a positive certified rate", "horizon")
        return float(h["gamma_multiple"]) / gamma
    h = float(h)
    if not h > 0:
        raise ConfigError("horizon must be positive", "horizon")
    return h


def _metrics_from_trace(tr, tp: TunedParameters | None, bound: bool) -> dict:
    cons = tr.conserved
    audit = np.abs(cons - cons[0]).max(axis=1) if cons is not None else np.full(len(tr.times), np.nan)
    rhs = np.full(len(tr.times), np.nan)
    if bound and tp is not None and tp.gamma * tp.tau_max < 1.0:
        pos = tr.times > 0
        rhs[pos] = tr.err2[0] * bound_curve(tp.gamma, tp.tau_max, tp.prefactor, tr.times[pos])
    return {
        "err2": tr.err2,
        "ewa_err2": tr.ewa_err2 if tr.ewa_err2 is not None else np.full(len(tr.times), np.nan),
        "energy": tr.energy,
        "updates_attempted": tr.attempted.astype(float),
        "updates_accepted": tr.accepted.astype(float),
        "bound_rhs": rhs,
        "conserved_audit": audit,
    }


def _gossip_task(args) -> SeedResult:
    kind, net, tp, x0, horizon, seed, samples, protocol, count_mode, bound = args
    tr = run_gossip(net, tp.K_comm, x0, horizon, seed, samples, protocol, tp.gamma, count_mode)
    return SeedResult(kind, seed, samples, _metrics_from_trace(tr, tp, bound), tr.status, tp.gamma, tr.werr2)


def _ddo_task(args) -> SeedResult:
    kind, net, tp, locs, horizon, seed, samples, sigma, variant, dcs, count_mode = args
    tr = run_ddo(net, tp.K_comm, tp.K_comp, locs, horizon, seed, sigma, samples, tp.gamma, variant, dcs, count_mode)
    return SeedResult(kind, seed, samples, _metrics_from_trace(tr, tp, True), tr.status, tp.gamma, tr.werr2)


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _protocol(cfg: ExperimentConfig, mode: str | None) -> ProtocolConfig:
    sec = cfg.section("protocol")
    return ProtocolConfig(mode or sec.get("mode", "oracle"), sec.get("tau_ping", 0.0) or 0.0)


def run_experiment(cfg: ExperimentConfig, seeds=None, mode: str | None = None, workers: int = 1) -> list[SeedResult]:
    """Run every seed of a gossip, ddo or ode configuration; results are
    ordered by seed whatever the number of workers."""
    seeds = cfg.seeds if seeds is None else [int(s) for s in seeds]
    net = cfg.build_network()
    g = net.graph
    count_mode = cfg.section("capacities").get("count_mode", "accepted")
    samples_n = cfg.samples
    if cfg.algorithm == "sparsify":
        return run_braess(cfg, seeds, mode, workers).results
    tp = tune_config(cfg, net)
    horizon = resolve_horizon(cfg, tp.gamma)
    samples = np.linspace(0.0, horizon, samples_n)
    if cfg.algorithm == "gossip":
        x0 = cfg.initial_state(g.n)
        proto = _protocol(cfg, mode)
        tasks = [("gossip", net, tp, x0, horizon, s, samples, proto, count_mode, True) for s in seeds]
        return _map(_gossip_task, tasks, workers)
    if cfg.algorithm == "ddo":
        loc = cfg.section("locals")
        locs = cfg.build_locals(g.n)
        sigma = float(loc.get("sigma", 1.0))
        tasks = [("ddo", net, tp, locs, horizon, s, samples, sigma, loc.get("variant", "consistent"),
                  bool(loc.get("dual_consistent_scaling", False)), count_mode) for s in seeds]
        return _map(_ddo_task, tasks, workers)
    if cfg.algorithm == "ode":
        ode = cfg.section("ode")
        x0 = cfg.initial_state(g.n)
        traj = integrate_delayed(g, tp.K_comm, net.delays, x0, horizon, ode.get("dt"), ode.get("interpolation", "hermite"))
        mean = x0.mean(axis=0)
        err = np.array([float(((traj.at(t) - mean) ** 2).sum()) for t in samples])
        nan = np.full(len(samples), np.nan)
        cons = np.array([np.abs(traj.at(t).sum(axis=0) - x0.sum(axis=0)).max() for t in samples])
        metrics = {"err2": err, "ewa_err2": nan, "energy": nan, "updates_attempted": nan, "updates_accepted": nan,
                   "bound_rhs": nan, "conserved_audit": cons}
        return [SeedResult("ode", 0, samples, metrics, traj.status, tp.gamma)]
    raise ConfigError(f"unsupported algorithm {cfg.algorithm!r}", "algorithm")


def rows_for(results: list[SeedResult]):
    for r in results:
        for k, t in enumerate(r.times):
            for m in METRICS:
                v = r.metrics[m][k]
                if isinstance(v, float) and math.isnan(v) or (isinstance(v, np.floating) and np.isnan(v)):
                    continue
                yield r.kind, r.seed, float(t), m, float(v)


def csv_text(results: list[SeedResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "seed", "time", "metric", "value"])
    for kind, seed, t, m, v in rows_for(results):
        w.writerow([kind, seed, repr(t), m, repr(v)])
    return buf.getvalue()


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, float)
    if len(values) < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def summarize(results: list[SeedResult]) -> dict:
    per_seed = []
    for r in results:
        m = r.metrics
        ok = np.isfinite(m["bound_rhs"]) & np.isfinite(m["ewa_err2"])
        margin = float((m["bound_rhs"][ok] - m["ewa_err2"][ok]).min()) if ok.any() else None
        per_seed.append({
            "kind": r.kind, "seed": r.seed, "status": r.status, "diverged": r.diverged, "gamma": r.gamma,
            "final_err2": float(m["err2"][-1]) if len(m["err2"]) else None,
            "energy": float(m["energy"][-1]) if len(m["energy"]) else None,
            "updates_attempted": float(m["updates_attempted"][-1]) if len(m["updates_attempted"]) else None,
            "updates_accepted": float(m["updates_accepted"][-1]) if len(m["updates_accepted"]) else None,
            "bound_margin_min": margin,
        })
    agg = {}
    for kind in sorted({r.kind for r in results}):
        finals = [p["final_err2"] for p in per_seed if p["kind"] == kind and p["final_err2"] is not None]
        mean, se = _mean_se(np.array(finals)) if finals else (math.nan, math.nan)
        agg[kind] = {"final_err2_mean": mean, "final_err2_se": se, "runs": len(finals)}
    return {"per_seed": per_seed, "aggregate": agg}


def axis_wins(dense: SeedResult, sparse: SeedResult, axis: str, points: int = 50) -> bool:
    """Whether ``sparse`` has the lower mean log-error than ``dense`` over a
    common grid of the chosen x axis (time, accepted updates or energy)."""
    xa, xb = dense.axis(axis), sparse.axis(axis)
    ea, eb = dense.metrics["err2"], sparse.metrics["err2"]
    top = min(xa[-1], xb[-1])
    grid = np.linspace(0.0, top, points + 1)[1:]

    def at(x, e):
        idx = np.clip(np.searchsorted(x, grid, side="right") - 1, 0, len(x) - 1)
        return np.log10(np.maximum(e[idx], 1e-300))

    return float(at(xb, eb).mean()) < float(at(xa, ea).mean())


@dataclass
class BraessReport:
    edges_before: int
    edges_after: int
    removed: list
    J_before: float
    J_after: float
    omega: float
    lambda2_before: float
    lambda2_after: float
    gamma_before: float
    gamma_after: float
    results: list = field(default_factory=list)
    wins: dict = field(default_factory=dict)

    def text(self) -> str:
        lines = [
            f"edges: {self.edges_before} -> {self.edges_after} (removed {len(self.removed)})",
            f"omega: {self.omega!r}",
            f"J: {self.J_before!r} -> {self.J_after!r}",
            f"lambda2(K): {self.lambda2_before!r} -> {self.lambda2_after!r}",
            f"gamma: {self.gamma_before!r} -> {self.gamma_after!r}",
        ]
        for axis, w in self.wins.items():
            lines.append(f"pruned graph ahead at matched {axis}: {sum(w)}/{len(w)} seeds")
        return "\n".join(lines)


def run_braess(cfg: ExperimentConfig, seeds=None, mode: str | None = None, workers: int = 1) -> BraessReport:
    """Optimise intensities, prune, and race dense (G1) against pruned (G2)
    gossip on the same seeds and starting values."""
    seeds = cfg.seeds if seeds is None else [int(s) for s in seeds]
    net1 = cfg.build_network()
    g = net1.graph
    sp = cfg.section("sparsify")
    tau = np.asarray(net1.delays.tau_comm)
    omega = sp.get("omega")
    omega = default_omega(g, tau, net1.p_comm) if omega is None else float(omega)
    problem = SparsifyProblem(g, tau, omega, net1.p_comm)
    res = optimize(problem, int(sp.get("iters", 500)), float(sp.get("tol", 1e-8)))
    g2, p2, keep = prune_graph(g, res.p, float(sp.get("threshold", 1e-6)))
    net2 = NetworkSpec.build(g2, tau[keep], 0.0, p2)
    tp1 = tune_gossip(net1)
    tp2 = tune_gossip(net2)
    horizon = resolve_horizon(cfg, tp1.gamma, sp.get("horizon"))
    samples = np.linspace(0.0, horizon, int(sp.get("samples", cfg.samples)))
    x0 = cfg.initial_state(g.n)
    proto = _protocol(cfg, mode)
    tasks = []
    for s in seeds:
        tasks.append(("G1", net1, tp1, x0, horizon, s, samples, proto, "accepted", False))
        tasks.append(("G2", net2, tp2, x0, horizon, s, samples, proto, "accepted", False))
    out = _map(_gossip_task, tasks, workers)
    wins = {axis: [axis_wins(out[2 * k], out[2 * k + 1], axis) for k in range(len(seeds))] for axis in AXES}
    removed = [g.edges[e] for e in np.flatnonzero(~keep)]
    return BraessReport(g.m, g2.m, removed, objective(net1.p_comm, problem), objective(res.p, problem), omega,
                        lambda2(g, tp1.K_comm), lambda2(g2, tp2.K_comm), tp1.gamma, tp2.gamma, out, wins)
