"""Experiment configuration files (YAML) and the objects they describe."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .graph import Graph, GraphError
from .network import CapacityProfile, NetworkSpec
from .problems import DelayMixture, QuadraticLocal, gen_graph, gen_quadratics
from .tuning import max_capacity_intensities

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "load_preset", "PRESETS", "preset_path"]

PRESET_DIR = Path(__file__).parent / "presets"
PRESETS = ("two_node", "ring10_ddo", "braess_line", "er30_fig1")


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = path or "<root>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


NUM = "number"
SCALAR_OR_LIST = "scalar_or_list"

SCHEMA: dict[str, Any] = {
    "name": "str",
    "algorithm": ("enum", ["gossip", "ddo", "ode", "sparsify"]),
    "graph": {
        "kind": ("enum", ["explicit", "ring", "line", "star", "complete", "grid", "erdos_renyi"]),
        "n": "int",
        "edges": "list",
        "prob": NUM,
        "rows": "int",
        "cols": "int",
        "seed": "int",
    },
    "delays": {
        "comm": "any",
        "comp": SCALAR_OR_LIST,
    },
    "intensities": {
        "comm": "any",
        "comp": "any",
    },
    "capacities": {
        "edge": "any",
        "comm": "any",
        "comp": "any",
        "count_mode": ("enum", ["accepted", "base"]),
    },
    "locals": {
        "kind": ("enum", ["quadratic"]),
        "sigma": NUM,
        "L": NUM,
        "d": "int",
        "a": SCALAR_OR_LIST,
        "c": "list",
        "seed": "int",
        "variant": ("enum", ["consistent", "printed"]),
        "dual_consistent_scaling": "bool",
    },
    "init": {
        "kind": ("enum", ["normal", "explicit", "consensus"]),
        "d": "int",
        "values": "list",
        "seed": "int",
    },
    "horizon": "any",
    "samples": "int",
    "seeds": "list",
    "protocol": {
        "mode": ("enum", ["oracle", "protocol"]),
        "tau_ping": SCALAR_OR_LIST,
    },
    "tuner": {
        "safety": NUM,
        "epsilon": NUM,
        "K_comm": SCALAR_OR_LIST,
        "gamma": NUM,
    },
    "ode": {
        "dt": NUM,
        "interpolation": ("enum", ["hermite", "linear"]),
    },
    "sparsify": {
        "omega": NUM,
        "iters": "int",
        "tol": NUM,
        "threshold": NUM,
        "horizon": NUM,
        "samples": "int",
    },
}

REQUIRED = {"algorithm", "graph", "delays"}


def _line(node) -> int:
    return node.start_mark.line + 1


def _scalar_type(node: yaml.ScalarNode) -> str:
    tag = node.tag.rsplit(":", 1)[-1]
    return {"int": "int", "float": "float", "bool": "bool", "null": "null", "str": "str"}.get(tag, "str")


def _check(node, spec, path: str) -> None:
    if isinstance(spec, dict):
        if not isinstance(node, yaml.MappingNode):
            raise ConfigError("expected a mapping", path, _line(node))
        for k_node, v_node in node.value:
            key = k_node.value
            sub = f"{path}.{key}" if path else key
            if key not in spec:
                raise ConfigError(f"unknown key {key!r}", sub, _line(k_node))
            _check(v_node, spec[key], sub)
        return
    if isinstance(spec, tuple):
        if not isinstance(node, yaml.ScalarNode) or node.value not in spec[1]:
            raise ConfigError(f"expected one of {spec[1]}", path, _line(node))
        return
    if spec == "any":
        return
    if spec == "list":
        if not isinstance(node, yaml.SequenceNode):
            raise ConfigError("expected a list", path, _line(node))
        return
    if spec == SCALAR_OR_LIST:
        if isinstance(node, yaml.SequenceNode):
            return
        spec = NUM
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError(f"expected type {spec}", path, _line(node))
    t = _scalar_type(node)
    if t == "null":
        return
    ok = {
        "str": t == "str",
        "int": t == "int",
        NUM: t in ("int", "float"),
        "bool": t == "bool",
    }[spec]
    if not ok:
        raise ConfigError(f"expected type {spec}, got {node.value!r}", path, _line(node))


@dataclass
class ExperimentConfig:
    data: dict
    source: str = "<string>"

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def section(self, key) -> dict:
        return self.data.get(key) or {}

    @property
    def name(self) -> str:
        return self.data.get("name") or Path(self.source).stem

    @property
    def algorithm(self) -> str:
        return self.data["algorithm"]

    @property
    def seeds(self) -> list[int]:
        return [int(s) for s in self.data.get("seeds", [0])]

    @property
    def samples(self) -> int:
        return int(self.data.get("samples", 201))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = copy.deepcopy(self.data)
        data.update(kw)
        return ExperimentConfig(data, self.source)

    # builders

    def build_graph(self) -> Graph:
        g = self.section("graph")
        kind = g.get("kind", "explicit")
        try:
            if kind == "explicit":
                if "edges" not in g or "n" not in g:
                    raise ConfigError("explicit graphs need n and edges", "graph")
                return Graph(int(g["n"]), [tuple(e) for e in g["edges"]])
            params = {k: g[k] for k in ("n", "prob", "rows", "cols") if k in g}
            return gen_graph(kind, params, int(g.get("seed", 0)))
        except (GraphError, KeyError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc), "graph") from None

    def build_network(self, graph: Graph | None = None) -> NetworkSpec:
        graph = graph or self.build_graph()
        d = self.section("delays")
        comm = d.get("comm")
        try:
            if isinstance(comm, dict):
                if set(comm) != {"mixture"}:
                    raise ConfigError("expected a number, a list or {mixture: ...}", "delays.comm")
                mx = comm["mixture"]
                tau = DelayMixture(tuple(mx["values"]), tuple(mx["probs"]), int(mx.get("seed", 0))).sample(graph.m)
            elif comm is None:
                raise ConfigError("missing communication delays", "delays.comm")
            else:
                tau = comm
            tau_comp = d.get("comp", 0.0)
            tau_comp = 0.0 if tau_comp is None else tau_comp
            caps_sec = self.data.get("capacities")
            caps = None
            if caps_sec:
                caps = CapacityProfile.build(graph, caps_sec.get("edge"), caps_sec.get("comm"), caps_sec.get("comp"))
            it = self.section("intensities")
            p_comm = it.get("comm", "1/tau")
            p_comp = it.get("comp")
            if self.algorithm == "ddo" and p_comp is None:
                p_comp = "1/tau"
            net = NetworkSpec.build(graph, tau, tau_comp, None if p_comm == "max_capacity" else p_comm,
                                    None if p_comp == "max_capacity" else p_comp, caps)
            if caps is not None and caps.bounded:
                pc_max, pp_max = max_capacity_intensities(graph, net.delays, caps)
                new_comm = pc_max if p_comm == "max_capacity" else (
                    np.minimum(net.p_comm, pc_max) if p_comm == "1/tau" else net.p_comm)
                new_comp = net.p_comp
                if p_comp == "max_capacity":
                    new_comp = pp_max
                elif p_comp == "1/tau":
                    new_comp = np.minimum(net.p_comp, pp_max)
                net = net.with_intensities(new_comm, new_comp)
            return net
        except GraphError as exc:
            raise ConfigError(str(exc), "delays/intensities/capacities") from None

    def build_locals(self, n: int) -> list[QuadraticLocal]:
        sec = self.section("locals")
        sigma = float(sec.get("sigma", 1.0))
        L = float(sec.get("L", sigma))
        d = int(sec.get("d", 1))
        if "a" in sec or "c" in sec:
            a = np.broadcast_to(np.asarray(sec.get("a", sigma), float), (n,))
            c = np.asarray(sec.get("c", np.zeros((n, d))), float).reshape(n, -1)
            if (a < sigma).any() or (a > L).any():
                raise ConfigError("curvatures must lie in [sigma, L]", "locals.a")
            return [QuadraticLocal(float(ai), ci.copy()) for ai, ci in zip(a, c)]
        return gen_quadratics(n, d, sigma, L, int(sec.get("seed", 0)))

    def initial_state(self, n: int, seed: int | None = None) -> np.ndarray:
        sec = self.section("init")
        kind = sec.get("kind", "normal")
        d = int(sec.get("d", 1))
        if kind == "explicit":
            vals = np.asarray(sec.get("values"), float)
            if vals.shape[0] != n:
                raise ConfigError(f"expected {n} rows", "init.values")
            return vals.reshape(n, -1)
        if kind == "consensus":
            return np.ones((n, d))
        base = int(sec.get("seed", 0))
        return np.random.default_rng(base if seed is None else [base, seed]).standard_normal((n, d))


def _parse(text: str, source: str) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", "", mark.line + 1 if mark else None) from None
    if node is None:
        raise ConfigError("empty configuration")
    _check(node, SCHEMA, "")
    data = yaml.safe_load(text)
    missing = REQUIRED - set(data)
    if missing:
        raise ConfigError(f"missing required keys {sorted(missing)}")
    return ExperimentConfig(data, source)


def load_config(path_or_text: str | Path) -> ExperimentConfig:
    """Load and validate a configuration from a path, a preset name or YAML text."""
    p = Path(str(path_or_text))
    if str(path_or_text) in PRESETS:
        p = preset_path(str(path_or_text))
    if "\n" not in str(path_or_text) and p.exists():
        return _parse(p.read_text(), str(p))
    if "\n" in str(path_or_text) or ":" in str(path_or_text):
        return _parse(str(path_or_text), "<string>")
    raise ConfigError(f"configuration file not found: {path_or_text}")


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    return PRESET_DIR / f"{name}.yaml"


def load_preset(name: str) -> ExperimentConfig:
    return load_config(preset_path(name))
