"""Asynchronous decentralized optimization over networks with delays."""

from .ddo import run_ddo
from .gossip import ProtocolConfig, run_gossip
from .graph import DelayProfile, Graph, GraphError, lambda2, laplacian, time_diameter
from .kernels import BACKEND_NAME
from .network import CapacityProfile, NetworkSpec
from .ode import integrate_delayed, integrate_linearized, stability_probe
from .sparsify import SparsifyProblem, optimize, prune_graph
from .tuning import TunedParameters, tune_ddo, tune_gossip

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "CapacityProfile",
    "DelayProfile",
    "Graph",
    "GraphError",
    "NetworkSpec",
    "ProtocolConfig",
    "SparsifyProblem",
    "TunedParameters",
    "integrate_delayed",
    "integrate_linearized",
    "lambda2",
    "laplacian",
    "optimize",
    "prune_graph",
    "run_ddo",
    "run_gossip",
    "stability_probe",
    "time_diameter",
    "tune_ddo",
    "tune_gossip",
]
