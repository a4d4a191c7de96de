"""Mean dynamics of delayed gossip as a delay differential equation.

``dy/dt = -sum_(ij) K_ij grad f_ij(y(t - tau_ij))`` with
``f_ij(y) = ||y_i - y_j||^2 / 2`` and ``y(t) = y(0)`` for ``t <= 0``, plus the
linearised companion ``(I - Lap(K tau)) dy/dt = -Lap(K) y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graph import DelayProfile, Graph, laplacian, spectral_radius
from .kernels import backend

__all__ = ["OdeTrajectory", "ProbeReport", "integrate_delayed", "integrate_linearized", "stability_probe"]


@dataclass
class OdeTrajectory:
    """States on the uniform grid ``times = k * dt``; ``status`` is 1 when the
    integration stopped on a non-finite value."""

    times: np.ndarray
    states: np.ndarray
    dt: float
    interpolation: str
    status: int = 0

    def at(self, t: float) -> np.ndarray:
        """State at ``t`` by linear interpolation on the grid (``y0`` before 0)."""
        if t <= 0:
            return self.states[0].copy()
        q = min(int(np.floor(t / self.dt)), len(self.times) - 1)
        if q == len(self.times) - 1:
            return self.states[q].copy()
        th = t / self.dt - q
        return (1 - th) * self.states[q] + th * self.states[q + 1]

    def consensus_error(self) -> np.ndarray:
        mean = self.states[0].mean(axis=0)
        return ((self.states - mean) ** 2).sum(axis=(1, 2))


def _as_state(y0, n):
    y0 = np.asarray(y0, float)
    return np.ascontiguousarray(y0.reshape(n, -1))


def _default_dt(graph, K, delays):
    tau = np.asarray(delays.tau_comm)
    pos = tau[tau > 0]
    if pos.size:
        return float(pos.min()) / 10.0
    rho = spectral_radius(graph, K)
    return 0.1 / rho if rho > 0 else 0.1


def integrate_delayed(graph: Graph, K, delays: DelayProfile, y0, horizon: float, dt: float | None = None,
                      interpolation: str = "hermite", kernels=None) -> OdeTrajectory:
    """Explicit RK4 by the method of steps.

    Delayed reads between grid points use cubic Hermite interpolation of the
    stored states and slopes (``"hermite"``, fourth order overall) or linear
    interpolation (``"linear"``, second order). Requires ``dt`` at most a tenth
    of the smallest positive delay.
    """
    if interpolation not in ("hermite", "linear"):
        raise ValueError("interpolation must be 'hermite' or 'linear'")
    K = graph.edge_array(K, "K")
    tau = np.ascontiguousarray(delays.tau_comm, float)
    if dt is None:
        dt = _default_dt(graph, K, delays)
    pos = tau[tau > 0]
    if pos.size and dt > pos.min() / 10.0 * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds a tenth of the smallest positive delay {pos.min()}")
    nsteps = int(np.ceil(horizon / dt - 1e-9))
    y = _as_state(y0, graph.n)
    ei, ej = graph.endpoints
    kb = kernels or backend
    Y, _, status = kb.dde_rk4(np.ascontiguousarray(ei), np.ascontiguousarray(ej), np.ascontiguousarray(K), tau,
                              y, float(dt), nsteps, interpolation == "hermite")
    Y = np.asarray(Y)
    return OdeTrajectory(np.arange(len(Y)) * dt, Y, float(dt), interpolation, int(status))


def integrate_linearized(graph: Graph, K, delays: DelayProfile, y0, horizon: float, dt: float | None = None) -> OdeTrajectory:
    """RK4 on ``dy/dt = -(I - Lap(K tau))^{-1} Lap(K) y`` using a Cholesky
    factorisation of the left-hand matrix."""
    K = graph.edge_array(K, "K")
    KT = K * np.asarray(delays.tau_comm)
    rho = spectral_radius(graph, KT)
    if rho >= 1.0:
        raise ValueError(f"linearised ODE needs rho(Lap(K tau)) < 1, got {rho}")
    if dt is None:
        dt = _default_dt(graph, K, delays)
    lhs = cho_factor(np.eye(graph.n) - laplacian(graph, KT))
    A = laplacian(graph, K)
    y = _as_state(y0, graph.n)
    nsteps = int(np.ceil(horizon / dt - 1e-9))
    Y = np.empty((nsteps + 1,) + y.shape)
    Y[0] = y

    def f(v):
        return -cho_solve(lhs, A @ v)

    status = 0
    for q in range(nsteps):
        v = Y[q]
        k1 = f(v)
        k2 = f(v + 0.5 * dt * k1)
        k3 = f(v + 0.5 * dt * k2)
        k4 = f(v + dt * k3)
        Y[q + 1] = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(Y[q + 1]).all():
            Y = Y[: q + 2]
            status = 1
            break
    return OdeTrajectory(np.arange(len(Y)) * dt, Y, float(dt), "none", status)


@dataclass(frozen=True)
class ProbeReport:
    rho: float
    certified: bool
    decayed: bool
    ratio: float
    diverged: bool

    def __str__(self) -> str:
        return (f"rho={self.rho:.6g} certified={self.certified} decayed={self.decayed} "
                f"ratio={self.ratio:.3e} diverged={self.diverged}")


def stability_probe(graph: Graph, K, delays: DelayProfile, horizon: float, seed: int = 0,
                    dt: float | None = None, threshold: float = 1e-3) -> ProbeReport:
    """Integrate the delayed ODE from a random non-consensus start and report
    whether the distance to consensus fell below ``threshold`` times its
    initial value."""
    K = graph.edge_array(K, "K")
    rho = spectral_radius(graph, K * np.asarray(delays.tau_comm))
    y0 = np.random.default_rng(seed).standard_normal((graph.n, 1))
    traj = integrate_delayed(graph, K, delays, y0, horizon, dt)
    with np.errstate(over="ignore", invalid="ignore"):
        err = traj.consensus_error()
    ratio = float(np.sqrt(err[-1] / err[0])) if traj.status == 0 else float("inf")
    return ProbeReport(rho, rho < 1.0, ratio <= threshold, ratio, traj.status != 0)
