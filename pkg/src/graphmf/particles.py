"""Euler-Maruyama time stepping for the finite systems: the graph-coupled
system, its kernel-weighted companion, and the coupled independent copies of
the nonlinear process driven by the same noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .kernels import Kernel, PositionGrid
from .models import InitialLaw, ModelSpec

BLOWUP_THRESHOLD = 1e12


class BlowUpError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(
            f"state blew up at step {step} (|theta| ~ {value:.3e}); "
            "halve the time step h")
        self.step = step


@dataclass(frozen=True)
class NoiseBath:
    """Pure keyed Gaussian increments: (replica, step) -> sqrt(h) * N(0, 1).

    Identical keys give identical blocks, so two systems sharing a bath and
    replica are driven by the same Brownian increments.
    """

    seed: int
    h: float
    stream: int = 0

    def increments(self, replica: int, step: int, n: int, d: int) -> np.ndarray:
        z = rng.normal_block(self.seed, rng.NOISE, self.stream, replica, step,
                             shape=(n, d))
        return np.sqrt(self.h) * z

    def initial_generator(self, replica: int) -> np.random.Generator:
        return rng.generator(self.seed, rng.INIT, self.stream, replica)


@dataclass
class Trajectory:
    """Uniform-step states of one finite system, (S+1, n, d)."""

    n: int
    d: int
    h: float
    times: np.ndarray
    states: np.ndarray
    seed: int
    replica: int
    stream: int
    model: ModelSpec
    grid: Optional[PositionGrid] = None
    kind: str = "graph"

    def at_time(self, t: float) -> np.ndarray:
        idx = int(round(t / self.h))
        if idx < 0 or idx >= len(self.times) or abs(self.times[idx] - t) > 1e-10:
            raise ValueError(f"time {t} is not on the step grid")
        return self.states[idx]

    def coupling_key(self):
        return (self.seed, self.stream, self.replica, self.n, self.h)


def _steps(T: float, h: float) -> int:
    S = int(round(T / h))
    if S < 1 or abs(S * h - T) > 1e-12 * max(1.0, abs(T)):
        raise ValueError("T must be a multiple of h")
    return S


def _euler_loop(theta0, model, drift_extra, T, h, bath, replica, grid, kind):
    n, d = theta0.shape
    S = _steps(T, h)
    states = np.empty((S + 1, n, d))
    states[0] = theta0
    theta = theta0.copy()
    sigma_t = np.asarray(model.sigma, dtype=float).T
    noisy = model.has_noise
    for s in range(S):
        drift = model.c(theta) + drift_extra(theta, s)
        theta = theta + h * drift
        if noisy:
            theta = theta + bath.increments(replica, s, n, d) @ sigma_t
        m = np.abs(theta).max()
        if not np.isfinite(m) or m > BLOWUP_THRESHOLD:
            raise BlowUpError(s, float(m))
        states[s + 1] = theta
    times = np.arange(S + 1) * h
    return Trajectory(n, d, h, times, states, bath.seed, replica, bath.stream,
                      model, grid, kind)


def _zero_coupling(model: ModelSpec) -> bool:
    return model.gamma_mat is not None and not np.any(model.gamma_mat)


def _with_disorder(drift_extra, disorder):
    if disorder is None:
        return drift_extra
    disorder = np.asarray(disorder, dtype=float)
    return lambda theta, s: drift_extra(theta, s) + disorder


def simulate_graph_system(graph, model: ModelSpec, init: InitialLaw,
                          T: float, h: float, bath: NoiseBath,
                          replica: int = 0, disorder=None) -> Trajectory:
    """Integrate the graph-coupled system with synchronous drift evaluation.

    ``disorder`` is an optional frozen (n, d) array of per-particle drift
    offsets (e.g. i.i.d. natural frequencies); the mean-field solvers
    condition on position only, so pass the disorder-averaged drift there.
    """
    grid = graph.grid
    theta0 = init.sample(grid.positions, bath.initial_generator(replica))
    if _zero_coupling(model):
        drift_extra = lambda theta, s: 0.0
    else:
        V = graph.weight_matrix()
        drift_extra = lambda theta, s: model.pairwise(V, theta)
    return _euler_loop(theta0, model, _with_disorder(drift_extra, disorder),
                       T, h, bath, replica, grid, "graph")


def _kernel_weight_matrix(W: Kernel, grid: PositionGrid) -> np.ndarray:
    x = grid.positions
    V = np.ascontiguousarray(W(x[:, None], x[None, :]), dtype=float)
    np.fill_diagonal(V, 0.0)
    return V


def simulate_w_system(W: Kernel, grid: PositionGrid, model: ModelSpec,
                      init: InitialLaw, T: float, h: float, bath: NoiseBath,
                      replica: int = 0, disorder=None) -> Trajectory:
    """Same stepper with deterministic weights W(x_i, x_j)/n; shares the
    noise keys of the matching graph run when given the same bath."""
    theta0 = init.sample(grid.positions, bath.initial_generator(replica))
    if _zero_coupling(model):
        drift_extra = lambda theta, s: 0.0
    else:
        V = _kernel_weight_matrix(W, grid)
        drift_extra = lambda theta, s: model.pairwise(V, theta)
    return _euler_loop(theta0, model, _with_disorder(drift_extra, disorder),
                       T, h, bath, replica, grid, "kernel")


def simulate_coupled_copies(mf, W: Kernel, grid: PositionGrid,
                            model: ModelSpec, init: InitialLaw, T: float,
                            h: float, bath: NoiseBath,
                            replica: int = 0) -> Trajectory:
    """Independent copies of the nonlinear process, one per node, driven by
    the same noise keys as the paired finite-system run.

    The measure flow is read off the mean-field solution ``mf`` (piecewise
    constant in time on the shared step grid); the spatial integral uses the
    solution's quadrature nodes and weights.
    """
    if abs(mf.h - h) > 1e-12:
        raise ValueError("mean-field solution and copies must share one h")
    S = _steps(T, h)
    if mf.num_steps < S:
        raise ValueError("mean-field solution does not cover [0, T]")
    x = grid.positions
    yq = mf.quadrature.positions
    if grid.p == 1:
        A = np.asarray(W(x[:, None], yq[None, :]), dtype=float)
    else:
        A = np.asarray(W(x[:, None, :], yq[None, :, :]), dtype=float)
    A = A * mf.quadrature.quadrature_weights[None, :]
    theta0 = init.sample(x, bath.initial_generator(replica))

    def drift_extra(theta, s):
        gm = mf.gamma_mean(theta, s)          # (n, Q, d)
        return np.einsum("iq,iqd->id", A, gm)

    return _euler_loop(theta0, model, drift_extra, T, h, bath, replica, grid,
                       "copies")


def spatial_profile(tr: Trajectory, x: float, t: float) -> np.ndarray:
    """Piecewise-constant spatial field: the state of particle floor(nx)+1."""
    if not 0.0 <= x < 1.0:
        raise ValueError("profile position must lie in [0, 1)")
    idx = min(int(np.floor(tr.n * x)), tr.n - 1)
    return tr.at_time(t)[idx]


def trajectory_to_npz(tr: Trajectory, path) -> None:
    """Binary dump with enough metadata to resume or re-analyze a run."""
    np.savez_compressed(path, states=tr.states, times=tr.times,
                        meta=np.array([tr.seed, tr.replica, tr.stream],
                                      dtype=np.int64), h=tr.h, kind=tr.kind)


def trajectory_from_npz(path, model: ModelSpec,
                        grid: Optional[PositionGrid] = None) -> Trajectory:
    with np.load(path, allow_pickle=False) as data:
        states = data["states"]
        seed, replica, stream = (int(v) for v in data["meta"])
        return Trajectory(states.shape[1], states.shape[2], float(data["h"]),
                          data["times"], states, seed, replica, stream,
                          model, grid, str(data["kind"]))


def trajectory_to_csv(tr: Trajectory, path, stride: int = 1) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "step", "time", "particle", "component",
                         "value"])
        for s in range(0, len(tr.times), stride):
            t = tr.times[s]
            for i in range(tr.n):
                for c in range(tr.d):
                    writer.writerow([tr.replica, s, f"{t:.12g}", i, c,
                                     f"{tr.states[s, i, c]:.17g}"])
