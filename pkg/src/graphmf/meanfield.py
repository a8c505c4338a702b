"""Limit objects: the McKean-Vlasov law flow via Picard iteration on the
driving measure, the kernel-coupled integro-differential equation for the
spatial profile, and the compactification of unbounded position spaces.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .kernels import Kernel, PositionGrid, grid_from_nodes, make_positions
from .models import InitialLaw, ModelSpec
from .particles import BLOWUP_THRESHOLD, BlowUpError
from .quadrature import line_rule


# ---------------------------------------------------------------------------
# solution containers
# ---------------------------------------------------------------------------

@dataclass
class MeanFieldSolution:
    """Law flow nu_t^x as per-node particle ensembles on a uniform step grid.

    ``ensembles`` has shape (S+1, Q, M, d).  For models with a tagged
    sufficient statistic the reduced per-(time, node) statistics are kept
    alongside and used for fast interaction means.
    """

    model: ModelSpec
    quadrature: PositionGrid
    M: int
    h: float
    times: np.ndarray
    ensembles: np.ndarray
    picard_iterations: int
    final_gap: float
    converged: bool
    gap_history: list
    stats: Optional[dict] = None

    def __post_init__(self):
        if self.stats is None and self.model.stats_hook is not None:
            self.stats = self.model.ensemble_stats(self.ensembles)

    @property
    def num_steps(self) -> int:
        return len(self.times) - 1

    def stats_at(self, step: int) -> Optional[dict]:
        if self.stats is None:
            return None
        return {k: v[step] for k, v in self.stats.items()}

    def gamma_mean(self, theta: np.ndarray, step: int) -> np.ndarray:
        """Mean interaction field against every node law at one time.

        theta (n, d) -> (n, Q, d); entry (i, q) averages Gamma(theta_i, .)
        over node q's ensemble.
        """
        theta = np.asarray(theta, dtype=float)
        st = self.stats_at(step)
        if st is not None:
            return self.model.gamma_mean_from_stats(theta[:, None, :], st)
        ens = self.ensembles[step]
        return self.model.gamma(theta[:, None, None, :],
                                ens[None, :, :, :]).mean(axis=2)

    def node_means(self) -> np.ndarray:
        """First moments per (time, node), shape (S+1, Q, d)."""
        return self.ensembles.mean(axis=2)

    def moment(self, power: int) -> np.ndarray:
        """sup over time of the per-node empirical |theta|^power."""
        norms = np.linalg.norm(self.ensembles, axis=-1) ** power
        return norms.mean(axis=2).max(axis=0)


@dataclass
class ProfileField:
    """Deterministic spatial profile on quadrature nodes over time."""

    quadrature: PositionGrid
    h: float
    times: np.ndarray
    values: np.ndarray           # (S+1, Q, d)
    self_estimate: Optional[float] = None

    def at_time(self, t: float) -> np.ndarray:
        idx = int(round(t / self.h))
        if idx < 0 or idx >= len(self.times) or abs(self.times[idx] - t) > 1e-10:
            raise ValueError(f"time {t} is not on the step grid")
        return self.values[idx]


def uniform_quadrature(Q: int) -> PositionGrid:
    """Quadrature of the uniform law mirroring the particle position grid."""
    return make_positions("deterministic", Q)


def _coupling_table(W: Kernel, quad: PositionGrid) -> np.ndarray:
    x = quad.positions
    if quad.p == 1:
        A = np.ascontiguousarray(W(x[:, None], x[None, :]), dtype=float)
    else:
        A = np.ascontiguousarray(W(x[:, None, :], x[None, :, :]), dtype=float)
    np.fill_diagonal(A, 0.0)
    return A * quad.quadrature_weights[None, :]


def _check_steps(T: float, h: float) -> int:
    S = int(round(T / h))
    if S < 1 or abs(S * h - T) > 1e-12 * max(1.0, abs(T)):
        raise ValueError("T must be a multiple of h")
    return S


# ---------------------------------------------------------------------------
# the heat / neural-field solver
# ---------------------------------------------------------------------------

def heat_solve(model: ModelSpec, W: Kernel, quad: PositionGrid, psi0,
               T: float, h: float) -> ProfileField:
    """Classical RK4 on the quadrature-coupled node system.

    d psi_q/dt = c(psi_q) + sum_{r != q} w_r W(x_q, x_r) Gamma(psi_q, psi_r).
    """
    S = _check_steps(T, h)
    Q = quad.n
    A = _coupling_table(W, quad)
    psi = np.asarray(psi0(quad.positions) if callable(psi0) else psi0,
                     dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.shape != (Q, model.d):
        raise ValueError("initial profile shape does not match quadrature/model")

    def rhs(p):
        g = model.gamma(p[:, None, :], p[None, :, :])
        return model.c(p) + np.einsum("qr,qrd->qd", A, g)

    values = np.empty((S + 1, Q, model.d))
    values[0] = psi
    for s in range(S):
        k1 = rhs(psi)
        k2 = rhs(psi + 0.5 * h * k1)
        k3 = rhs(psi + 0.5 * h * k2)
        k4 = rhs(psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        m = np.abs(psi).max()
        if not np.isfinite(m) or m > BLOWUP_THRESHOLD:
            raise BlowUpError(s, float(m))
        values[s + 1] = psi
    return ProfileField(quad, h, np.arange(S + 1) * h, values)


def psi0_from_init(init: InitialLaw, quad: PositionGrid, samples: int = 4096,
                   seed: int = 0):
    """Per-node first moment of the initial law; (values, stderr)."""
    if init.mean is not None:
        return np.asarray(init.mean(quad.positions), dtype=float), None
    draws = np.stack([init.sample(quad.positions,
                                  rng.generator(seed, rng.MF_INIT, 1, r))
                      for r in range(max(2, samples // quad.n))])
    return draws.mean(axis=0), draws.std(axis=0, ddof=1) / np.sqrt(len(draws))


# ---------------------------------------------------------------------------
# Picard iteration on the driving measure
# ---------------------------------------------------------------------------

def _stage_interaction(model: ModelSpec, A: np.ndarray, y: np.ndarray,
                       frozen: np.ndarray) -> np.ndarray:
    """sum_r A_qr * mean_m' Gamma(y_qm, frozen_rm') for states y (Q, M, d)."""
    if model.stats_hook is not None:
        st = {k: v[None, None, ...]             # two leading broadcast axes
              for k, v in model.ensemble_stats(frozen).items()}
        gm = model.gamma_mean_from_stats(y[:, :, None, :], st)
    else:
        gm = model.gamma(y[:, :, None, None, :],
                         frozen[None, None, :, :, :]).mean(axis=3)
    return np.einsum("qr,qmrd->qmd", A, gm)


def picard_solve(model: ModelSpec, W: Kernel, quad: PositionGrid, M: int,
                 init: InitialLaw, T: float, h: float, tol: float = 1e-8,
                 max_iter: int = 25, seed: int = 0,
                 window: float = 1.0) -> MeanFieldSolution:
    """Fixed-point construction of the law flow.

    Each sweep freezes the previous iterate's flow (including its RK4 stage
    states, so the deterministic fixed point coincides with the coupled RK4
    system used by ``heat_solve``) and re-integrates every node's M particles
    under common random numbers: noise draws are keyed by the global step
    index only and are identical across sweeps.

    The sweep-to-sweep gap is the max over nodes of the sup over time of the
    root-mean 2k-power pathwise difference.  For horizons beyond ``window``
    the construction restarts window by window (the contraction constant
    grows with the horizon).
    """
    if M < 1 or tol <= 0:
        raise ValueError("need M >= 1 and tol > 0")
    S_total = _check_steps(T, h)
    steps_window = max(1, int(round(min(window, T) / h)))
    Q, d = quad.n, model.d
    A = _coupling_table(W, quad)
    two_k = 2 * model.k
    sigma_t = np.asarray(model.sigma, dtype=float).T
    noisy = model.has_noise

    Y0 = init.sample(quad.positions, rng.generator(seed, rng.MF_INIT, 0))
    Y0 = np.repeat(Y0[:, None, :], M, axis=1) if Y0.ndim == 2 else Y0
    if init.name != "point":
        # per-particle draws: one keyed generator for the whole block
        gen = rng.generator(seed, rng.MF_INIT, 0)
        flat = np.repeat(quad.positions, M, axis=0)
        Y0 = init.sample(flat, gen).reshape(Q, M, d)

    ens = np.empty((S_total + 1, Q, M, d))
    ens[0] = Y0
    gap_history: list = []
    iterations_used = 0
    final_gap = np.inf
    converged = True

    start = 0
    while start < S_total:
        Sw = min(steps_window, S_total - start)
        Ystart = ens[start]
        noise = None
        if noisy:
            noise = np.stack([
                np.sqrt(h) * rng.normal_block(seed, rng.MF_NOISE, start + s,
                                              shape=(Q, M, d)) @ sigma_t
                for s in range(Sw)])
        # iterate zero: flow frozen at the window-start ensembles
        frozen_stages = np.broadcast_to(Ystart, (Sw, 4, Q, M, d)).copy()
        prev_path = np.broadcast_to(Ystart, (Sw + 1, Q, M, d)).copy()
        gaps = []
        for it in range(1, max_iter + 1):
            path = np.empty((Sw + 1, Q, M, d))
            stages = np.empty((Sw, 4, Q, M, d))
            path[0] = Ystart
            y = Ystart.copy()
            for s in range(Sw):
                z1 = y
                k1 = model.c(z1) + _stage_interaction(model, A, z1, frozen_stages[s, 0])
                z2 = y + 0.5 * h * k1
                k2 = model.c(z2) + _stage_interaction(model, A, z2, frozen_stages[s, 1])
                z3 = y + 0.5 * h * k2
                k3 = model.c(z3) + _stage_interaction(model, A, z3, frozen_stages[s, 2])
                z4 = y + h * k3
                k4 = model.c(z4) + _stage_interaction(model, A, z4, frozen_stages[s, 3])
                stages[s, 0], stages[s, 1], stages[s, 2], stages[s, 3] = z1, z2, z3, z4
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                if noisy:
                    y = y + noise[s]
                mx = np.abs(y).max()
                if not np.isfinite(mx) or mx > BLOWUP_THRESHOLD:
                    raise BlowUpError(start + s, float(mx))
                path[s + 1] = y
            diff = np.linalg.norm(path - prev_path, axis=-1) ** two_k
            gap = float(diff.mean(axis=2).max() ** (1.0 / two_k))
            gaps.append(gap)
            prev_path = path
            frozen_stages = stages
            if gap < tol:
                break
        else:
            converged = False
        gap_history.append(gaps)
        iterations_used = max(iterations_used, len(gaps))
        final_gap = gaps[-1] if start == 0 else max(final_gap, gaps[-1])
        ens[start + 1:start + Sw + 1] = prev_path[1:]
        start += Sw

    times = np.arange(S_total + 1) * h
    return MeanFieldSolution(model, quad, M, h, times, ens,
                             iterations_used, final_gap, converged,
                             gap_history)


# ---------------------------------------------------------------------------
# refinement probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RefinementReport:
    discrepancies: tuple      # joint (h, Q) -> (h/2, 2Q) -> (h/4, 4Q)
    joint_ratio: float
    time_errors: tuple        # fixed Q, h -> h/2 -> h/4
    order_estimate: float


def _l2_at_common_nodes(coarse: ProfileField, fine: ProfileField) -> float:
    """Max-over-time L2 node discrepancy; node sets must be nested."""
    ratio_q = fine.quadrature.n // coarse.quadrature.n
    ratio_t = round(coarse.h / fine.h)
    fine_vals = fine.values[::ratio_t][:, ratio_q - 1::ratio_q]
    diff = fine_vals - coarse.values
    w = coarse.quadrature.quadrature_weights
    sq = (np.linalg.norm(diff, axis=-1) ** 2 * w).sum(axis=1)
    return float(np.sqrt(sq.max()))


def uniqueness_probe(model: ModelSpec, W: Kernel, psi0_fn: Callable,
                     T: float, h: float, Q: int) -> RefinementReport:
    """Self-convergence study for the profile solver.

    Joint refinement (h, Q) -> (h/2, 2Q) -> (h/4, 4Q) measures the combined
    discretization defect; a fixed-Q time refinement isolates the integrator
    order (log2 of the error ratio, ~4 for RK4).
    """
    sols = [heat_solve(model, W, uniform_quadrature(Q * 2 ** j), psi0_fn,
                       T, h / 2 ** j) for j in range(3)]
    d1 = _l2_at_common_nodes(sols[0], sols[1])
    d2 = _l2_at_common_nodes(sols[1], sols[2])
    joint_ratio = d1 / d2 if d2 > 0 else np.inf

    fixed = [heat_solve(model, W, uniform_quadrature(Q), psi0_fn, T, h / 2 ** j)
             for j in range(3)]
    e1 = _l2_at_common_nodes(fixed[0], fixed[1])
    e2 = _l2_at_common_nodes(fixed[1], fixed[2])
    order = np.log2(e1 / e2) if e2 > 0 else np.inf
    sols[0].self_estimate = d1
    return RefinementReport((d1, d2), joint_ratio, (e1, e2), float(order))


# ---------------------------------------------------------------------------
# truncation of unbounded position spaces
# ---------------------------------------------------------------------------

class TruncationError(ValueError):
    def __init__(self, mass: float, m_trunc: float):
        super().__init__(f"truncation box [-{m_trunc}, {m_trunc}]^p carries "
                         f"mass {mass:.4f} < 1/2; enlarge it")
        self.mass = mass


@dataclass(frozen=True)
class TruncatedDomain:
    """Compactified problem: box quadrature, reweighted kernel, kept mass.

    The reweighted kernel absorbs the normalized density of the position law,
    so the compact-domain solvers apply unchanged under the uniform reference
    measure on the box.
    """

    grid: PositionGrid
    kernel: Kernel
    mass: float
    m_trunc: float


def truncate_domain(density: Callable, W: Kernel, m_trunc: float, Q: int,
                    p: int = 1) -> TruncatedDomain:
    if m_trunc <= 0:
        raise ValueError("truncation radius must be positive")
    if p != 1:
        raise NotImplementedError("box truncation is implemented for p = 1")
    nodes, weights = line_rule(-m_trunc, m_trunc, panels=256)
    mass = float(np.dot(weights, density(nodes)))
    if mass < 0.5:
        raise TruncationError(mass, m_trunc)
    volume = 2.0 * m_trunc

    def evaluator(x, y):
        return W(x, y) * density(np.asarray(y, dtype=float)) / mass * volume

    kernel = Kernel(f"truncated({W.name},M={m_trunc:g})", evaluator,
                    params={"m_trunc": m_trunc, "mass": mass, **W.params})
    pos = -m_trunc + volume * np.arange(1, Q + 1) / Q
    grid = grid_from_nodes(pos, domain_kind="box", bounds=(-m_trunc, m_trunc))
    return TruncatedDomain(grid, kernel, mass, float(m_trunc))
