"""Convergence functionals and statistical validators: Wasserstein distances,
coupling errors between the finite systems and their limits, the empirical
kernel discrepancies entering the quenched estimates, and the concentration
bounds used on the Bernoulli edge noise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import wasserstein_distance

from . import rng
from .kernels import Kernel, MicroKernel, PositionGrid, micro_prob
from .meanfield import MeanFieldSolution, ProfileField
from .models import ModelSpec
from .particles import Trajectory

EXACT_ASSIGNMENT_LIMIT = 256
SLICED_DIRECTIONS = 64


# ---------------------------------------------------------------------------
# Wasserstein distances
# ---------------------------------------------------------------------------

def w1_1d(a, b) -> float:
    """First Wasserstein distance between scalar samples.

    Equal sizes use the order-statistics coupling; unequal sizes fall back to
    the quantile-function integral.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample set")
    if a.size == b.size:
        return float(np.abs(np.sort(a) - np.sort(b)).mean())
    return float(wasserstein_distance(a, b))


def w1_point_cloud(a, b, seed: int = 0):
    """W1 between equal-size point clouds in R^d.

    Exact assignment up to 256 points; a sliced estimator (labeled as such)
    above.  Returns (value, method).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError("point clouds must have equal shapes")
    m, d = a.shape
    if d == 1:
        return w1_1d(a, b), "sorted"
    if m <= EXACT_ASSIGNMENT_LIMIT:
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean()), "exact-assignment"
    gen = rng.generator(seed, rng.PROBE, 11)
    dirs = gen.standard_normal((SLICED_DIRECTIONS, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    vals = [w1_1d(a @ u, b @ u) for u in dirs]
    return float(np.mean(vals)), "sliced"


# ---------------------------------------------------------------------------
# coupling errors against the limit objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PropagationReport:
    max_error: float          # sup_i of the Monte Carlo mean sup-square error
    q95: float                # 95th percentile over nodes (max of noisy means
    per_node: np.ndarray      # is biased upward; both are reported)
    stderr: np.ndarray
    replicas: int

    def __float__(self):
        return self.max_error


def propagation_error(systems: Sequence[Trajectory],
                      copies: Sequence[Trajectory]) -> PropagationReport:
    """Pathwise coupling error between a finite system and its nonlinear
    copies, Monte Carlo averaged over replicas sharing noise keys."""
    if len(systems) != len(copies) or not systems:
        raise ValueError("need matching nonempty replica lists")
    per_rep = []
    for tr, cp in zip(systems, copies):
        if tr.coupling_key() != cp.coupling_key():
            raise ValueError("trajectories are not coupled (noise keys differ)")
        diff = np.linalg.norm(tr.states - cp.states, axis=-1) ** 2
        per_rep.append(diff.max(axis=0))
    D = np.stack(per_rep)                     # (R, n)
    mean = D.mean(axis=0)
    se = D.std(axis=0, ddof=1) / np.sqrt(len(per_rep)) if len(per_rep) > 1 \
        else np.zeros_like(mean)
    return PropagationReport(float(mean.max()), float(np.quantile(mean, 0.95)),
                             mean, se, len(per_rep))


def _check_test_function(phi, d: int, seed: int = 0) -> dict:
    gen = rng.generator(seed, rng.PROBE, 12)
    out = {}
    for scale in (1.0, 10.0):
        th = scale * gen.standard_normal((256, d))
        x = gen.random(256)
        vals = np.asarray(phi(th, x), dtype=float)
        out[scale] = float(np.max(np.abs(vals) / (1.0 + np.linalg.norm(th, axis=-1))))
    out["growth_ok"] = out[10.0] <= 10.0 * max(out[1.0], 1e-12)
    return out


def empirical_measure_error(runs: Sequence[Trajectory], mf: MeanFieldSolution,
                            phi: Callable, check: bool = True) -> dict:
    """sup over grid times of the Monte Carlo mean squared pairing error
    E |<nu_n,t - nu_t, phi>|^2 for one test function phi(theta, x)."""
    if not runs:
        raise ValueError("no replicas")
    tr0 = runs[0]
    if abs(tr0.h - mf.h) > 1e-12:
        raise ValueError("system and mean-field runs must share one h")
    S = min(len(tr0.times), mf.num_steps + 1)
    x = tr0.grid.positions
    xq = mf.quadrature.positions
    wq = mf.quadrature.quadrature_weights
    limit = np.empty(S)
    for s in range(S):
        vals = np.asarray(phi(mf.ensembles[s], xq[:, None]), dtype=float)
        limit[s] = float((vals.mean(axis=1) * wq).sum())
    sq = np.zeros(S)
    for tr in runs:
        emp = np.asarray(phi(tr.states[:S], x[None, :]), dtype=float).mean(axis=1)
        sq += (emp - limit) ** 2
    sq /= len(runs)
    report = {"value": float(sq.max()),
              "argmax_time": float(tr0.times[int(np.argmax(sq))]),
              "replicas": len(runs)}
    if check:
        report["phi_check"] = _check_test_function(phi, tr0.d)
    return report


def _merged_cells(n: int, Q: int):
    """Overlap partition of [0, 1] for two left-closed uniform cell systems."""
    edges = np.union1d(np.arange(n + 1) / n, np.arange(Q + 1) / Q)
    lengths = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    i_idx = np.minimum((mids * n).astype(int), n - 1)
    q_idx = np.minimum((mids * Q).astype(int), Q - 1)
    return i_idx, q_idx, lengths


def profile_error(tr: Trajectory, pf: ProfileField, k: int) -> float:
    """sup over times of the L^k distance between the particle spatial field
    and the profile, both taken piecewise constant on their cells."""
    ratio = pf.h / tr.h
    stride = int(round(ratio))
    if abs(stride - ratio) > 1e-9 or stride < 1:
        raise ValueError("profile step must be a multiple of the particle step")
    S = min((len(tr.times) - 1) // stride, len(pf.times) - 1)
    i_idx, q_idx, lengths = _merged_cells(tr.n, pf.quadrature.n)
    worst = 0.0
    for s in range(S + 1):
        diff = tr.states[s * stride][i_idx] - pf.values[s][q_idx]
        val = float((np.linalg.norm(diff, axis=-1) ** k * lengths).sum() ** (1.0 / k))
        worst = max(worst, val)
    return worst


# ---------------------------------------------------------------------------
# identification between the profile and the law flow
# ---------------------------------------------------------------------------

def trig_dictionary(K: int = 3) -> list:
    """Versioned trigonometric test functions on [0, 1] (dictionary trig-v1)."""
    fns = [("trig-v1:const", lambda x: np.ones_like(x))]
    for k in range(1, K + 1):
        fns.append((f"trig-v1:cos{k}",
                    lambda x, k=k: np.cos(2.0 * np.pi * k * x)))
        fns.append((f"trig-v1:sin{k}",
                    lambda x, k=k: np.sin(2.0 * np.pi * k * x)))
    return fns


def bump_dictionary(centers=(-1.5, -0.75, 0.0, 0.75, 1.5), width: float = 1.0) -> list:
    """Versioned compactly supported bumps on the line (dictionary bump-v1)."""
    def bump(c):
        def f(x):
            u = (np.asarray(x, dtype=float) - c) / width
            out = np.zeros_like(u)
            inside = np.abs(u) < 1.0
            out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
            return out
        return f
    return [(f"bump-v1:{c:g}", bump(c)) for c in centers]


def identification_residual(pf: ProfileField, mf: MeanFieldSolution,
                            dictionary: Optional[list] = None) -> dict:
    """max over test functions, times and components of the pairing gap
    |<psi(., t), J> - <E theta_t^., J>| on the shared quadrature."""
    if dictionary is None:
        dictionary = trig_dictionary()
    if pf.quadrature.n != mf.quadrature.n or not np.allclose(
            pf.quadrature.positions, mf.quadrature.positions, atol=1e-12):
        raise ValueError("profile and law flow must share one quadrature")
    stride = int(round(mf.h / pf.h))
    if abs(stride * pf.h - mf.h) > 1e-12 or stride < 1:
        raise ValueError("incompatible time steps")
    S = min((len(pf.times) - 1) // stride, mf.num_steps)
    w = mf.quadrature.quadrature_weights
    x = mf.quadrature.positions
    means = mf.node_means()
    worst, arg = 0.0, None
    for name, J in dictionary:
        Jw = np.asarray(J(x), dtype=float) * w
        for s in range(S + 1):
            gap = np.abs(Jw @ (pf.values[s * stride] - means[s]))
            g = float(gap.max())
            if g > worst:
                worst, arg = g, (name, float(mf.times[s]))
    return {"residual": worst, "argmax": arg, "dictionary": len(dictionary)}


# ---------------------------------------------------------------------------
# kernel-averaged interaction statistics
# ---------------------------------------------------------------------------

def nearest_nodes(positions, quad: PositionGrid) -> np.ndarray:
    pos = np.atleast_1d(np.asarray(positions, dtype=float))
    nodes = np.atleast_1d(quad.positions)
    if pos.ndim == 1:
        return np.abs(pos[:, None] - nodes[None, :]).argmin(axis=1)
    return np.linalg.norm(pos[:, None, :] - nodes[None, :, :], axis=-1).argmin(axis=1)


def gamma_avg(mf: MeanFieldSolution, theta, node: int, step: int) -> np.ndarray:
    """Mean interaction of one state against node ``node``'s law at one time."""
    theta = np.asarray(theta, dtype=float)
    return mf.gamma_mean(theta[None, :], step)[0, node]


def upsilon_tensor(mf: MeanFieldSolution, T: float) -> np.ndarray:
    """Time-integrated interaction covariance on the quadrature nodes.

    Entry (x, y, z) integrates, over [0, T] and node x's law, the inner
    product of the mean interactions against nodes y and z (trapezoid rule on
    the step grid).
    """
    S = int(round(T / mf.h))
    if S > mf.num_steps:
        raise ValueError("mean-field solution does not cover [0, T]")
    Q, M = mf.quadrature.n, mf.M
    vals = np.empty((S + 1, Q, Q, Q))
    for s in range(S + 1):
        G = np.stack([mf.gamma_mean(mf.ensembles[s, q], s) for q in range(Q)])
        vals[s] = np.einsum("xmyd,xmzd->xyz", G, G) / M
    return np.trapezoid(vals, dx=mf.h, axis=0)


def upsilon(mf: MeanFieldSolution, x: int, y: int, z: int, T: float) -> float:
    """Single entry of ``upsilon_tensor`` for node indices (x, y, z)."""
    S = int(round(T / mf.h))
    vals = np.empty(S + 1)
    for s in range(S + 1):
        G = mf.gamma_mean(mf.ensembles[s, x], s)
        vals[s] = float(np.einsum("md,md->", G[:, y], G[:, z])) / mf.M
    return float(np.trapezoid(vals, dx=mf.h))


def upsilon_bound(mf: MeanFieldSolution, model: ModelSpec, T: float) -> float:
    """Moment-based a priori bound C * T on any upsilon entry."""
    m1 = np.linalg.norm(mf.ensembles, axis=-1).mean(axis=2).max()
    return T * (model.L_gamma * (2.0 + 2.0 * m1)) ** 2


@dataclass(frozen=True)
class EpsilonReport:
    e1: float
    e2: float
    e3: float

    def as_tuple(self):
        return (self.e1, self.e2, self.e3)


def epsilon_terms(mf: MeanFieldSolution, W: Kernel, grid: PositionGrid,
                  T: float) -> EpsilonReport:
    """The three sup-over-rows discrepancies between the empirical position
    measure and the reference quadrature, weighted by the kernel and the
    interaction covariance.

    Computed through the algebraic splitting  l_n x l_n - l x l =
    (l_n - l) x l_n + l x (l_n - l), so coinciding quadratures give exact
    zeros.
    """
    U = upsilon_tensor(mf, T)
    xg = np.atleast_1d(grid.positions)
    xq = np.atleast_1d(mf.quadrature.positions)
    wn_g = grid.quadrature_weights
    w_q = mf.quadrature.quadrature_weights
    same = (grid.n == mf.quadrature.n
            and np.array_equal(np.asarray(xg), np.asarray(xq)))
    if same:
        atoms = xg
        node_of = np.arange(grid.n)
        ln = wn_g
        ll = w_q
    else:
        atoms = np.concatenate([xg, xq])
        node_of = np.concatenate([nearest_nodes(xg, mf.quadrature),
                                  np.arange(mf.quadrature.n)])
        ln = np.concatenate([wn_g, np.zeros(mf.quadrature.n)])
        ll = np.concatenate([np.zeros(grid.n), w_q])
    s_w = ln - ll

    rows_x = xg
    rows_node = nearest_nodes(xg, mf.quadrature)
    Wrow = np.asarray(W(rows_x[:, None], atoms[None, :]), dtype=float)  # (n, A)
    e1 = e2 = e3 = 0.0
    for i in range(len(rows_x)):
        K = (Wrow[i][:, None] * Wrow[i][None, :]
             * U[rows_node[i]][np.ix_(node_of, node_of)])
        t2 = float(s_w @ K @ ll)        # (l_n - l) x l
        t3 = float(ll @ K @ s_w)        # l x (l_n - l)
        t1 = float(s_w @ K @ ln) + t3   # (l_n - l) x l_n + l x (l_n - l)
        e1 = max(e1, abs(t1))
        e2 = max(e2, abs(t2))
        e3 = max(e3, abs(t3))
    return EpsilonReport(e1, e2, e3)


def d_nt_estimate(graph, mk: MicroKernel, mf: MeanFieldSolution,
                  copies: Sequence[Trajectory], T: float) -> float:
    """Quenched fluctuation functional of the edge noise against the frozen
    mean interaction field, Monte Carlo averaged over replica copies."""
    if not copies:
        raise ValueError("no replicas")
    n = graph.n
    x = graph.grid.positions
    W_n = micro_prob(mk, x[:, None], x[None, :])
    np.fill_diagonal(W_n, 0.0)
    delta = graph.kappa[:, None] * (graph.adjacency().astype(float) - W_n)
    node_of = nearest_nodes(x, mf.quadrature)
    S = int(round(T / copies[0].h))
    acc = np.zeros((S + 1, n))
    for tr in copies:
        for s in range(S + 1):
            G = mf.gamma_mean(tr.states[s], s)[:, node_of, :]   # (n, n, d)
            v = np.einsum("ik,ikd->id", delta, G) / n
            acc[s] += (v ** 2).sum(axis=-1)
    acc /= len(copies)
    return float(np.trapezoid(acc, dx=copies[0].h, axis=0).max())


# ---------------------------------------------------------------------------
# Hoelder distance between position measures
# ---------------------------------------------------------------------------

def _holder_norm_bound(sup: float, lip: float, iota: float) -> float:
    if lip == 0.0:
        return sup
    return sup + 2.0 ** (1.0 - iota) * lip ** iota


def d_holder(grid: PositionGrid, iota: float, K: int = 6,
             reference: Optional[PositionGrid] = None, hats: int = 8) -> float:
    """Dictionary lower bound on the Hoelder-dual distance between the
    empirical position measure and a reference measure.

    The dictionary (trig-v1 + hat-v1 + caps at the atoms) is normalized by
    upper bounds of the Hoelder norms, so the result is a certified lower
    bound of the true sup.
    """
    if not 0.0 < iota <= 1.0:
        raise ValueError("iota must lie in (0, 1]")
    atoms = np.atleast_1d(grid.positions)
    wts = grid.quadrature_weights

    def pair(phi):
        emp = float(np.dot(wts, phi(atoms)))
        if reference is None:
            nodes, weights = np.polynomial.legendre.leggauss(64)
            nodes = 0.5 * (nodes + 1.0)
            ref = float(np.dot(0.5 * weights, phi(nodes)))
        else:
            ref = float(np.dot(reference.quadrature_weights,
                               phi(np.atleast_1d(reference.positions))))
        return emp - ref

    best = 0.0
    for name, f in trig_dictionary(K):
        k = 0 if "const" in name else int(name[-1])
        norm = _holder_norm_bound(1.0, 2.0 * np.pi * k, iota)
        best = max(best, abs(pair(f)) / norm)
    halfw = 0.5 / hats
    for j in range(hats):
        c = (j + 0.5) / hats
        norm = _holder_norm_bound(1.0, 1.0 / halfw, iota)
        best = max(best, abs(pair(
            lambda x, c=c: np.maximum(0.0, 1.0 - np.abs(x - c) / halfw))) / norm)
    support = atoms if reference is None else np.concatenate(
        [atoms, np.atleast_1d(reference.positions)])
    gaps = np.unique(np.abs(support[:, None] - support[None, :]))
    caps = [g for g in gaps if g > 1e-14][:6] or [1.0]
    for a in support[:16]:
        for s in caps:
            norm = s + (2.0 * s) ** (1.0 - iota) if iota < 1.0 else s + 1.0
            best = max(best, abs(pair(
                lambda x, a=a, s=s: np.minimum(np.abs(x - a), s))) / norm)
    return best


# ---------------------------------------------------------------------------
# concentration machinery for the edge noise
# ---------------------------------------------------------------------------

def bennett_B(u) -> np.ndarray:
    """B(u) = [(1+u) log(1+u) - u] / u^2, continuous at 0 with value 1/2."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-4
    us = u[small]
    out[small] = 0.5 - us / 6.0 + us ** 2 / 12.0
    ub = u[~small]
    out[~small] = ((1.0 + ub) * np.log1p(ub) - ub) / ub ** 2
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ConcentrationReport:
    epsilon_n: float
    empirical_tail: float
    bound: float
    passed: bool
    trials: int


def concentration_check(kappa_n: float, w_n: float, n: int, p, v,
                        trials: int, seed: int = 0) -> ConcentrationReport:
    """Empirical tail of the renormalized centered Bernoulli sum against the
    Bennett-type bound at the canonical threshold epsilon_n."""
    p = np.broadcast_to(np.asarray(p, dtype=float), (n,))
    v = np.broadcast_to(np.asarray(v, dtype=float), (n,))
    if np.any(np.abs(v) > 1.0 + 1e-12):
        raise ValueError("test vector entries must lie in [-1, 1]")
    if np.any(p > w_n + 1e-12):
        raise ValueError("Bernoulli parameters must not exceed w_n")
    if kappa_n < 1.0 or not 0.0 < w_n <= 1.0:
        raise ValueError("need kappa_n >= 1 and w_n in (0, 1]")
    eps = float(np.sqrt(32.0 * kappa_n ** 2 * w_n * np.log(n) / n))
    exceed = 0
    block = max(1, int(2e6 // n))
    done = 0
    while done < trials:
        b = min(block, trials - done)
        u = rng.generator(seed, rng.TRIALS, done).random((b, n))
        s = ((u < p) - p) @ v * (kappa_n / n)
        exceed += int(np.count_nonzero(np.abs(s) > eps))
        done += b
    tail = exceed / trials
    arg = 4.0 * np.sqrt(2.0) * np.sqrt(np.log(n) / (n * w_n))
    bound = float(2.0 * np.exp(-16.0 * np.log(n) * bennett_B(arg)))
    return ConcentrationReport(eps, tail, bound, tail <= bound, trials)


@dataclass(frozen=True)
class EntropyReport:
    relative_entropy: float
    bennett_lhs: float
    bennett_rhs: float
    holds: bool


def entropy_bounds(p: float, q: float, x: float, v: float) -> EntropyReport:
    """Bernoulli relative entropy H(p|q) and the pointwise lower bound
    H((x+v)/(1+v) | v/(1+v)) >= x^2/(2v) B(x/v).

    Arguments outside the Bernoulli domain make the left side +inf (the rate
    function convention), so the inequality holds trivially there.
    """
    if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
        raise ValueError("p and q must lie in (0, 1)")
    if x <= 0.0 or v <= 0.0:
        raise ValueError("x and v must be positive")
    H = p * np.log(p / q) + (1.0 - p) * np.log((1.0 - p) / (1.0 - q))
    pp = (x + v) / (1.0 + v)
    qq = v / (1.0 + v)
    if pp >= 1.0:
        lhs = np.inf
    else:
        lhs = pp * np.log(pp / qq) + (1.0 - pp) * np.log((1.0 - pp) / (1.0 - qq))
    rhs = x ** 2 / (2.0 * v) * float(bennett_B(x / v))
    return EntropyReport(float(H), float(lhs), rhs, bool(lhs >= rhs - 1e-12))


def chernoff_bounds(lam: float, nu: float, a: float):
    """Lower/upper tail bounds for weighted Bernoulli sums:
    exp(-lam^2 / 2 nu) and exp(-lam^2 / (2 (nu + a lam / 3)))."""
    if lam < 0 or nu <= 0 or a < 0:
        raise ValueError("need lam >= 0, nu > 0, a >= 0")
    return (float(np.exp(-lam ** 2 / (2.0 * nu))),
            float(np.exp(-lam ** 2 / (2.0 * (nu + a * lam / 3.0)))))


def chernoff_check(a_weights, p, lam: float, trials: int,
                   seed: int = 0) -> dict:
    """Empirical two-sided tails of sum a_i X_i versus the analytic bounds."""
    a_weights = np.asarray(a_weights, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), a_weights.shape)
    nu = float((a_weights ** 2 * p).sum())
    amax = float(a_weights.max())
    lower_b, upper_b = chernoff_bounds(lam, nu, amax)
    mean = float((a_weights * p).sum())
    lo = hi = 0
    block = max(1, int(2e6 // len(a_weights)))
    done = 0
    while done < trials:
        b = min(block, trials - done)
        u = rng.generator(seed, rng.TRIALS, 1000 + done).random((b, len(a_weights)))
        s = (u < p) @ a_weights
        lo += int(np.count_nonzero(s - mean < -lam))
        hi += int(np.count_nonzero(s - mean > lam))
        done += b
    return {"lower_tail": lo / trials, "upper_tail": hi / trials,
            "lower_bound": lower_b, "upper_bound": upper_b,
            "passed": lo / trials <= lower_b and hi / trials <= upper_b}


# ---------------------------------------------------------------------------
# moment control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentCheckReport:
    two_k: int
    sup_moment: float        # sup_i of MC-mean sup_s |theta_{i,s}|^{2k}
    terminal_mean: float
    terminal_se: float


def moment_check(runs: Sequence[Trajectory], two_k: int) -> MomentCheckReport:
    sups = []
    terms = []
    for tr in runs:
        norms = np.linalg.norm(tr.states, axis=-1) ** two_k
        sups.append(norms.max(axis=0))
        terms.append(norms[-1])
    sup_moment = float(np.stack(sups).mean(axis=0).max())
    term = np.concatenate(terms)
    return MomentCheckReport(two_k, sup_moment, float(term.mean()),
                             float(term.std(ddof=1) / np.sqrt(term.size)))


def moment_growth(runs_coarse, runs_fine, two_k: int):
    """Relative growth of the sup moment when the step is halved.

    The finer run is compared on the coarse time points only, so the ratio
    sees integrator drift rather than the denser sampling of the path sup.
    """
    stride = int(round(runs_fine[0].h and runs_coarse[0].h / runs_fine[0].h))
    sups = []
    for tr in runs_fine:
        norms = np.linalg.norm(tr.states[::stride], axis=-1) ** two_k
        sups.append(norms.max(axis=0))
    b = float(np.stack(sups).mean(axis=0).max())
    a = moment_check(runs_coarse, two_k).sup_moment
    ratio = b / a if a > 0 else 1.0
    return ratio, bool(ratio > 1.10)


# ---------------------------------------------------------------------------
# report container
# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    """Named scalar results with provenance and bound flags."""

    entries: list = field(default_factory=list)

    def add(self, name: str, value: float, stderr=None, bound=None,
            passed=None, inequality=None, **provenance):
        value = float(value)
        if not np.isfinite(value):
            raise ValueError(f"diagnostic {name!r} is not finite")
        if passed is not None and inequality is None:
            raise ValueError("a pass/fail flag must reference its inequality")
        entry = {"name": name, "value": value}
        if stderr is not None:
            entry["stderr"] = float(stderr)
        if bound is not None:
            entry["bound"] = float(bound)
        if passed is not None:
            entry["passed"] = bool(passed)
            entry["inequality"] = inequality
        entry.update(provenance)
        self.entries.append(entry)
        return entry

    def failed(self) -> list:
        return [e for e in self.entries if e.get("passed") is False]

    def to_json(self) -> str:
        return json.dumps({"entries": self.entries}, indent=2, sort_keys=True)
