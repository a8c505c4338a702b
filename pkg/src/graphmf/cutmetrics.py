"""Graph-limit metrics: cut norm, infinity-to-one norm, L1 distance, and the
labeled cut distance between a renormalized graph and a kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import rng
from .graphs import RenormalizedGraph
from .kernels import Kernel
from .quadrature import cell_average_nodes

EXACT_LIMIT = 22
DEFAULT_RESTARTS = 64


@dataclass(frozen=True)
class StepKernel:
    """Piecewise-constant kernel on a product partition of [0, 1]."""

    values: np.ndarray        # (n, n)
    lengths: np.ndarray       # cell lengths, summing to 1

    def __post_init__(self):
        if abs(self.lengths.sum() - 1.0) > 1e-12:
            raise ValueError("cell lengths must sum to 1")
        if self.values.shape != (len(self.lengths), len(self.lengths)):
            raise ValueError("values must be square and match the partition")

    @property
    def n(self) -> int:
        return len(self.lengths)

    def evaluate(self, x, y) -> np.ndarray:
        edges = np.concatenate(([0.0], np.cumsum(self.lengths)))
        ix = np.clip(np.searchsorted(edges, np.asarray(x), side="right") - 1,
                     0, self.n - 1)
        iy = np.clip(np.searchsorted(edges, np.asarray(y), side="right") - 1,
                     0, self.n - 1)
        return self.values[ix, iy]


def uniform_step_kernel(values: np.ndarray) -> StepKernel:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    lengths = np.full(n, 1.0 / n)
    lengths[-1] = 1.0 - lengths[:-1].sum()
    return StepKernel(values, lengths)


def step_kernel_from_graph(gbar: RenormalizedGraph) -> StepKernel:
    return uniform_step_kernel(gbar.weights)


def average_kernel_cells(W: Kernel, n: int) -> StepKernel:
    """Per-cell averages of a kernel on the uniform n x n cell grid.

    Gauss nodes of unequal order in x and y, so diagonal-singular kernels are
    never evaluated at x == y; exact for step kernels aligned with the grid.
    """
    xn, wx, yn, wy = cell_average_nodes(n)
    vals = W(xn[:, None, :, None], yn[None, :, None, :])
    cells = np.einsum("ijab,a,b->ij", vals, wx, wy)
    return uniform_step_kernel(cells)


@dataclass(frozen=True)
class CutNormResult:
    value: float
    mode: str                 # "exact" | "heuristic"
    lower_bound: bool         # heuristic values only certify a lower bound

    def __float__(self):
        return self.value


def _scaled(A: StepKernel) -> np.ndarray:
    return A.values * np.outer(A.lengths, A.lengths)


def _subset_blocks(n: int, block_bits: int = 16):
    """Yield boolean (chunk, n) membership tables enumerating all subsets."""
    total = 1 << n
    chunk = 1 << min(block_bits, n)
    cols = np.arange(n, dtype=np.uint64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        yield (idx[:, None] >> cols[None, :]) & 1


def cut_norm(A: StepKernel, mode: str = "auto", restarts: int = DEFAULT_RESTARTS,
             seed: int = 0) -> CutNormResult:
    """Cut norm sup_{S,T} |sum_{S x T} l_i l_j A_ij|.

    Exact mode enumerates row subsets (optimal column set is the positive or
    negative part); allowed up to n = 22.  Heuristic mode alternates
    row/column optimization from random and deterministic restarts and
    certifies a lower bound.
    """
    M = _scaled(A)
    n = A.n
    if mode == "auto":
        mode = "exact" if n <= 12 else "heuristic"
    if mode == "exact":
        if n > EXACT_LIMIT:
            raise ValueError(f"exact cut norm limited to n <= {EXACT_LIMIT}")
        best = 0.0
        for B in _subset_blocks(n):
            C = B.astype(float) @ M
            vals = np.maximum(np.maximum(C, 0.0).sum(axis=1),
                              -np.minimum(C, 0.0).sum(axis=1))
            best = max(best, float(vals.max()))
        return CutNormResult(best, "exact", False)
    if mode != "heuristic":
        raise ValueError(f"unknown cut norm mode {mode!r}")
    return CutNormResult(_alternating_max(M, restarts, seed, bilinear=False),
                         "heuristic", True)


def _alternating_max(M: np.ndarray, restarts: int, seed: int,
                     bilinear: bool) -> float:
    """Alternating maximization over indicator pairs (cut norm) or sign
    vectors (infinity-to-one norm)."""
    n = M.shape[0]
    gen = rng.generator(seed, rng.RESTARTS, n)
    starts = [gen.random(n) < 0.5 for _ in range(restarts)]
    starts += [np.eye(n, dtype=bool)[i] for i in range(n)]
    starts += [np.ones(n, dtype=bool), np.zeros(n, dtype=bool)]
    best = 0.0
    for sign in (1.0, -1.0):
        Ms = sign * M
        for s0 in starts:
            if bilinear:
                f = np.where(s0, 1.0, -1.0)
                for _ in range(64):
                    g = np.sign(f @ Ms)
                    g[g == 0] = 1.0
                    f_new = np.sign(Ms @ g)
                    f_new[f_new == 0] = 1.0
                    if np.array_equal(f_new, f):
                        break
                    f = f_new
                best = max(best, float(f @ Ms @ g))
            else:
                s = s0.astype(float)
                for _ in range(64):
                    t = (s @ Ms > 0).astype(float)
                    s_new = (Ms @ t > 0).astype(float)
                    if np.array_equal(s_new, s):
                        break
                    s = s_new
                best = max(best, float(s @ Ms @ t))
    return best


def infty_one_norm(A: StepKernel, mode: str = "auto",
                   restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> CutNormResult:
    """sup over sign vectors f, g of |sum l_i l_j A_ij f_i g_j| (the sup over
    the [-1,1]-ball is attained at vertices by bilinearity)."""
    M = _scaled(A)
    n = A.n
    if mode == "auto":
        mode = "exact" if n <= 12 else "heuristic"
    if mode == "exact":
        if n > EXACT_LIMIT:
            raise ValueError(f"exact norm limited to n <= {EXACT_LIMIT}")
        best = 0.0
        for B in _subset_blocks(n):
            F = 2.0 * B.astype(float) - 1.0
            best = max(best, float(np.abs(F @ M).sum(axis=1).max()))
        return CutNormResult(best, "exact", False)
    if mode != "heuristic":
        raise ValueError(f"unknown mode {mode!r}")
    return CutNormResult(_alternating_max(M, restarts, seed, bilinear=True),
                         "heuristic", True)


def d1_distance(A: Union[Kernel, StepKernel], B: Union[Kernel, StepKernel],
                cells: int = 128) -> float:
    """L1 distance by cellwise quadrature of |A - B| on a uniform cell grid."""
    xn, wx, yn, wy = cell_average_nodes(cells)

    def ev(K, x, y):
        return K.evaluate(x, y) if isinstance(K, StepKernel) else K(x, y)

    X = np.broadcast_to(xn[:, None, :, None], (cells, cells, 4, 5))
    Y = np.broadcast_to(yn[None, :, None, :], (cells, cells, 4, 5))
    diff = np.abs(ev(A, X, Y) - ev(B, X, Y))
    cell_means = np.einsum("ijab,a,b->ij", diff, wx, wy)
    return float(cell_means.sum() / (cells * cells))


@dataclass(frozen=True)
class CutDistanceResult:
    value: float
    mode: str
    n: int

    def __float__(self):
        return self.value


def cut_distance_graph_kernel(gbar: RenormalizedGraph, W: Kernel,
                              mode: str = "auto",
                              restarts: int = DEFAULT_RESTARTS,
                              seed: int = 0) -> CutDistanceResult:
    """Labeled cut distance between the renormalized graph's step kernel and
    the cell-averaged target kernel on the same partition."""
    n = gbar.n
    avg = average_kernel_cells(W, n)
    diff = uniform_step_kernel(gbar.weights - avg.values)
    res = cut_norm(diff, mode=mode, restarts=restarts, seed=seed)
    return CutDistanceResult(res.value, res.mode, n)


@dataclass(frozen=True)
class AuxDecomposition:
    d_graph_h1: float
    d_h1_h2: float
    d_h2_kernel: float
    delta_n: float
    middle_within_delta: bool


def aux_graphs(mk, dil, W: Kernel, grid, gbar: RenormalizedGraph,
               mode: str = "auto", seed: int = 0) -> AuxDecomposition:
    """Three-step decomposition through the auxiliary weighted graphs: the
    expected renormalized graph (cells kappa_i W_n(x_i, x_j)) and the kernel
    sampled on the grid (cells W(x_i, x_j))."""
    from .kernels import renormalized_field
    n = gbar.n
    x = np.asarray(grid.positions, dtype=float)
    H1 = uniform_step_kernel(renormalized_field(mk, dil, grid))
    Wgrid = np.ascontiguousarray(W(x[:, None], x[None, :]), dtype=float)
    np.fill_diagonal(Wgrid, 0.0)
    H2 = uniform_step_kernel(Wgrid)
    avg = average_kernel_cells(W, n)
    d_g_h1 = cut_norm(uniform_step_kernel(gbar.weights - H1.values),
                      mode=mode, seed=seed).value
    d_h1_h2 = cut_norm(uniform_step_kernel(H1.values - H2.values),
                       mode=mode, seed=seed).value
    d_h2_w = cut_norm(uniform_step_kernel(H2.values - avg.values),
                      mode=mode, seed=seed).value
    delta = float(np.abs(H1.values - H2.values).sum(axis=1).max() / n)
    return AuxDecomposition(d_g_h1, d_h1_h2, d_h2_w, delta,
                            bool(d_h1_h2 <= delta + 1e-12))


def write_step_kernel(A: StepKernel, path) -> None:
    """CSV export: first row the cell lengths, then the dense value rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{v:.17g}" for v in A.lengths])
        for row in A.values:
            writer.writerow([f"{v:.17g}" for v in row])


def read_step_kernel(path) -> StepKernel:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return StepKernel(np.asarray(rows[1:], dtype=float),
                      np.asarray(rows[0], dtype=float))
