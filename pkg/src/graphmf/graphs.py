"""Bernoulli graph sampling and the renormalized directed weighted graph."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng
from .kernels import DilutionScheme, MicroKernel, PositionGrid, micro_prob


class RandomGraph:
    """Quenched realization of the interaction graph.

    Adjacency is stored as packed bitset rows (zero diagonal, symmetric).
    Each unordered pair {i, j}, i < j, is sampled once from a stream keyed by
    (seed, n), at the n-independent pair index j(j-1)/2 + i; every n is an
    independent quenched draw, and resampling with the same key is
    bit-identical.
    """

    def __init__(self, n: int, packed: np.ndarray, kappa: np.ndarray,
                 grid: PositionGrid, seed: int, rho_n: float,
                 kernel_name: str = ""):
        self.n = n
        self.packed = packed
        self.kappa = np.asarray(kappa, dtype=float)
        self.grid = grid
        self.seed = seed
        self.rho_n = rho_n
        self.kernel_name = kernel_name
        self._dense: Optional[np.ndarray] = None
        self._weights: Optional[np.ndarray] = None

    @classmethod
    def from_adjacency(cls, adj: np.ndarray, kappa=None, grid=None, seed=0,
                       rho_n=1.0) -> "RandomGraph":
        adj = np.asarray(adj, dtype=bool)
        n = adj.shape[0]
        if kappa is None:
            kappa = np.ones(n)
        packed = np.packbits(adj, axis=1)
        return cls(n, packed, kappa, grid, seed, rho_n)

    def adjacency(self) -> np.ndarray:
        """Dense boolean adjacency (cached)."""
        if self._dense is None:
            self._dense = np.unpackbits(self.packed, axis=1, count=self.n).astype(bool)
        return self._dense

    def weight_matrix(self) -> np.ndarray:
        """kappa_i * xi_ij as a dense float table (cached; drift input)."""
        if self._weights is None:
            self._weights = self.kappa[:, None] * self.adjacency()
        return self._weights

    def degrees(self) -> np.ndarray:
        return self.adjacency().sum(axis=1)

    def edge_count(self) -> int:
        return int(self.degrees().sum()) // 2


def sample_graph(mk: MicroKernel, dil, grid: PositionGrid, seed: int) -> RandomGraph:
    """Draw the Bernoulli connectivity for one grid under one seed."""
    n = grid.n
    x = grid.positions
    kappa = dil.kappa if isinstance(dil, DilutionScheme) else np.asarray(dil, float)
    iu, ju = np.triu_indices(n, k=1)
    if n > 1:
        probs = micro_prob(mk, x[iu], x[ju])
        count = n * (n - 1) // 2
        u = rng.uniforms(seed, rng.EDGES, n, count=count)
        pair_index = ju * (ju - 1) // 2 + iu
        edges = u[pair_index] < probs
    else:
        edges = np.zeros(0, dtype=bool)
    adj = np.zeros((n, n), dtype=bool)
    adj[iu, ju] = edges
    adj |= adj.T
    packed = np.packbits(adj, axis=1)
    return RandomGraph(n, packed, kappa, grid, int(seed), mk.rho_n,
                       kernel_name=mk.generator.name)


def b_n(g: RandomGraph) -> float:
    """Largest renormalized row mass sup_i (kappa_i / n) sum_k xi_ik."""
    return float((g.kappa * g.degrees()).max() / g.n)


@dataclass(frozen=True)
class RenormalizedGraph:
    """Directed weighted companion graph: edge i->j carries weight kappa_i
    whenever the undirected edge {i, j} is present; node weights 1/n."""

    n: int
    weights: np.ndarray        # (n, n), entry (i, j) = kappa_i * xi_ij
    node_weights: np.ndarray

    def __post_init__(self):
        pos = self.weights > 0
        if not np.array_equal(pos, pos.T):
            raise ValueError("directed edges must come in pairs")


def renormalize(g: RandomGraph) -> RenormalizedGraph:
    return RenormalizedGraph(g.n, g.weight_matrix(),
                             np.full(g.n, 1.0 / g.n))


@dataclass(frozen=True)
class DegreeStats:
    minimum: int
    maximum: int
    mean: float
    renormalized_row_means: np.ndarray   # kappa_i * deg_i / n


def degree_stats(g: RandomGraph) -> DegreeStats:
    deg = g.degrees()
    return DegreeStats(int(deg.min()), int(deg.max()), float(deg.mean()),
                       g.kappa * deg / g.n)


def export_edges(g: RandomGraph, path) -> None:
    """Edge-list export: one '<i> <j>' line per undirected edge, 0-based."""
    iu, ju = np.nonzero(np.triu(g.adjacency(), k=1))
    with open(path, "w") as fh:
        fh.write(f"# n={g.n} seed={g.seed} kernel={g.kernel_name}\n")
        for i, j in zip(iu, ju):
            fh.write(f"{i} {j}\n")
