import numpy as np
import pytest

import graphmf as g
from graphmf.diagnostics import bennett_B


def _er_graph(n, p, rho, seed, kappa_kind="uniform"):
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=p), rho)
    dil = g.dilution(kappa_kind, mk, grid)
    return g.sample_graph(mk, dil, grid, seed), mk, dil, grid


def test_complete_and_empty_graphs():
    gr, *_ = _er_graph(20, 1.0, 1.0, seed=0)
    adj = gr.adjacency()
    assert adj.sum() == 20 * 19
    assert not adj.diagonal().any()
    gr0, *_ = _er_graph(20, 0.0, 1.0, seed=0)
    assert gr0.adjacency().sum() == 0


def test_resampling_is_bit_identical():
    a, *_ = _er_graph(64, 0.5, 1.0, seed=11)
    b, *_ = _er_graph(64, 0.5, 1.0, seed=11)
    c, *_ = _er_graph(64, 0.5, 1.0, seed=12)
    assert np.array_equal(a.packed, b.packed)
    assert not np.array_equal(a.packed, c.packed)


def test_mean_degree_binomial():
    n, p, seeds = 200, 0.5, 50
    means = [_er_graph(n, p, 1.0, seed=s)[0].degrees().mean()
             for s in range(seeds)]
    sd_single = np.sqrt((n - 1) * p * (1 - p))
    assert all(abs(m - (n - 1) * p) < 3 * sd_single for m in means)
    # each graph mean concentrates much harder than a single degree
    se_mean = np.sqrt(2 * (n - 1) * p * (1 - p) / n / seeds)
    assert abs(np.mean(means) - (n - 1) * p) < 4 * se_mean


def test_edge_count_binomial_moments():
    n, p, seeds = 80, 0.3, 60
    counts = np.array([_er_graph(n, p, 1.0, seed=s)[0].edge_count()
                       for s in range(seeds)])
    pairs = n * (n - 1) / 2
    se = np.sqrt(pairs * p * (1 - p) / seeds)
    assert abs(counts.mean() - pairs * p) < 4 * se


def test_b_n_complete_and_empty():
    gr, *_ = _er_graph(10, 1.0, 1.0, seed=0)
    assert g.b_n(gr) == pytest.approx(9 / 10)
    gr0, *_ = _er_graph(10, 0.0, 1.0, seed=0)
    assert g.b_n(gr0) == 0.0


def test_b_n_diluted_concentrates_near_one():
    n = 500
    gr, *_ = _er_graph(n, 0.5, 0.5, seed=4)   # kappa = 2, mean kappa*deg/n ~ 1
    assert abs(g.b_n(gr) - 1.0) < 5 * np.sqrt(np.log(n) / n)


def test_renormalize_directed_weights():
    adj = np.array([[False, True], [True, False]])
    gr = g.RandomGraph.from_adjacency(adj, kappa=[2.0, 3.0])
    gbar = g.renormalize(gr)
    assert gbar.weights[0, 1] == 2.0
    assert gbar.weights[1, 0] == 3.0
    assert np.array_equal(gbar.node_weights, [0.5, 0.5])


def test_renormalize_empty_graph():
    gr = g.RandomGraph.from_adjacency(np.zeros((3, 3), dtype=bool))
    assert g.renormalize(gr).weights.sum() == 0.0


def test_degree_stats_star_graph():
    n = 7
    adj = np.zeros((n, n), dtype=bool)
    adj[0, 1:] = True
    adj[1:, 0] = True
    st = g.degree_stats(g.RandomGraph.from_adjacency(adj))
    assert st.maximum == n - 1
    assert st.minimum == 1
    st5 = g.degree_stats(_er_graph(5, 1.0, 1.0, seed=0)[0])
    assert st5.minimum == st5.maximum == 4


def test_export_edges(tmp_path):
    gr, *_ = _er_graph(6, 1.0, 1.0, seed=0)
    path = tmp_path / "edges.txt"
    g.export_edges(gr, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("# n=6 seed=0 kernel=er")
    assert len(lines) - 1 == 15


def test_row_mass_inequality_holds_quenched():
    # renormalized empirical row mass vs its mean plus the canonical threshold
    n, p, rho = 50, 1.0, 0.4
    eps = np.sqrt(32 * (1 / rho) ** 2 * rho * np.log(n) / n)
    fails = 0
    for seed in range(50):
        gr, mk, dil, grid = _er_graph(n, p, rho, seed=seed)
        lhs = (gr.kappa * gr.degrees() / n).max()
        W_n = g.micro_prob(mk, grid.positions[:, None], grid.positions[None, :])
        np.fill_diagonal(W_n, 0.0)
        rhs = eps + (gr.kappa * W_n.sum(axis=1) / n).max()
        fails += lhs > rhs
    assert fails == 0


def test_bennett_function_limit():
    assert float(bennett_B(1e-6)) == pytest.approx(0.5, abs=1e-6)
    assert float(bennett_B(0.0)) == pytest.approx(0.5)
