import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import graphmf as g
import graphmf.cutmetrics as cm


def exhaustive_cut_norm(values, lengths=None):
    """Literal definition: scan every (S, T) pair of index subsets."""
    n = values.shape[0]
    lengths = np.full(n, 1.0 / n) if lengths is None else lengths
    M = values * np.outer(lengths, lengths)
    best = 0.0
    idx = list(range(n))
    for r in range(n + 1):
        for S in itertools.combinations(idx, r):
            row = M[list(S)].sum(axis=0)
            for q in range(n + 1):
                for T in itertools.combinations(idx, q):
                    best = max(best, abs(row[list(T)].sum()))
    return best


def test_cut_norm_trivial_cases():
    zero = cm.uniform_step_kernel(np.zeros((5, 5)))
    assert cm.cut_norm(zero, mode="exact").value == 0.0
    ones = cm.uniform_step_kernel(np.ones((6, 6)))
    assert cm.cut_norm(ones, mode="exact").value == pytest.approx(1.0, abs=1e-12)


def test_cut_norm_two_by_two():
    A = cm.uniform_step_kernel(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert cm.cut_norm(A, mode="exact").value == pytest.approx(0.25)


def test_cut_norm_matches_exhaustive_definition():
    gen = np.random.default_rng(3)
    for _ in range(15):
        vals = gen.normal(size=(6, 6))
        A = cm.uniform_step_kernel(vals)
        assert cm.cut_norm(A, mode="exact").value == \
            pytest.approx(exhaustive_cut_norm(vals), abs=1e-12)


def test_cut_norm_heuristic_matches_exact():
    gen = np.random.default_rng(7)
    for t in range(25):
        A = cm.uniform_step_kernel(gen.normal(size=(10, 10)))
        e = cm.cut_norm(A, mode="exact").value
        h = cm.cut_norm(A, mode="heuristic", seed=t)
        assert h.lower_bound
        assert h.value == pytest.approx(e, abs=1e-12)


def test_cut_norm_rejects_oversized_exact():
    with pytest.raises(ValueError):
        cm.cut_norm(cm.uniform_step_kernel(np.zeros((23, 23))), mode="exact")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_cut_norm_seminorm_properties(seed):
    gen = np.random.default_rng(seed)
    A = gen.normal(size=(7, 7))
    B = gen.normal(size=(7, 7))
    c = float(gen.uniform(0.1, 3.0))
    nA = cm.cut_norm(cm.uniform_step_kernel(A), mode="exact").value
    nB = cm.cut_norm(cm.uniform_step_kernel(B), mode="exact").value
    nAB = cm.cut_norm(cm.uniform_step_kernel(A + B), mode="exact").value
    ncA = cm.cut_norm(cm.uniform_step_kernel(c * A), mode="exact").value
    assert nAB <= nA + nB + 1e-12
    assert ncA == pytest.approx(c * nA, rel=1e-10)


def test_infty_one_norm_examples_and_sandwich():
    zero = cm.uniform_step_kernel(np.zeros((4, 4)))
    assert cm.infty_one_norm(zero, mode="exact").value == 0.0
    A = cm.uniform_step_kernel(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    assert cm.infty_one_norm(A, mode="exact").value == pytest.approx(1.0)
    gen = np.random.default_rng(11)
    for _ in range(20):
        S = cm.uniform_step_kernel(gen.normal(size=(8, 8)))
        c = cm.cut_norm(S, mode="exact").value
        i = cm.infty_one_norm(S, mode="exact").value
        assert c <= i + 1e-12 <= 4.0 * c + 1e-9


def test_infty_one_heuristic_lower_bound():
    gen = np.random.default_rng(2)
    for t in range(10):
        S = cm.uniform_step_kernel(gen.normal(size=(9, 9)))
        e = cm.infty_one_norm(S, mode="exact").value
        h = cm.infty_one_norm(S, mode="heuristic", seed=t).value
        assert h <= e + 1e-12
        assert h >= 0.8 * e - 1e-12


def test_d1_distance():
    one = g.builtin_kernel("er", p=1.0)
    zero = g.builtin_kernel("er", p=0.0)
    assert cm.d1_distance(one, one, cells=16) == 0.0
    assert cm.d1_distance(one, zero, cells=16) == pytest.approx(1.0, abs=1e-12)


def test_d1_distance_grid_sampling_decays():
    W = g.builtin_kernel("one-minus-xy")
    vals = []
    for n in (8, 16, 32):
        sampled = cm.average_kernel_cells(W, n)

        class Stepped:
            def __init__(self, sk):
                self.sk = sk

            def __call__(self, x, y):
                return self.sk.evaluate(x, y)

        x = np.arange(1, n + 1) / n
        grid_vals = W(x[:, None], x[None, :])
        step = cm.uniform_step_kernel(grid_vals)
        vals.append(cm.d1_distance(Stepped(step), W, cells=64))
    assert vals[0] > vals[1] > vals[2]


def _er_renormalized(n, p, rho, seed, kappa=None):
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=p), rho)
    dil = g.dilution("uniform", mk, grid)
    gr = g.sample_graph(mk, dil, grid, seed)
    return g.renormalize(gr), mk, dil, grid, gr


def test_cut_distance_trivial_and_complete():
    gbar, *_ = _er_renormalized(6, 0.0, 1.0, 0)
    zero = g.builtin_kernel("er", p=0.0)
    assert cm.cut_distance_graph_kernel(gbar, zero, mode="exact").value == 0.0
    for n in (4, 8, 12):
        gbar, *_ = _er_renormalized(n, 1.0, 1.0, 0)
        one = g.builtin_kernel("er", p=1.0)
        res = cm.cut_distance_graph_kernel(gbar, one, mode="exact")
        assert res.value == pytest.approx(1.0 / n, abs=1e-13)


def test_cut_distance_self_is_zero():
    gbar, *_ = _er_renormalized(8, 0.5, 1.0, 3)
    sk = cm.step_kernel_from_graph(gbar)
    as_kernel = g.Kernel("step", lambda x, y: sk.evaluate(x, y))
    assert cm.cut_distance_graph_kernel(gbar, as_kernel, mode="exact").value \
        == pytest.approx(0.0, abs=1e-12)


def test_cut_distance_er_trend():
    one = g.builtin_kernel("er", p=1.0)
    meds = []
    for n in (16, 64):
        vals = []
        for seed in range(6):
            gbar, *_ = _er_renormalized(n, 1.0, 0.5, seed)   # kappa = 2, p = 1/2
            vals.append(cm.cut_distance_graph_kernel(gbar, one,
                                                     mode="heuristic",
                                                     seed=seed).value)
        meds.append(np.median(vals))
    assert meds[1] < meds[0]


def test_aux_graphs_decomposition():
    # clamp never binds: the expected renormalized graph equals the kernel
    gbar, mk, dil, grid, gr = _er_renormalized(8, 1.0, 1.0, 0)
    W = g.builtin_kernel("er", p=1.0)
    rep = cm.aux_graphs(mk, dil, W, grid, gbar, mode="exact")
    assert rep.d_h1_h2 == 0.0
    assert rep.d_graph_h1 == 0.0        # degenerate probabilities: xi == W_n
    assert rep.middle_within_delta

    P = g.builtin_kernel("power-xy", alpha=0.3)
    Wm = g.builtin_kernel("power-y", alpha=0.3)
    n = 8
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(P, float(n) ** -0.45)
    dil = g.dilution("degree-normalized", mk, grid)
    gr = g.sample_graph(mk, dil, grid, 1)
    rep = cm.aux_graphs(mk, dil, Wm, grid, g.renormalize(gr), mode="exact")
    assert rep.middle_within_delta
    assert rep.d_h1_h2 > 0.0
    assert rep.delta_n == pytest.approx(g.delta_n(Wm, mk, dil, grid), rel=1e-12)


def test_step_kernel_csv_round_trip(tmp_path):
    gen = np.random.default_rng(0)
    A = cm.uniform_step_kernel(gen.normal(size=(5, 5)))
    path = tmp_path / "step.csv"
    cm.write_step_kernel(A, path)
    B = cm.read_step_kernel(path)
    assert np.array_equal(A.values, B.values)
    assert np.array_equal(A.lengths, B.lengths)


def test_step_kernel_validation():
    with pytest.raises(ValueError):
        cm.StepKernel(np.zeros((3, 3)), np.array([0.5, 0.2, 0.2]))
