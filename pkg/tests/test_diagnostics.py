import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import graphmf as g
import graphmf.diagnostics as dg
from graphmf.particles import NoiseBath


def brute_force_w1(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return min(np.abs(a - b[list(p)]).mean()
               for p in itertools.permutations(range(len(b))))


def test_w1_examples():
    assert dg.w1_1d([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert dg.w1_1d([1.0, 2.0, 5.0], [3.0, 4.0, 7.0]) == pytest.approx(2.0)
    assert dg.w1_1d([0.0, 1.0], [0.0, 0.0]) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=6),
       st.integers(0, 10_000))
def test_w1_matches_assignment_oracle(a, seed):
    b = np.random.default_rng(seed).uniform(-50, 50, size=len(a)).tolist()
    assert dg.w1_1d(a, b) == pytest.approx(brute_force_w1(a, b), abs=1e-12)


def test_w1_unequal_sizes_quantile_integral():
    # quantile-function coupling: {0,1} vs {0,0,1,1} are equal in law
    assert dg.w1_1d([0.0, 1.0], [0.0, 0.0, 1.0, 1.0]) == pytest.approx(0.0)


def test_w1_point_cloud_exact_and_sliced():
    gen = np.random.default_rng(0)
    a = gen.normal(size=(30, 2))
    val, method = dg.w1_point_cloud(a, a + np.array([0.5, 0.0]))
    assert method == "exact-assignment"
    assert val == pytest.approx(0.5, abs=1e-9)
    big = gen.normal(size=(300, 2))
    val2, method2 = dg.w1_point_cloud(big, big + np.array([0.5, 0.0]))
    assert method2 == "sliced"
    assert 0.0 < val2 < 0.5 + 1e-9   # sliced projections shrink a translation


def _coupled_runs(n, model, init, T, h, seed, replicas, W=None, p=1.0, Q=4, M=50):
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=p), 1.0)
    dil = g.dilution("uniform", mk, grid)
    gr = g.sample_graph(mk, dil, grid, seed)
    W = W or g.builtin_kernel("er", p=p)
    mf = g.picard_solve(model, W, g.uniform_quadrature(Q), M, init, T, h,
                        seed=seed)
    bath = NoiseBath(seed, h)
    systems = [g.simulate_graph_system(gr, model, init, T, h, bath, replica=r)
               for r in range(replicas)]
    copies = [g.simulate_coupled_copies(mf, W, grid, model, init, T, h, bath,
                                        replica=r) for r in range(replicas)]
    return gr, mk, mf, systems, copies


def test_propagation_error_zero_cases():
    m0 = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0, sigma=0.5)
    init = g.initial_law("gaussian", mu=0.0, std=1.0)
    gr, mk, mf, systems, copies = _coupled_runs(8, m0, init, 0.3, 0.01, 2, 3)
    rep = dg.propagation_error(systems, copies)
    assert rep.max_error == 0.0
    same = dg.propagation_error(systems, systems)
    assert same.max_error == 0.0


def test_propagation_error_requires_coupling():
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("uniform-circle")
    _, _, _, systems, copies = _coupled_runs(6, m, init, 0.1, 0.01, 1, 2)
    with pytest.raises(ValueError):
        dg.propagation_error(systems, [])
    grid = g.make_positions("deterministic", 6)
    mk = g.MicroKernel(g.builtin_kernel("er", p=1.0), 1.0)
    gr = g.sample_graph(mk, g.dilution("uniform", mk, grid), grid, 1)
    mismatched = [g.simulate_graph_system(gr, m, init, 0.1, 0.01,
                                          NoiseBath(1, 0.01), replica=5)]
    with pytest.raises(ValueError):
        dg.propagation_error([systems[0]], mismatched)


def test_propagation_error_invariant_under_relabeling():
    m = g.builtin_model("kuramoto", sigma=0.3)
    init = g.initial_law("uniform-circle")
    _, _, _, systems, copies = _coupled_runs(10, m, init, 0.2, 0.01, 4, 3)
    rep = dg.propagation_error(systems, copies)
    perm = np.random.default_rng(0).permutation(10)
    for tr in systems + copies:
        tr.states = tr.states[:, perm, :]
    rep2 = dg.propagation_error(systems, copies)
    assert rep2.max_error == pytest.approx(rep.max_error, rel=1e-12)


def test_empirical_measure_error_probability_mass():
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("uniform-circle")
    _, _, mf, systems, _ = _coupled_runs(12, m, init, 0.1, 0.01, 3, 2)
    out = dg.empirical_measure_error(systems, mf,
                                     lambda theta, x: np.ones(theta.shape[:-1]))
    assert out["value"] == 0.0


def test_empirical_measure_error_static_point_mass():
    m = g.builtin_model("linear", drift_lin=0.0, coupling=0.0, sigma=0.0)
    init = g.initial_law("point", profile="linear",
                         profile_params={"a": 0.0, "b": 1.0})
    n = 8
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=1.0), 1.0)
    gr = g.sample_graph(mk, g.dilution("uniform", mk, grid), grid, 0)
    mf = g.picard_solve(m, g.builtin_kernel("er", p=1.0),
                        g.uniform_quadrature(n), 1, init, 0.1, 0.01)
    runs = [g.simulate_graph_system(gr, m, init, 0.1, 0.01, NoiseBath(0, 0.01))]
    out = dg.empirical_measure_error(runs, mf, lambda theta, x: theta[..., 0])
    assert out["value"] == pytest.approx(0.0, abs=1e-28)


def test_empirical_measure_error_shrinks_with_n():
    m = g.builtin_model("kuramoto", sigma=0.3)
    init = g.initial_law("uniform-circle")
    vals = []
    for n in (16, 128):
        _, _, mf, systems, _ = _coupled_runs(n, m, init, 0.2, 0.02, 5, 8,
                                             Q=8, M=400)
        out = dg.empirical_measure_error(
            systems, mf, lambda theta, x: np.sin(theta[..., 0]))
        vals.append(out["value"])
    assert vals[1] < vals[0]


def test_profile_error_exact_cases():
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0)
    quad = g.uniform_quadrature(8)
    pf = g.heat_solve(m, g.builtin_kernel("er", p=1.0), quad,
                      lambda x: np.asarray(x)[:, None], 0.2, 0.02)
    tr = g.Trajectory(8, 1, 0.02, pf.times, pf.values.copy(), 0, 0, 0, m,
                      g.make_positions("deterministic", 8), "graph")
    assert dg.profile_error(tr, pf, 2) == 0.0
    pf.values += 0.37
    assert dg.profile_error(tr, pf, 2) == pytest.approx(0.37, rel=1e-12)


def test_profile_error_cross_solver():
    # deterministic linear dynamics: particle system on the complete kernel
    # matches the profile up to the Euler/RK4 gap
    n = 64
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=-0.5, sigma=0.0)
    init = g.initial_law("point", profile="sine", profile_params={"a": 0.5, "b": 1.0})
    grid = g.make_positions("deterministic", n)
    W = g.builtin_kernel("er", p=1.0)
    tr = g.simulate_w_system(W, grid, m, init, 1.0, 1e-3, NoiseBath(0, 1e-3))
    pf = g.heat_solve(m, W, g.uniform_quadrature(n), init.mean, 1.0, 1e-3)
    assert dg.profile_error(tr, pf, 2) < 1e-2


def test_identification_residual_zero_dictionary():
    m = g.builtin_model("kuramoto", sigma=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 1.0})
    quad = g.uniform_quadrature(8)
    W = g.builtin_kernel("er", p=1.0)
    mf = g.picard_solve(m, W, quad, 1, init, 0.1, 0.01)
    pf = g.heat_solve(m, W, quad, init.mean, 0.1, 0.01)
    zero = [("zero", lambda x: np.zeros_like(x))]
    assert dg.identification_residual(pf, mf, zero)["residual"] == 0.0
    full = dg.identification_residual(pf, mf)
    assert full["residual"] < 1e-10


def test_identification_residual_linear_with_noise():
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=-0.5, sigma=0.3)
    init = g.initial_law("gaussian", mu=1.0, std=0.2)
    quad = g.uniform_quadrature(16)
    W = g.builtin_kernel("one-minus-xy")
    M = 2000
    mf = g.picard_solve(m, W, quad, M, init, 0.5, 0.01, seed=8)
    pf = g.heat_solve(m, W, quad, init.mean, 0.5, 0.01)
    res = dg.identification_residual(pf, mf)["residual"]
    sd = mf.ensembles[-1, :, :, 0].std(axis=1)
    w = quad.quadrature_weights
    se = np.sqrt(((w * sd) ** 2).sum() / M)
    assert res <= 4 * se


def test_gamma_avg_and_upsilon_zero_coupling():
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0, sigma=0.2)
    init = g.initial_law("gaussian", mu=0.0, std=1.0)
    mf = g.picard_solve(m, g.builtin_kernel("er", p=1.0),
                        g.uniform_quadrature(4), 30, init, 0.2, 0.02)
    assert np.allclose(dg.gamma_avg(mf, np.array([1.0]), 2, 3), 0.0)
    assert dg.upsilon(mf, 0, 1, 2, 0.2) == 0.0


def test_upsilon_gaussian_closed_form():
    # stationary gaussian node laws, difference coupling with unit matrix:
    # E (theta - m_y)(theta - m_z) = (m_x - m_y)(m_x - m_z) + s^2
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=1.0, sigma=0.0)
    Q, M, S = 4, 4000, 5
    gen = np.random.default_rng(0)
    mus = np.array([0.0, 0.5, 1.0, 1.5])
    s = 0.3
    ens0 = mus[:, None, None] + s * gen.standard_normal((Q, M, 1))
    ens = np.broadcast_to(ens0, (S + 1, Q, M, 1)).copy()
    quad = g.uniform_quadrature(Q)
    mf = g.MeanFieldSolution(m, quad, M, 0.1, np.arange(S + 1) * 0.1, ens,
                             1, 0.0, True, [])
    T = 0.5
    got = dg.upsilon(mf, 0, 1, 2, T)
    mhat = ens0[:, :, 0].mean(axis=1)
    var0 = ens0[0, :, 0].var()
    expect = T * ((mhat[0] - mhat[1]) * (mhat[0] - mhat[2]) + var0)
    assert got == pytest.approx(expect, rel=1e-2, abs=5e-3)
    assert abs(got) <= dg.upsilon_bound(mf, m, T)


def test_epsilon_terms_exact_zero_on_shared_quadrature():
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("uniform-circle")
    W = g.builtin_kernel("one-minus-xy")
    mf = g.picard_solve(m, W, g.uniform_quadrature(8), 40, init, 0.2, 0.02)
    rep = dg.epsilon_terms(mf, W, g.make_positions("deterministic", 8), 0.2)
    assert rep.as_tuple() == (0.0, 0.0, 0.0)


def test_epsilon_terms_cancel_for_flat_kernel_constant_upsilon():
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0, sigma=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 1.0})
    W = g.builtin_kernel("er", p=1.0)
    mf = g.picard_solve(m, W, g.uniform_quadrature(6), 1, init, 0.1, 0.01)
    rep = dg.epsilon_terms(mf, W, g.make_positions("deterministic", 6), 0.1)
    assert rep.as_tuple() == (0.0, 0.0, 0.0)


def test_epsilon_terms_match_direct_double_sums():
    m = g.builtin_model("kuramoto", sigma=0.3)
    init = g.initial_law("uniform-circle")
    W = g.builtin_kernel("one-minus-xy")
    quad = g.uniform_quadrature(8)
    mf = g.picard_solve(m, W, quad, 50, init, 0.2, 0.02, seed=2)
    grid = g.make_positions("deterministic", 6)
    rep = dg.epsilon_terms(mf, W, grid, 0.2)
    U = dg.upsilon_tensor(mf, 0.2)
    xq, wq = np.asarray(quad.positions), quad.quadrature_weights
    xg, wg = np.asarray(grid.positions), grid.quadrature_weights
    nn = dg.nearest_nodes(xg, quad)
    e = [0.0, 0.0, 0.0]
    for i in range(6):
        xi, ni = xg[i], nn[i]
        Dnn = sum(wg[a] * wg[b] * W(xi, xg[a]) * W(xi, xg[b]) * U[ni, nn[a], nn[b]]
                  for a in range(6) for b in range(6))
        Dll = sum(wq[q] * wq[r] * W(xi, xq[q]) * W(xi, xq[r]) * U[ni, q, r]
                  for q in range(8) for r in range(8))
        Dnl = sum(wg[a] * wq[r] * W(xi, xg[a]) * W(xi, xq[r]) * U[ni, nn[a], r]
                  for a in range(6) for r in range(8))
        Dln = sum(wq[q] * wg[b] * W(xi, xq[q]) * W(xi, xg[b]) * U[ni, q, nn[b]]
                  for q in range(8) for b in range(6))
        e[0] = max(e[0], abs(Dnn - Dll))
        e[1] = max(e[1], abs(Dnl - Dll))
        e[2] = max(e[2], abs(Dln - Dll))
    assert np.allclose(rep.as_tuple(), e, atol=1e-12)


def test_d_nt_estimate_zero_cases():
    # degenerate edge probabilities: the graph equals its expectation
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("uniform-circle")
    gr, mk, mf, systems, copies = _coupled_runs(8, m, init, 0.2, 0.02, 1, 2)
    assert dg.d_nt_estimate(gr, mk, mf, copies, 0.2) == 0.0  # p = 1 exactly
    m0 = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0, sigma=0.2)
    init0 = g.initial_law("gaussian", mu=0.0, std=1.0)
    gr0, mk0, mf0, _, cop0 = _coupled_runs(8, m0, init0, 0.2, 0.02, 1, 2, p=0.5)
    assert dg.d_nt_estimate(gr0, mk0, mf0, cop0, 0.2) == 0.0  # Gamma = 0


def test_d_nt_estimate_decreases_with_n():
    # concentrated phases keep the mean interaction field order one, so the
    # edge-noise functional shows its 1/n decay instead of ensemble noise
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("gaussian", mu=1.0, std=0.3)
    vals = []
    for n in (64, 128, 256):
        gr, mk, mf, _, copies = _coupled_runs(n, m, init, 0.2, 0.02, 6, 8,
                                              p=0.5, Q=4, M=400)
        vals.append(dg.d_nt_estimate(gr, mk, mf, copies, 0.2))
    assert vals[2] < vals[1] < vals[0]


def test_d_holder_deterministic_grid_bound():
    for n in (20, 100):
        grid = g.make_positions("deterministic", n)
        v = dg.d_holder(grid, 1.0)
        assert 0.0 < v <= 1.0 / (2 * n) + 1e-15


def test_d_holder_identical_measures():
    grid = g.make_positions("deterministic", 16)
    assert dg.d_holder(grid, 1.0, reference=grid) == 0.0


def test_d_holder_separated_point_masses():
    c = 0.02
    a = g.kernels.grid_from_nodes(np.array([0.5]))
    b = g.kernels.grid_from_nodes(np.array([0.5 + c]))
    assert dg.d_holder(a, 1.0, reference=b) >= c / 2


def test_concentration_check_arithmetic_and_bound():
    rep = dg.concentration_check(10.0, 0.1, 1000, 0.1, 1.0, trials=200)
    assert rep.epsilon_n == pytest.approx(
        np.sqrt(32 * 100 * 0.1 * np.log(1000) / 1000), abs=1e-12)
    assert rep.passed


def test_concentration_check_many_meta_seeds():
    passes = sum(dg.concentration_check(5.0, 0.2, 500, 0.2, 1.0, trials=2000,
                                        seed=s).passed for s in range(50))
    assert passes >= 49


def test_concentration_check_validates_inputs():
    with pytest.raises(ValueError):
        dg.concentration_check(5.0, 0.2, 100, 0.5, 1.0, trials=10)   # p > w
    with pytest.raises(ValueError):
        dg.concentration_check(5.0, 0.2, 100, 0.1, 2.0, trials=10)   # |v| > 1


def test_entropy_bounds():
    rep = dg.entropy_bounds(0.5, 0.25, 1.0, 1.0)
    assert rep.relative_entropy == pytest.approx(
        0.5 * np.log(2) + 0.5 * np.log(2 / 3), abs=1e-12)
    assert dg.entropy_bounds(0.3, 0.3, 0.5, 0.5).relative_entropy == \
        pytest.approx(0.0, abs=1e-15)
    for x in np.linspace(0.05, 5.0, 10):
        for v in np.linspace(0.05, 5.0, 10):
            assert dg.entropy_bounds(0.5, 0.25, float(x), float(v)).holds
    with pytest.raises(ValueError):
        dg.entropy_bounds(1.5, 0.5, 1.0, 1.0)


def test_chernoff_bounds_and_check():
    lo, hi = dg.chernoff_bounds(2.0, 1.0, 0.5)
    assert lo == pytest.approx(np.exp(-2.0))
    assert hi == pytest.approx(np.exp(-4.0 / (2 * (1 + 0.5 * 2 / 3))))
    out = dg.chernoff_check(np.ones(128), 0.3, 10.0, trials=4000)
    assert out["passed"]


def test_moment_check_static():
    m = g.builtin_model("linear", drift_lin=0.0, coupling=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 2.0})
    grid = g.make_positions("deterministic", 4)
    mk = g.MicroKernel(g.builtin_kernel("er", p=0.0), 1.0)
    gr = g.sample_graph(mk, g.dilution("uniform", mk, grid), grid, 0)
    runs = [g.simulate_graph_system(gr, m, init, 0.1, 0.01, NoiseBath(0, 0.01))]
    rep = dg.moment_check(runs, 4)
    assert rep.sup_moment == pytest.approx(16.0)
    assert rep.terminal_mean == pytest.approx(16.0)


def test_diagnostics_report_flags():
    rep = dg.DiagnosticsReport()
    rep.add("a", 1.0, n=10)
    rep.add("b", 2.0, bound=1.0, passed=False, inequality="b <= 1")
    assert len(rep.failed()) == 1
    with pytest.raises(ValueError):
        rep.add("c", np.inf)
    with pytest.raises(ValueError):
        rep.add("d", 1.0, passed=True)   # flag without its inequality
    assert "entries" in rep.to_json()


def test_identification_pairings_converge_under_joint_refinement():
    # deterministic point-mass setting: the dictionary pairings of the law
    # flow converge as (h, Q, M) refine toward the finest level
    model = g.builtin_model("kuramoto", omega=1.0, sigma=0.0)
    W = g.builtin_kernel("one-minus-max")
    init = g.initial_law("point", profile="sine",
                         profile_params={"a": 1.0, "b": 0.8})
    T, h0, Q0 = 0.5, 0.05, 8
    dictionary = dg.trig_dictionary(2)
    times = np.linspace(0.0, T, 6)

    def pairings(level):
        h, Q, M = h0 / 2 ** level, Q0 * 2 ** level, 4 ** level
        quad = g.uniform_quadrature(Q)
        mf = g.picard_solve(model, W, quad, M, init, T, h, tol=1e-12,
                            max_iter=40)
        w = quad.quadrature_weights
        x = np.asarray(quad.positions)
        means = mf.node_means()
        out = []
        for _, J in dictionary:
            Jw = J(x) * w
            for t in times:
                out.append(float(Jw @ means[int(round(t / h)), :, 0]))
        return np.array(out)

    p0, p1, p2 = pairings(0), pairings(1), pairings(2)
    e0 = np.abs(p0 - p2).max()
    e1 = np.abs(p1 - p2).max()
    assert e1 < e0
