import numpy as np
import pytest

import graphmf as g
from graphmf.particles import BlowUpError, NoiseBath, spatial_profile


def _complete_graph(n):
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=1.0), 1.0)
    dil = g.dilution("uniform", mk, grid)
    return g.sample_graph(mk, dil, grid, seed=0), grid


def _empty_graph(n):
    grid = g.make_positions("deterministic", n)
    mk = g.MicroKernel(g.builtin_kernel("er", p=0.0), 1.0)
    dil = g.dilution("uniform", mk, grid)
    return g.sample_graph(mk, dil, grid, seed=0), grid


def test_isolated_particle_constant_path():
    gr, grid = _empty_graph(1)
    m = g.builtin_model("linear", drift_lin=0.0, drift_const=0.0, coupling=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 2.5})
    tr = g.simulate_graph_system(gr, m, init, 1.0, 0.1, NoiseBath(0, 0.1))
    assert np.all(tr.states == 2.5)


def test_kuramoto_synchronized_rigid_rotation():
    gr, grid = _complete_graph(12)
    m = g.builtin_model("kuramoto", omega=1.5, sigma=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 0.7})
    tr = g.simulate_graph_system(gr, m, init, 1.0, 0.01, NoiseBath(0, 0.01))
    assert np.allclose(tr.states[-1], 0.7 + 1.5, atol=1e-12)


def test_ou_terminal_variance():
    # independent OU particles: Gamma = 0 so one big run is many replicas
    n, T, h = 8192, 2.0, 1e-3
    gr, grid = _empty_graph(n)
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=0.0, sigma=1.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 0.0})
    tr = g.simulate_graph_system(gr, m, init, T, h, NoiseBath(42, h))
    var = tr.states[-1, :, 0].var()
    target = (1.0 - np.exp(-2 * T)) / 2
    se = target * np.sqrt(2.0 / n)
    assert abs(var - target) < 3 * se + 2 * h   # Euler bias is O(h)


def test_single_euler_step_by_hand():
    gr, grid = _complete_graph(2)
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=2.0, sigma=0.0)
    init = g.initial_law("point", profile="linear",
                         profile_params={"a": 1.3, "b": -1.6})
    # positions 0.5, 1.0 -> theta0 = (0.5, -0.3)
    h = 0.1
    tr = g.simulate_graph_system(gr, m, init, h, h, NoiseBath(0, h))
    th = np.array([0.5, -0.3])
    inter = np.array([0.5 * 2.0 * (th[0] - th[1]), 0.5 * 2.0 * (th[1] - th[0])])
    expect = th + h * (-th + inter)
    assert np.allclose(tr.states[1][:, 0], expect, atol=1e-15)


def test_w_system_matches_complete_graph_bitwise():
    gr, grid = _complete_graph(24)
    W = g.builtin_kernel("er", p=1.0)
    m = g.builtin_model("kuramoto", sigma=0.4)
    init = g.initial_law("uniform-circle")
    bath = NoiseBath(9, 0.01)
    a = g.simulate_graph_system(gr, m, init, 0.3, 0.01, bath, replica=2)
    b = g.simulate_w_system(W, grid, m, init, 0.3, 0.01, bath, replica=2)
    assert np.array_equal(a.states, b.states)


def test_w_system_zero_kernel_decouples():
    grid = g.make_positions("deterministic", 5)
    W = g.builtin_kernel("er", p=0.0)
    m = g.builtin_model("linear", drift_lin=-1.0, coupling=5.0, sigma=0.0)
    init = g.initial_law("point", profile="linear", profile_params={"a": 0.1, "b": 1.0})
    tr = g.simulate_w_system(W, grid, m, init, 0.5, 0.01, NoiseBath(0, 0.01))
    # with W = 0 the coupling never acts: pure per-particle decay
    decay = (1 - 0.01) ** 50
    assert np.allclose(tr.states[-1][:, 0], tr.states[0][:, 0] * decay, rtol=1e-12)


def test_coupled_copies_gamma_zero_equals_decoupled_run():
    n = 6
    gr, grid = _empty_graph(n)
    m = g.builtin_model("linear", drift_lin=-0.5, coupling=0.0, sigma=0.7)
    init = g.initial_law("gaussian", mu=0.3, std=0.4)
    W = g.builtin_kernel("er", p=1.0)
    quad = g.uniform_quadrature(4)
    mf = g.picard_solve(m, W, quad, 10, init, 0.4, 0.02, seed=5)
    bath = NoiseBath(5, 0.02)
    sys_run = g.simulate_graph_system(gr, m, init, 0.4, 0.02, bath, replica=0)
    cop_run = g.simulate_coupled_copies(mf, W, grid, m, init, 0.4, 0.02, bath,
                                        replica=0)
    assert np.array_equal(sys_run.states, cop_run.states)


def test_translation_equivariance_difference_coupling():
    gr, grid = _complete_graph(10)
    m = g.builtin_model("kuramoto", omega=0.0, sigma=0.0)
    shift = 1.234
    base = g.initial_law("point", profile="linear", profile_params={"a": 0.2, "b": 1.0})
    shifted = g.initial_law("point", profile="linear",
                            profile_params={"a": 0.2 + shift, "b": 1.0})
    bath = NoiseBath(0, 0.01)
    a = g.simulate_graph_system(gr, m, base, 0.5, 0.01, bath)
    b = g.simulate_graph_system(gr, m, shifted, 0.5, 0.01, bath)
    assert np.allclose(b.states, a.states + shift, atol=1e-9)


def test_determinism_same_keys_bit_identical():
    gr, grid = _complete_graph(16)
    m = g.builtin_model("kuramoto", sigma=0.3)
    init = g.initial_law("uniform-circle")
    a = g.simulate_graph_system(gr, m, init, 0.2, 0.01, NoiseBath(3, 0.01), replica=1)
    b = g.simulate_graph_system(gr, m, init, 0.2, 0.01, NoiseBath(3, 0.01), replica=1)
    c = g.simulate_graph_system(gr, m, init, 0.2, 0.01, NoiseBath(3, 0.01), replica=2)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_noise_bath_keyed_draws():
    bath = NoiseBath(7, 0.01)
    assert np.array_equal(bath.increments(1, 5, 8, 2), bath.increments(1, 5, 8, 2))
    assert not np.array_equal(bath.increments(1, 5, 8, 2),
                              bath.increments(1, 6, 8, 2))
    assert not np.array_equal(bath.increments(1, 5, 8, 2),
                              bath.increments(2, 5, 8, 2))


def test_spatial_profile_indexing():
    gr, grid = _empty_graph(10)
    m = g.builtin_model("linear", drift_lin=0.0, coupling=0.0)
    init = g.initial_law("point", profile="linear", profile_params={"a": 0.0, "b": 1.0})
    tr = g.simulate_graph_system(gr, m, init, 0.1, 0.1, NoiseBath(0, 0.1))
    assert spatial_profile(tr, 0.0, 0.0)[0] == tr.states[0, 0, 0]
    assert spatial_profile(tr, 1 - 1e-9, 0.0)[0] == tr.states[0, 9, 0]
    with pytest.raises(ValueError):
        spatial_profile(tr, 1.0, 0.0)
    with pytest.raises(ValueError):
        spatial_profile(tr, 0.5, 0.05)   # off the time grid
    const = g.initial_law("point", profile="constant", profile_params={"value": 3.0})
    tr2 = g.simulate_graph_system(gr, m, const, 0.1, 0.1, NoiseBath(0, 0.1))
    vals = [spatial_profile(tr2, x, 0.1)[0] for x in (0.0, 0.31, 0.77)]
    assert vals == [3.0, 3.0, 3.0]


def test_blowup_guard_trips_on_stiff_cubic():
    gr, grid = _complete_graph(4)
    m = g.builtin_model("fhn")
    init = g.initial_law("point", profiles=[
        g.profile("constant", value=6.0), g.profile("constant", value=0.0)])
    with pytest.raises(BlowUpError) as err:
        g.simulate_graph_system(gr, m, init, 20.0, 1.0, NoiseBath(0, 1.0))
    assert err.value.step >= 0
    assert "halve" in str(err.value)


def test_time_grid_validation():
    gr, grid = _empty_graph(2)
    m = g.builtin_model("kuramoto")
    init = g.initial_law("uniform-circle")
    with pytest.raises(ValueError):
        g.simulate_graph_system(gr, m, init, 0.05, 0.02, NoiseBath(0, 0.02))


def test_trajectory_csv_round_trip(tmp_path):
    gr, grid = _empty_graph(3)
    m = g.builtin_model("kuramoto", sigma=0.1)
    init = g.initial_law("uniform-circle")
    tr = g.simulate_graph_system(gr, m, init, 0.04, 0.02, NoiseBath(0, 0.02))
    path = tmp_path / "tr.csv"
    g.trajectory_to_csv(tr, path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "replica,step,time,particle,component,value"
    assert len(rows) - 1 == 3 * 3   # (S+1) * n * d
    last = rows[-1].split(",")
    assert float(last[-1]) == tr.states[-1, -1, -1]


def test_disorder_offsets_enter_drift():
    gr, grid = _empty_graph(4)
    m = g.builtin_model("kuramoto", omega=1.0, sigma=0.0)
    init = g.initial_law("point", profile="constant", profile_params={"value": 0.0})
    omega_i = np.array([[0.5], [-0.5], [0.0], [1.0]])
    tr = g.simulate_graph_system(gr, m, init, 1.0, 0.01, NoiseBath(0, 0.01),
                                 disorder=omega_i)
    assert np.allclose(tr.states[-1], 1.0 + omega_i, atol=1e-12)


def test_trajectory_npz_round_trip(tmp_path):
    gr, grid = _empty_graph(3)
    m = g.builtin_model("kuramoto", sigma=0.2)
    init = g.initial_law("uniform-circle")
    tr = g.simulate_graph_system(gr, m, init, 0.1, 0.02, NoiseBath(1, 0.02))
    path = tmp_path / "run.npz"
    g.particles.trajectory_to_npz(tr, path)
    back = g.particles.trajectory_from_npz(path, m, grid)
    assert np.array_equal(back.states, tr.states)
    assert back.coupling_key() == tr.coupling_key()
