"""Dynamics specifications: local drift, pairwise interaction, noise matrix,
initial laws, and a Monte Carlo prober for the declared regularity constants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng


@dataclass(frozen=True)
class ModelSpec:
    """Model triple (c, Gamma, sigma) plus declared regularity constants.

    ``c`` maps (..., d) -> (..., d); ``gamma`` broadcasts over both state
    arguments.  ``sigma`` is a constant d x d matrix (possibly zero).  The
    optional hooks provide O(n^2)-but-vectorized interaction sums and
    sufficient-statistic reductions for the mean-field representation.
    """

    name: str
    d: int
    c: Callable[[np.ndarray], np.ndarray]
    gamma: Callable[[np.ndarray, np.ndarray], np.ndarray]
    sigma: np.ndarray
    L_c: float
    L_gamma: float
    k: int
    sufficient_statistic: Optional[str] = None
    gamma_mat: Optional[np.ndarray] = None
    pairwise_hook: Optional[Callable] = None
    stats_hook: Optional[Callable] = None
    stats_mean_hook: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("polynomial growth degree k must be >= 2")
        if self.L_c <= 0 or self.L_gamma <= 0:
            raise ValueError("declared constants must be positive")
        s = np.asarray(self.sigma, dtype=float)
        if s.shape != (self.d, self.d):
            raise ValueError("sigma must be a d x d matrix")

    @property
    def has_noise(self) -> bool:
        return bool(np.any(np.asarray(self.sigma) != 0.0))

    def pairwise(self, V: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """(1/n) sum_j V_ij Gamma(theta_i, theta_j) for a weight table V."""
        n = theta.shape[0]
        if self.pairwise_hook is not None:
            return self.pairwise_hook(V, theta)
        out = np.empty_like(theta)
        chunk = max(1, int(4e6 // max(n, 1)))
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            g = self.gamma(theta[lo:hi, None, :], theta[None, :, :])
            out[lo:hi] = np.einsum("ij,ijd->id", V[lo:hi], g)
        return out / n

    def ensemble_stats(self, ens: np.ndarray):
        """Reduce an (..., M, d) ensemble to this model's sufficient statistic."""
        if self.stats_hook is None:
            return None
        return self.stats_hook(ens)

    def gamma_mean_from_stats(self, theta: np.ndarray, stats) -> np.ndarray:
        return self.stats_mean_hook(theta, stats)


def _sigma_matrix(sigma, d: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(d)
    if s.ndim == 1:
        return np.diag(s)
    return s


def builtin_model(name: str, **params) -> ModelSpec:
    """Model zoo: kuramoto | fhn | linear | neural-field."""
    if name == "kuramoto":
        return _kuramoto(**params)
    if name == "fhn":
        return _fhn(**params)
    if name == "linear":
        return _linear(**params)
    if name == "neural-field":
        return _neural_field(**params)
    raise ValueError(f"unknown model {name!r}")


def _kuramoto(omega: float = 1.0, a: float = 0.0, sigma: float = 0.0) -> ModelSpec:
    omega = float(omega)
    a = float(a)

    if a == 0.0:
        def c(theta):
            return np.full_like(theta, omega)
    else:
        def c(theta):
            return 1.0 + a * np.sin(theta)

    def gamma(t1, t2):
        t1, t2 = np.broadcast_arrays(t1, t2)
        return np.sin(t2 - t1)

    def pairwise(V, theta):
        th = theta[:, 0]
        s, co = np.sin(th), np.cos(th)
        return ((co * (V @ s) - s * (V @ co)) / V.shape[1])[:, None]

    def stats(ens):
        # ens (..., M, 1) -> dict of circular means over the ensemble axis
        th = ens[..., 0]
        return {"sin": np.sin(th).mean(axis=-1), "cos": np.cos(th).mean(axis=-1)}

    def stats_mean(theta, st):
        th = theta[..., 0]
        return (np.cos(th) * st["sin"] - np.sin(th) * st["cos"])[..., None]

    return ModelSpec("kuramoto", 1, c, gamma, _sigma_matrix(sigma, 1),
                     L_c=max(abs(a), 1.0), L_gamma=1.0, k=2,
                     sufficient_statistic="circular-order-parameter",
                     pairwise_hook=pairwise, stats_hook=stats,
                     stats_mean_hook=stats_mean,
                     params={"omega": omega, "a": a, "sigma": float(sigma)})


def _gamma_mat_hooks(gm: np.ndarray):
    def gamma(t1, t2):
        t1, t2 = np.broadcast_arrays(t1, t2)
        return (t1 - t2) @ gm.T

    def pairwise(V, theta):
        row = V.sum(axis=1)
        return ((row[:, None] * theta - V @ theta) @ gm.T) / V.shape[1]

    def stats(ens):
        return {"mean": ens.mean(axis=-2)}

    def stats_mean(theta, st):
        return (theta - st["mean"]) @ gm.T

    return gamma, pairwise, stats, stats_mean


def _fhn(a: float = 0.3, b: float = 0.8, tau: float = 10.0,
         coupling: float = 1.0, sigma=0.0) -> ModelSpec:
    a, b, tau, coupling = map(float, (a, b, tau, coupling))

    def c(theta):
        v, w = theta[..., 0], theta[..., 1]
        return np.stack([v - v ** 3 / 3.0 - w, (v + a - b * w) / tau], axis=-1)

    gamma, pairwise, stats, stats_mean = _gamma_mat_hooks(
        np.array([[coupling, 0.0], [0.0, 0.0]]))

    # exact one-sided bound: top eigenvalue of the symmetrized Jacobian at V=0
    s = 0.5 * (1.0 / tau - 1.0)
    half_tr = 0.5 * (1.0 - b / tau)
    L_c = half_tr + np.hypot(0.5 * (1.0 + b / tau), s)

    return ModelSpec("fhn", 2, c, gamma, _sigma_matrix(sigma, 2),
                     L_c=float(max(L_c, 1.0)), L_gamma=max(abs(coupling), 1e-9),
                     k=3, sufficient_statistic="linear-mean",
                     gamma_mat=np.array([[coupling, 0.0], [0.0, 0.0]]),
                     pairwise_hook=pairwise, stats_hook=stats,
                     stats_mean_hook=stats_mean,
                     params={"a": a, "b": b, "tau": tau, "coupling": coupling,
                             "sigma": float(np.asarray(sigma).max())})


def _linear(d: int = 1, drift_lin=-1.0, drift_const=0.0, coupling=1.0,
            sigma=0.0) -> ModelSpec:
    d = int(d)
    A = np.asarray(drift_lin, dtype=float)
    if A.ndim == 0:
        A = float(A) * np.eye(d)
    b0 = np.broadcast_to(np.asarray(drift_const, dtype=float), (d,)).copy()
    gm = np.asarray(coupling, dtype=float)
    if gm.ndim == 0:
        gm = float(gm) * np.eye(d)

    def c(theta):
        return theta @ A.T + b0

    gamma, pairwise, stats, stats_mean = _gamma_mat_hooks(gm)
    L_c = max(float(np.linalg.eigvalsh(0.5 * (A + A.T)).max()), 1e-9)
    L_g = max(float(np.linalg.norm(gm, 2)), 1e-9)
    return ModelSpec("linear", d, c, gamma, _sigma_matrix(sigma, d),
                     L_c=L_c, L_gamma=L_g, k=2,
                     sufficient_statistic="linear-mean", gamma_mat=gm,
                     pairwise_hook=pairwise, stats_hook=stats,
                     stats_mean_hook=stats_mean,
                     params={"d": d, "sigma": float(np.asarray(sigma).max())})


def _neural_field(alpha: float = 1.0, lam: float = 4.0, theta0: float = 0.5,
                  amp: float = 1.0, sigma: float = 0.0) -> ModelSpec:
    alpha, lam, theta0, amp = map(float, (alpha, lam, theta0, amp))

    def f(u):
        return 1.0 / (1.0 + np.exp(-lam * (u - theta0)))

    def c(theta):
        return -alpha * theta

    def gamma(t1, t2):
        t1, t2 = np.broadcast_arrays(t1, t2)
        return amp * f(t2)

    def pairwise(V, theta):
        return (V @ (amp * f(theta[:, 0])) / V.shape[1])[:, None]

    def stats(ens):
        return {"fmean": (amp * f(ens[..., 0])).mean(axis=-1)}

    def stats_mean(theta, st):
        out = st["fmean"] + np.zeros_like(theta[..., 0])
        return out[..., None]

    L_g = max(abs(amp) * max(lam / 4.0, 1.0), 1e-9)
    return ModelSpec("neural-field", 1, c, gamma, _sigma_matrix(sigma, 1),
                     L_c=max(alpha, 1e-9), L_gamma=L_g, k=2,
                     sufficient_statistic=None,
                     pairwise_hook=pairwise, stats_hook=stats,
                     stats_mean_hook=stats_mean,
                     params={"alpha": alpha, "lam": lam, "theta0": theta0,
                             "amp": amp, "sigma": sigma})


# ---------------------------------------------------------------------------
# interaction means
# ---------------------------------------------------------------------------

def interaction_mean(m: ModelSpec, theta, ensemble, path: str = "auto") -> np.ndarray:
    """Average of Gamma(theta, .) against an empirical ensemble.

    ``ensemble`` is an (M, d) sample set or an already-reduced sufficient
    statistic (dict).  Tagged models take the closed-form path unless
    ``path="generic"`` forces the raw empirical average.
    """
    theta = np.asarray(theta, dtype=float)
    squeeze = theta.ndim == 1
    th = theta[None, :] if squeeze else theta
    if isinstance(ensemble, dict):
        out = m.gamma_mean_from_stats(th, ensemble)
        return out[0] if squeeze else out
    ens = np.asarray(ensemble, dtype=float)
    if ens.size == 0:
        raise ValueError("empty ensemble")
    use_stats = (path == "stats") or (path == "auto" and m.sufficient_statistic
                                      and m.stats_hook is not None)
    if use_stats:
        out = m.gamma_mean_from_stats(th, m.ensemble_stats(ens))
    else:
        out = m.gamma(th[:, None, :], ens[None, :, :]).mean(axis=1)
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# initial laws
# ---------------------------------------------------------------------------

def profile(kind: str, **p) -> Callable[[np.ndarray], np.ndarray]:
    """Named scalar profiles x -> g(x) used for spatially varying parameters."""
    if kind == "constant":
        v = float(p.get("value", 0.0))
        return lambda x: np.full_like(np.asarray(x, dtype=float), v)
    if kind == "linear":
        a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
        return lambda x: a + b * np.asarray(x, dtype=float)
    if kind == "sine":
        a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
        freq = float(p.get("freq", 1.0))
        return lambda x: a + b * np.sin(2.0 * np.pi * freq * np.asarray(x, dtype=float))
    if kind == "tanh":
        a, b = float(p.get("a", 0.0)), float(p.get("b", 1.0))
        scale = float(p.get("scale", 1.0))
        return lambda x: a + b * np.tanh(np.asarray(x, dtype=float) / scale)
    raise ValueError(f"unknown profile {kind!r}")


@dataclass(frozen=True)
class InitialLaw:
    """Position-indexed initial law nu_0^x with declared regularity data."""

    name: str
    d: int
    sampler: Callable          # (positions, Generator) -> (n, d)
    mean: Optional[Callable]   # positions -> (n, d), when available closed-form
    L0: float = 1.0
    iota1: float = 1.0
    moment_bound_2k: float = np.inf
    params: dict = field(default_factory=dict)

    def sample(self, positions, gen) -> np.ndarray:
        out = np.asarray(self.sampler(np.asarray(positions, dtype=float), gen))
        if not np.all(np.isfinite(out)):
            raise ValueError("initial sampler produced non-finite states")
        return out


def _first_coord(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x if x.ndim == 1 else x[:, 0]


def initial_law(name: str, d: int = 1, **params) -> InitialLaw:
    """Initial-law zoo: point (Dirac at g(x)), uniform-circle, gaussian."""
    if name == "point":
        profs = params.get("profiles")
        if profs is None:
            profs = [profile(params.get("profile", "linear"),
                             **params.get("profile_params", {}))] * d

        def mean(x):
            t = _first_coord(x)
            return np.stack([np.broadcast_to(pr(t), t.shape) for pr in profs], axis=-1)

        return InitialLaw(name, d, lambda x, gen: mean(x), mean,
                          moment_bound_2k=np.inf, params=params)
    if name == "uniform-circle":
        def sampler(x, gen):
            return gen.uniform(0.0, 2.0 * np.pi, size=(len(np.atleast_1d(_first_coord(x))), d))

        def mean(x):
            t = _first_coord(x)
            return np.full(t.shape + (d,), np.pi)

        return InitialLaw(name, d, sampler, mean, L0=1e-12,
                          moment_bound_2k=(2 * np.pi) ** 4, params=params)
    if name == "gaussian":
        mu = profile(params.get("mean_profile", "constant"),
                     **params.get("mean_params", {"value": params.get("mu", 0.0)}))
        s = float(params.get("std", 1.0))

        def sampler(x, gen):
            t = _first_coord(x)
            base = np.stack([np.broadcast_to(mu(t), t.shape)] * d, axis=-1)
            return base + s * gen.standard_normal(base.shape)

        def mean(x):
            t = _first_coord(x)
            return np.stack([np.broadcast_to(mu(t), t.shape)] * d, axis=-1)

        return InitialLaw(name, d, sampler, mean, params=params)
    raise ValueError(f"unknown initial law {name!r}")


def check_initial_law(init: InitialLaw, grid, two_k: int, samples: int = 2048,
                      seed: int = 0) -> dict:
    """Empirical verification of the declared 2k-moment bound."""
    gen = rng.generator(seed, rng.PROBE, 1)
    reps = max(1, samples // max(1, grid.n))
    worst = 0.0
    for r in range(reps):
        th = init.sample(grid.positions, rng.generator(seed, rng.PROBE, 2, r))
        worst = max(worst, float((np.linalg.norm(th, axis=-1) ** two_k).max()))
    return {"max_moment": worst,
            "bound": init.moment_bound_2k,
            "violated": bool(worst > init.moment_bound_2k * (1 + 1e-9))}


# ---------------------------------------------------------------------------
# constant probing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeReport:
    L_gamma: float
    L_c_onesided: float
    growth_exponent: float
    violations: tuple

    def ok(self) -> bool:
        return not self.violations


def probe_constants(m: ModelSpec, box_radius: float = 3.0, samples: int = 4000,
                    seed: int = 0, coordinate: Optional[int] = None) -> ProbeReport:
    """Monte Carlo lower bounds on the model's regularity constants.

    Sampled ratios never exceed the true constants; a violation flag fires
    when a probe exceeds the declared value.  ``coordinate`` restricts the
    perturbed pairs to differ in a single state coordinate.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    gen = rng.generator(seed, rng.PROBE, 0)
    R = float(box_radius)
    th1 = gen.uniform(-R, R, size=(samples, m.d))
    th2 = gen.uniform(-R, R, size=(samples, m.d))
    if coordinate is None:
        th1t = gen.uniform(-R, R, size=(samples, m.d))
        th2t = gen.uniform(-R, R, size=(samples, m.d))
    else:
        th1t, th2t = th1.copy(), th2.copy()
        th1t[:, coordinate] = gen.uniform(-R, R, size=samples)
        th2t[:, coordinate] = gen.uniform(-R, R, size=samples)

    d1 = np.linalg.norm(th1 - th1t, axis=1)
    d2 = np.linalg.norm(th2 - th2t, axis=1)
    keep = d1 + d2 > 1e-9
    lip = np.linalg.norm(m.gamma(th1, th2) - m.gamma(th1t, th2t), axis=1)[keep] \
        / (d1 + d2)[keep]
    growth = np.linalg.norm(m.gamma(th1, th2), axis=1) \
        / (1.0 + np.linalg.norm(th1, axis=1) + np.linalg.norm(th2, axis=1))
    L_gamma = float(max(lip.max(initial=0.0), growth.max(initial=0.0)))

    keep1 = d1 > 1e-9
    dc = m.c(th1) - m.c(th1t)
    onesided = np.einsum("ij,ij->i", th1 - th1t, dc)[keep1] / d1[keep1] ** 2
    L_c = float(onesided.max(initial=-np.inf))

    big = np.linalg.norm(th1, axis=1) > 2.0
    if np.any(big):
        cn = np.linalg.norm(m.c(th1[big]), axis=1)
        expo = float(np.max(np.log(np.maximum(cn, 1e-300))
                            / np.log(np.linalg.norm(th1[big], axis=1))))
    else:
        expo = 0.0

    violations = []
    if L_gamma > m.L_gamma + 1e-9:
        violations.append(f"gamma constant probe {L_gamma:.6g} exceeds declared "
                          f"{m.L_gamma:.6g}")
    if L_c > m.L_c + 1e-9:
        violations.append(f"one-sided drift probe {L_c:.6g} exceeds declared "
                          f"{m.L_c:.6g}")
    if expo > m.k + 1e-9:
        violations.append(f"growth exponent probe {expo:.3g} exceeds declared "
                          f"{m.k}")
    return ProbeReport(L_gamma, L_c, expo, tuple(violations))
