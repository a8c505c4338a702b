"""Position grids, graphon kernels, edge-probability fields and dilution schemes,
together with the static regularity functionals measured on them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng
from .quadrature import (QuadratureError, cell_average_nodes, line_rule,
                         refine_breaks, rule)


class KernelDomainError(ValueError):
    """Kernel returned a non-finite or negative value where it must not."""


class DegenerateKernelError(ValueError):
    """Expected degree vanishes; degree-normalized dilution undefined."""


# ---------------------------------------------------------------------------
# position grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PositionGrid:
    """Discretized spatial variable: n positions with quadrature weights.

    Deterministic unit-interval grids place x_i = i/n with uniform weights;
    iid grids sample positions from the reference law under a keyed stream so
    the grid is reproducible and extensible in n.
    """

    domain_kind: str              # "unit-interval" | "box"
    p: int
    n: int
    positions: np.ndarray         # (n,) for p=1, else (n, p)
    quadrature_weights: np.ndarray
    scheme: str                   # "deterministic" | "iid"
    seed: Optional[int] = None
    law: str = "uniform"
    bounds: Optional[tuple] = None   # (lo, hi) per axis for box domains

    def __post_init__(self):
        w = np.asarray(self.quadrature_weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1")
        if np.any(w < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if self.scheme == "deterministic" and self.domain_kind == "unit-interval":
            x = np.asarray(self.positions)
            if np.any(np.diff(x) <= 0):
                raise ValueError("deterministic grid must be strictly increasing")

    @property
    def x(self) -> np.ndarray:
        return self.positions


def _exact_uniform_weights(n: int) -> np.ndarray:
    w = np.full(n, 1.0 / n)
    w[-1] = 1.0 - w[:-1].sum()     # make the sum exactly 1.0
    return w


def make_positions(scheme: str, n: int, p: int = 1, seed=None,
                   law: str = "uniform") -> PositionGrid:
    """Build a position grid.

    ``scheme="deterministic"``: x_i = i/n on [0, 1] (p must be 1).
    ``scheme="iid"``: n samples of the reference law (uniform on [0,1]^p or
    standard Gaussian on R^p); requires a seed.
    """
    if n < 1:
        raise ValueError("need at least one position")
    if scheme == "deterministic":
        if p != 1:
            raise ValueError("deterministic grids are one-dimensional")
        x = np.arange(1, n + 1, dtype=float) / n
        return PositionGrid("unit-interval", 1, n, x, _exact_uniform_weights(n),
                            "deterministic")
    if scheme == "iid":
        if seed is None:
            raise ValueError("iid positions require a seed for reproducibility")
        u = rng.uniforms(seed, rng.POSITIONS, count=n * p)
        if law == "uniform":
            pts = u.reshape(n, p)
            kind, bounds = "unit-interval" if p == 1 else "box", (0.0, 1.0)
        elif law == "gaussian":
            pts = rng.normals_from_uniforms(u).reshape(n, p)
            kind, bounds = "box", None
        else:
            raise ValueError(f"unknown position law {law!r}")
        if p == 1:
            pts = pts.ravel()
        return PositionGrid(kind, p, n, pts, _exact_uniform_weights(n),
                            "iid", seed=int(seed), law=law, bounds=bounds)
    raise ValueError(f"unknown position scheme {scheme!r}")


def grid_from_nodes(positions, weights=None, domain_kind="unit-interval",
                    bounds=None) -> PositionGrid:
    """Wrap explicit quadrature nodes (used by the mean-field solvers)."""
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    p = 1 if positions.ndim == 1 else positions.shape[1]
    w = _exact_uniform_weights(n) if weights is None else np.asarray(weights, float)
    return PositionGrid(domain_kind, p, n, positions, w, "deterministic",
                        bounds=bounds)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """A nonnegative interaction kernel on I x I.

    ``evaluator`` is numpy-vectorized in both arguments and returns the
    analytic formula everywhere it is finite; the zero-diagonal convention is
    applied by index (i == j) in the discrete sums, not inside the evaluator.

    Regularity metadata (used to steer quadrature and divergence flags):
    ``singular_exponent`` with ``singular_locus`` in {"y0", "x0", "xy0",
    "diag"}, Hoelder data (L_W, iota2), an optional sup bound, optional row
    ``breakpoints`` (z-discontinuities of z -> W(x, z)) and an optional radial
    ``profile`` for kernels of the form f(|x-y|).
    """

    name: str
    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bounded_sup: Optional[float] = None
    singular_exponent: Optional[float] = None
    singular_locus: Optional[str] = None
    holder_constant: Optional[float] = None
    holder_exponent: Optional[float] = None
    diagonal_zero: bool = True
    breakpoints: Optional[Callable[[float], list]] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x, y) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, float), np.asarray(y, float)))

    def y_singularities(self) -> list:
        if self.singular_locus in ("y0", "xy0"):
            return [0.0]
        return []

    def x_singularities(self) -> list:
        if self.singular_locus in ("x0", "xy0"):
            return [0.0]
        return []


def builtin_kernel(name: str, **params) -> Kernel:
    """Kernel zoo addressable by name.

    er(p) | one-minus-max | one-minus-xy | indicator(R) | abs-power(alpha) |
    power-y(alpha) | power-xy(alpha) | normalized(base=...) | gauss-diff(scale)
    """
    if name in ("er", "const"):
        p = float(params.get("p", params.get("c", 1.0)))
        return Kernel(name, lambda x, y: np.broadcast_to(np.float64(p), np.broadcast_shapes(np.shape(x), np.shape(y))).copy(),
                      bounded_sup=p, holder_constant=0.0, holder_exponent=1.0,
                      params={"p": p})
    if name == "one-minus-max":
        return Kernel(name, lambda x, y: 1.0 - np.maximum(x, y),
                      bounded_sup=1.0, holder_constant=1.0, holder_exponent=1.0)
    if name == "one-minus-xy":
        return Kernel(name, lambda x, y: 1.0 - x * y,
                      bounded_sup=1.0, holder_constant=1.0, holder_exponent=1.0)
    if name in ("indicator", "nearest-neighbor"):
        R = float(params["R"])
        if not 0.0 < R <= 1.0:
            raise ValueError("indicator range R must lie in (0, 1]")
        return Kernel(name, lambda x, y: (np.abs(x - y) <= R).astype(float),
                      bounded_sup=1.0, holder_constant=2.0, holder_exponent=0.5,
                      breakpoints=lambda x: [x - R, x + R],
                      profile=lambda r: (r <= R).astype(float), params={"R": R})
    alpha = params.get("alpha")
    if name == "abs-power":
        a = float(alpha)
        _check_alpha(a)
        return Kernel(name, lambda x, y: _safe_power(np.abs(x - y), -a),
                      singular_exponent=a, singular_locus="diag",
                      profile=lambda r: _safe_power(r, -a), params={"alpha": a})
    if name == "power-y":
        a = float(alpha)
        _check_alpha(a)

        def _power_y(x, y):
            # power taken before broadcasting: rows do not depend on x
            shape = np.broadcast_shapes(np.shape(x), np.shape(y))
            return np.broadcast_to((1.0 - a) * _safe_power(y, -a), shape)

        return Kernel(name, _power_y,
                      singular_exponent=a, singular_locus="y0",
                      holder_constant=0.0, holder_exponent=1.0, params={"alpha": a})
    if name == "power-xy":
        a = float(alpha)
        _check_alpha(a)

        def _power_xy(x, y):
            return (1.0 - a) ** 2 * (_safe_power(x, -a) * _safe_power(y, -a))

        return Kernel(name, _power_xy,
                      singular_exponent=a, singular_locus="xy0", params={"alpha": a})
    if name == "normalized":
        base = params["base"]
        if not isinstance(base, Kernel):
            raise ValueError("normalized kernel needs a base Kernel")
        return _row_normalized(base, panels=int(params.get("panels", 64)))
    if name == "gauss-diff":
        s = float(params.get("scale", 1.0))
        return Kernel(name, lambda x, y: np.exp(-((x - y) / s) ** 2),
                      bounded_sup=1.0, holder_constant=2.0 / s, holder_exponent=1.0,
                      profile=lambda r: np.exp(-((r / s) ** 2)), params={"scale": s})
    raise ValueError(f"unknown kernel {name!r}")


def _check_alpha(a: float):
    if not 0.0 <= a < 0.5:
        raise ValueError("singular exponent alpha must lie in [0, 1/2)")


def _safe_power(v, expo):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.power(v, expo)


def _row_normalized(base: Kernel, panels: int = 64) -> Kernel:
    """W(x, y) = P(x, y) / integral_z P(x, z) dz on the unit interval."""
    nodes, weights = line_rule(0.0, 1.0, panels=panels,
                               singular_points=base.y_singularities())

    def _rows(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        vals = base(x[..., None], nodes)
        return vals @ weights

    def evaluator(x, y):
        x = np.asarray(x, dtype=float)
        denom = _rows(x).reshape(np.shape(x) if np.ndim(x) else ())
        if np.any(denom <= 0):
            raise DegenerateKernelError("row integral of base kernel vanishes")
        return base(x, y) / denom

    locus = {"xy0": "y0", "y0": "y0"}.get(base.singular_locus, base.singular_locus)
    return Kernel(f"normalized({base.name})", evaluator,
                  singular_exponent=base.singular_exponent, singular_locus=locus,
                  params={"base": base.name, **base.params})


# ---------------------------------------------------------------------------
# microscopic probability field and dilution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MicroKernel:
    """Edge-probability field rho_n * min(1/rho_n, P(x, y))."""

    generator: Kernel
    rho_n: float
    w_n_cap: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.rho_n <= 1.0:
            raise ValueError("rho_n must lie in (0, 1]")


def micro_prob(mk: MicroKernel, x, y) -> np.ndarray:
    """Edge probability at positions (x, y); always lands in [0, 1].

    The zero-diagonal rule is applied by node index elsewhere; two distinct
    nodes at equal positions still get the formula value.
    """
    vals = mk.generator(x, y)
    if not np.all(np.isfinite(vals)):
        raise KernelDomainError(f"generator {mk.generator.name!r} returned a "
                                "non-finite edge intensity")
    if np.any(vals < 0):
        raise KernelDomainError("negative edge intensity")
    return mk.rho_n * np.minimum(1.0 / mk.rho_n, vals)


@dataclass(frozen=True)
class DilutionScheme:
    """Per-node renormalization of the interaction.

    ``uniform``: kappa_i = 1/rho_n for every node. ``degree-normalized``:
    kappa_i = n / (rho_n * sum_{j != i} min(1/rho_n, P(x_i, x_j))).  The caps
    kappa_cap = max_i kappa_i and w_cap = max_{ij} W_n(x_i, x_j) are measured
    on the grid, not assumed.
    """

    kind: str
    kappa: np.ndarray
    kappa_cap: float
    w_cap: float

    def __post_init__(self):
        if np.any(self.kappa < 1.0 - 1e-12):
            raise ValueError("dilution weights must be >= 1")


def _micro_matrix(mk: MicroKernel, grid: PositionGrid) -> np.ndarray:
    x = grid.positions
    if grid.p == 1:
        W_n = micro_prob(mk, x[:, None], x[None, :])
    else:
        W_n = micro_prob(mk, x[:, None, :], x[None, :, :])
    np.fill_diagonal(W_n, 0.0)
    return W_n


def dilution(kind: str, mk: MicroKernel, grid: PositionGrid) -> DilutionScheme:
    """Derive the dilution weights kappa for a grid."""
    if grid.n == 0:
        raise ValueError("empty grid")
    n = grid.n
    W_n = _micro_matrix(mk, grid)
    w_cap = float(W_n.max(initial=0.0))
    if kind == "uniform":
        kappa = np.full(n, 1.0 / mk.rho_n)
    elif kind == "degree-normalized":
        x = grid.positions
        clipped = np.minimum(1.0 / mk.rho_n, mk.generator(x[:, None], x[None, :]))
        np.fill_diagonal(clipped, 0.0)
        row = clipped.sum(axis=1)
        if np.any(row <= 0):
            raise DegenerateKernelError("isolated expected degree in "
                                        "degree-normalized dilution")
        kappa = n / (mk.rho_n * row)
    else:
        raise ValueError(f"unknown dilution kind {kind!r}")
    return DilutionScheme(kind, kappa, float(kappa.max()), w_cap)


def renormalized_field(mk: MicroKernel, dil, grid: PositionGrid) -> np.ndarray:
    """kappa_i * W_n(x_i, x_k) as an n x n table with zero diagonal.

    For the uniform scheme kappa_i * rho_n == 1 identically, so the product is
    simplified algebraically to min(1/rho_n, P); this keeps the clamp-free
    case an exact cancellation rather than a rounded one.
    """
    x = grid.positions
    if isinstance(dil, DilutionScheme) and dil.kind == "uniform":
        out = np.minimum(1.0 / mk.rho_n, mk.generator(x[:, None], x[None, :]))
    else:
        kappa = dil.kappa if isinstance(dil, DilutionScheme) else np.asarray(dil, float)
        out = kappa[:, None] * _micro_matrix(mk, grid)
    out = np.asarray(out, dtype=float)
    np.fill_diagonal(out, 0.0)
    return out


def delta_n(W: Kernel, mk: MicroKernel, dil, grid: PositionGrid) -> float:
    """Row-averaged distance between the renormalized edge field and W.

    sup_i (1/n) sum_{k != i} |kappa_i W_n(x_i, x_k) - W(x_i, x_k)|.
    """
    x = grid.positions
    R = renormalized_field(mk, dil, grid)
    Wv = np.ascontiguousarray(W(x[:, None], x[None, :]))
    np.fill_diagonal(Wv, 0.0)
    return float(np.abs(R - Wv).sum(axis=1).max() / grid.n)


# ---------------------------------------------------------------------------
# regularity functionals
# ---------------------------------------------------------------------------

def s_n(W: Kernel, grid: PositionGrid, rows: bool = False, block: int = 128):
    """Cell-averaging defect of W along the deterministic grid.

    For each row i: sum_k over grid cells of the integral of
    |W(x_i, x_k) - W(x_i, y)| over the cell; returns the sup over rows
    (or the whole row vector with ``rows=True``).
    """
    if grid.scheme != "deterministic" or grid.domain_kind != "unit-interval":
        raise ValueError("s_n is defined on the deterministic unit-interval grid")
    n = grid.n
    x = grid.positions
    breaks = np.concatenate(([0.0], x))
    per_row_rule = W.singular_locus == "diag" or W.breakpoints is not None

    if not per_row_rule:
        breaks = refine_breaks(breaks, W.y_singularities())
        nodes, weights = rule(breaks)
        cell_of_node = np.searchsorted(x, nodes, side="left")
        cell_of_node = np.minimum(cell_of_node, n - 1)
        out = np.empty(n)
        for lo in range(0, n, block):
            hi = min(lo + block, n)
            vals = W(x[lo:hi, None], nodes[None, :])          # (b, #nodes)
            ref = W(x[lo:hi, None], x[None, :])               # (b, n)
            if not np.all(np.isfinite(vals)):
                bad = np.argwhere(~np.isfinite(vals))[0]
                raise QuadratureError(nodes[bad[1]], nodes[bad[1]],
                                      "singular kernel value at node")
            diff = np.abs(ref[:, cell_of_node] - vals)
            out[lo:hi] = diff @ weights
        return out if rows else float(out.max())

    out = np.empty(n)
    for i in range(n):
        xi = x[i]
        extra = [b for b in (W.breakpoints(xi) if W.breakpoints else [])]
        sing = list(W.y_singularities()) + ([xi] if W.singular_locus == "diag" else [])
        b_i = np.unique(np.concatenate([breaks, np.clip(extra, 0.0, 1.0)])) if extra else breaks
        b_i = refine_breaks(b_i, sing)
        nodes, weights = rule(b_i)
        cell = np.minimum(np.searchsorted(x, nodes, side="left"), n - 1)
        vals = W(xi, nodes)
        ref = W(xi, x)
        if not np.all(np.isfinite(vals)):
            bad = int(np.argmax(~np.isfinite(vals)))
            raise QuadratureError(nodes[bad], nodes[bad], "singular kernel value")
        out[i] = np.dot(np.abs(ref[cell] - vals), weights)
    return out if rows else float(out.max())


@dataclass(frozen=True)
class MomentReport:
    r: int
    sup_w_r: float
    inf_w_1: float
    sup_divergent: bool
    inf_degenerate: bool


def moment_Wr(W: Kernel, grid: Optional[PositionGrid], r: int,
              panels: int = 64) -> MomentReport:
    """Quadrature estimate of sup_x of the r-th row moment and inf_x of the
    first row moment; divergences are flagged, never raised."""
    if r < 1:
        raise ValueError("moment order r must be >= 1")
    if grid is not None:
        xs = np.atleast_1d(grid.positions)
    else:
        xs = np.linspace(1e-3, 1.0, 201)
        if W.x_singularities():
            xs = np.concatenate([10.0 ** np.arange(-9, -3), xs])
    a = W.singular_exponent
    sup_divergent = a is not None and (
        (W.singular_locus in ("y0", "xy0", "diag") and a * r >= 1.0)
        or W.singular_locus in ("x0", "xy0"))
    nodes, weights = line_rule(0.0, 1.0, panels=panels,
                               singular_points=W.y_singularities())
    vals = W(xs[:, None], nodes[None, :])
    with np.errstate(over="ignore"):
        row_r = np.power(vals, r) @ weights
        row_1 = vals @ weights if r != 1 else row_r
    sup_wr = float(np.max(row_r))
    inf_w1 = float(np.min(row_1))
    if not np.isfinite(sup_wr):
        sup_divergent = True
        sup_wr = float("inf")
    return MomentReport(r, sup_wr, inf_w1, sup_divergent, inf_w1 <= 1e-12)


@dataclass(frozen=True)
class LchiReport:
    chi: float
    value: float
    divergent: bool


def lchi_norm(P: Kernel, chi: float, panels: int = 64) -> LchiReport:
    """L^chi norm of the kernel on the unit square, or a divergence flag."""
    if chi <= 0:
        raise ValueError("chi must be positive")
    a = P.singular_exponent
    if a is not None and a * chi >= 1.0:
        return LchiReport(chi, float("inf"), True)
    if P.singular_locus == "diag" and P.profile is not None:
        # int int f(|x-y|)^chi dx dy = 2 int_0^1 (1-u) f(u)^chi du
        nodes, weights = line_rule(0.0, 1.0, panels=panels, singular_points=[0.0])
        val = 2.0 * float(np.dot(weights, (1.0 - nodes) * P.profile(nodes) ** chi))
        return LchiReport(chi, val ** (1.0 / chi), False)
    ny, wy = line_rule(0.0, 1.0, panels=panels, singular_points=P.y_singularities())
    nx, wx = line_rule(0.0, 1.0, panels=panels, singular_points=P.x_singularities())
    vals = P(nx[:, None], ny[None, :]) ** chi
    val = float(wx @ vals @ wy)
    return LchiReport(chi, val ** (1.0 / chi), False)


def grid_l2_residual(W: Kernel, n: int) -> float:
    """Squared L2 defect of the piecewise-constant grid sampling of W."""
    xn, wx, yn, wy = cell_average_nodes(n)
    x = np.arange(1, n + 1) / n
    ref = W(x[:, None], x[None, :])                       # (n, n)
    vals = W(xn[:, None, :, None], yn[None, :, None, :])  # (n, n, 4, 5)
    sq = (ref[:, :, None, None] - vals) ** 2
    cell_means = np.einsum("ijab,a,b->ij", sq, wx, wy)
    return float(cell_means.sum() / (n * n))


def holder_row_distance(W: Kernel, x: float, y: float, panels: int = 64) -> float:
    """Integrated row distance integral_z |W(x, z) - W(y, z)| dz."""
    bp = []
    if W.breakpoints is not None:
        bp = list(W.breakpoints(x)) + list(W.breakpoints(y))
    sing = list(W.y_singularities())
    if W.singular_locus == "diag":
        sing += [x, y]
    nodes, weights = line_rule(0.0, 1.0, panels=panels,
                               singular_points=sing, breakpoints=bp)
    return float(np.dot(weights, np.abs(W(x, nodes) - W(y, nodes))))


def riemann_constant_gap(alpha: float, n: int) -> float:
    """sum_{k<=n} k^-alpha minus its leading term n^(1-alpha)/(1-alpha)."""
    k = np.arange(1, n + 1, dtype=float)
    return float(np.sum(k ** -alpha) - n ** (1.0 - alpha) / (1.0 - alpha))
