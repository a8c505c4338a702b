"""Composite Gauss-Legendre panel quadrature with graded refinement.

Panels use an 8-point rule; panels whose closure touches a declared singular
point are split into geometrically graded sub-panels (each a factor 4 smaller
toward the singularity) until the clipped mass is negligible for integrable
singularities with exponent below 1/2.
"""
from __future__ import annotations

import numpy as np

GL_POINTS = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_POINTS)

GRADING_RATIO = 0.25
GRADING_LEVELS = 26


class QuadratureError(RuntimeError):
    """Non-finite panel contribution; carries the offending interval."""

    def __init__(self, a, b, message="non-finite quadrature panel"):
        super().__init__(f"{message} on [{a!r}, {b!r}]")
        self.panel = (a, b)


def uniform_breaks(a: float, b: float, panels: int) -> np.ndarray:
    return np.linspace(a, b, panels + 1)


def grade_toward(a: float, b: float, end: str, levels: int = GRADING_LEVELS) -> np.ndarray:
    """Breakpoints of [a, b] graded geometrically toward one endpoint."""
    h = b - a
    fracs = GRADING_RATIO ** np.arange(levels, 0, -1)
    if end == "left":
        inner = a + h * fracs
        return np.concatenate(([a], inner, [b]))
    inner = b - h * fracs[::-1]
    return np.concatenate(([a], inner, [b]))


def refine_breaks(breaks: np.ndarray, singular_points, levels: int = GRADING_LEVELS) -> np.ndarray:
    """Split panels touching a singular point into graded sub-panels."""
    if not len(singular_points):
        return np.asarray(breaks, dtype=float)
    out = []
    pts = np.asarray(singular_points, dtype=float)
    for a, b in zip(breaks[:-1], breaks[1:]):
        tol = 1e-14 * max(1.0, abs(a), abs(b))
        hit_left = np.any(np.abs(pts - a) <= tol)
        hit_right = np.any(np.abs(pts - b) <= tol)
        if hit_left:
            out.append(grade_toward(a, b, "left", levels)[:-1])
        elif hit_right:
            out.append(grade_toward(a, b, "right", levels)[:-1])
        else:
            out.append(np.array([a]))
    out.append(np.array([breaks[-1]]))
    return np.concatenate(out)


def rule(breaks: np.ndarray):
    """Flattened Gauss-Legendre nodes and weights for the given panels."""
    breaks = np.asarray(breaks, dtype=float)
    a = breaks[:-1]
    b = breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def integrate(f, breaks: np.ndarray) -> float:
    nodes, weights = rule(breaks)
    vals = f(nodes)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(np.asarray(vals))))
        panel = bad // GL_POINTS
        raise QuadratureError(breaks[panel], breaks[panel + 1])
    return float(np.dot(weights, vals))


def line_rule(a: float, b: float, panels: int = 64, singular_points=(),
              breakpoints=()):
    """Panel rule on [a, b] with optional interior breakpoints and grading."""
    breaks = uniform_breaks(a, b, panels)
    extra = [p for p in breakpoints if a < p < b]
    if extra:
        breaks = np.unique(np.concatenate([breaks, np.asarray(extra, dtype=float)]))
    sing = [p for p in singular_points if a - 1e-12 <= p <= b + 1e-12]
    if sing:
        breaks = np.unique(np.concatenate([breaks, np.clip(sing, a, b)]))
        breaks = refine_breaks(breaks, sing)
    return rule(breaks)


# asymmetric orders so tensor nodes never land on the diagonal x == y
_CX4, _CW4 = np.polynomial.legendre.leggauss(4)
_CX5, _CW5 = np.polynomial.legendre.leggauss(5)


def cell_average_nodes(n: int):
    """Tensor nodes/weights averaging a kernel over the n x n grid cells.

    Returns (x_nodes (n,4), x_weights (4,), y_nodes (n,5), y_weights (5,));
    weights are normalized to average (sum to 1 per cell).
    """
    edges = np.arange(n + 1) / n
    half = 0.5 / n
    mid = 0.5 * (edges[:-1] + edges[1:])
    xn = mid[:, None] + half * _CX4[None, :]
    yn = mid[:, None] + half * _CX5[None, :]
    return xn, _CW4 / _CW4.sum(), yn, _CW5 / _CW5.sum()
