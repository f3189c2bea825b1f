"""Quadrature helpers: adaptive Gauss-Legendre and spherical rules."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import lebedev_rule

from .errors import QuadratureError

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], cached."""
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def gl_interval(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def adaptive_gl(f, a: float, b: float, rtol: float = 1e-12, atol: float = 0.0,
                n: int = 16, max_panels: int = 4000) -> tuple[float, float]:
    """Composite Gauss-Legendre with panel bisection.

    ``f`` must be vectorised. Each panel is integrated with ``n`` and ``2n``
    nodes; panels whose two estimates disagree by more than their share of the
    tolerance are bisected. Returns (value, error estimate).
    """
    if a == b:
        return 0.0, 0.0
    stack = [(a, b)]
    total = 0.0
    err = 0.0
    done = 0
    # a coarse pass sets the scale for the relative tolerance
    xs, ws = gl_interval(a, b, 2 * n)
    scale = abs(float(np.dot(ws, f(xs))))
    width = b - a
    while stack:
        lo, hi = stack.pop()
        x1, w1 = gl_interval(lo, hi, n)
        x2, w2 = gl_interval(lo, hi, 2 * n)
        v1 = float(np.dot(w1, f(x1)))
        v2 = float(np.dot(w2, f(x2)))
        e = abs(v2 - v1)
        # the coarse pass can step over a narrow feature; let the scale catch up
        scale = max(scale, abs(v2))
        tol = max(rtol * scale, atol) * (hi - lo) / width
        if e <= tol or done > max_panels:
            total += v2
            err += e
            done += 1
            continue
        mid = 0.5 * (lo + hi)
        stack.append((mid, hi))
        stack.append((lo, mid))
    if not math.isfinite(total):
        raise QuadratureError("non-finite quadrature result", estimate=err)
    if done > max_panels and err > max(rtol * abs(total), atol):
        raise QuadratureError("adaptive quadrature did not converge", estimate=err)
    return total, err


def sphere_rule(d: int, n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m, d) and weights (m,) integrating over the unit sphere S^{d-1}.

    d=1: the two points {-1, +1} with unit weights (counting measure).
    d=2: trapezoid on the angle. d=3: Lebedev rule of the given order.
    """
    if d == 1:
        return np.array([[-1.0], [1.0]]), np.array([1.0, 1.0])
    if d == 2:
        m = 256 if n is None else int(n)
        ang = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        return np.column_stack([np.cos(ang), np.sin(ang)]), np.full(m, 2.0 * np.pi / m)
    if d == 3:
        order = 41 if n is None else int(n)
        x, w = lebedev_rule(order)
        return np.ascontiguousarray(x.T), np.asarray(w)
    raise ValueError(f"unsupported dimension {d}")


def sphere_area(d: int) -> float:
    """Surface measure of S^{d-1}; counting measure (2) for d=1."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
