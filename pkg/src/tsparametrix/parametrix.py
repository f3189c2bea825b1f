"""Parametrix kernel, time-space convolution and the series for the density.

The kernel is H(t, T, x, y) = (L_t - L~_t) p~^{T,y}(t, T, ., y)(x), where L_t
is the generator of the SDE and L~_t the generator of the frozen process. For
a symmetric Lévy measure both generators act on exponentials as Fourier
multipliers, which gives the representation used on grids:

    H = (2 pi)^-1 int e^{-i zeta (theta - x)}
          [i zeta (F(t,x) - F~) + phi(sigma(t,x) zeta) - phi(sigma(t,theta) zeta)] e^{Phi(zeta)} dzeta

with theta = theta_{t,T}(y). The point evaluator also offers the
physical-space split (drift, small jumps, large jumps) as an independent route.

The series engine works on a band-limited lattice (d = 1): every density and
kernel is represented by its trigonometric interpolant with the grid spacing,
so the frozen density at zero elapsed time is an exact lattice delta and all
kernels stay finite at coinciding times.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline

from ._quad import adaptive_gl, gauss_legendre
from .errors import AssumptionError, ConfigurationError, DivergenceError, PrecisionError, ResolutionError
from .flow import Coefficients
from .frozen import (DensityField, SpaceGrid, _zeta_cutoff, dual_frequencies, edge_tail, freezing_flow,
                     frozen_exponent, frozen_shift, time_scale)
from .levy import LevyModel, exponent


# ---------------------------------------------------------------------------
# point kernel
# ---------------------------------------------------------------------------

def _radial_panels(w: float, zmax: float) -> tuple[np.ndarray, np.ndarray]:
    width = zmax if w == 0 else min(zmax, math.pi / abs(w))
    brk = np.concatenate([[0.0], np.geomspace(width * 1e-9, width, 28)])
    if zmax > width:
        count = int(math.ceil((zmax - width) / width))
        brk = np.concatenate([brk, np.linspace(width, zmax, count + 1)[1:]])
    return brk[:-1], brk[1:]


def _fourier_integrals(fun, w: float, zmax: float, weights: list[Callable], n: int = 24):
    """int_0^zmax weight_k(rho, w) fun(rho) d rho for several weights, with error estimates."""
    a, b = _radial_panels(w, zmax)
    out = []
    for nodes in (n, 2 * n):
        xg, wg = gauss_legendre(nodes)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        rho = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
        base = fun(rho) * np.repeat(half, nodes) * np.tile(wg, a.size)
        out.append(np.array([float(np.dot(base, wt(rho))) for wt in weights]))
    return out[1], np.abs(out[1] - out[0])


@dataclass
class _PointContext:
    """Shared data for kernel evaluations at one (t, T, y)."""

    w: float
    theta: float
    log_hat: Callable
    zmax: float
    sig_theta: float
    f_fr: float


def _context(model, coeffs, t, T, x, y, n_time_nodes):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    path = freezing_flow(coeffs, T, y, t)
    theta = path.at(t)
    m = frozen_shift(coeffs, t, T, path)
    log_hat = lambda r: np.asarray(frozen_exponent(model, coeffs, t, T, T, y, r[:, None], path, n_time_nodes))
    zmax = _zeta_cutoff(log_hat)
    sig_theta = float(np.asarray(coeffs.sigma(t, theta[None]))[0, 0, 0])
    f_fr = float(coeffs.flow_drift(t, theta[None])[0, 0])
    # p~^{T,y}(t,T,x',y) = f(y - x' - m) with y - m = theta_{t,T}(y)
    return _PointContext(float(y[0] - m[0] - x[0]), float(theta[0]), log_hat, zmax, sig_theta, f_fr)


def kernel_H(model: LevyModel, coeffs: Coefficients, t: float, T: float, x, y, method: str = "fourier",
             n_time_nodes: int = 16, resolution: int = 1, micro: float = 1e-3,
             taylor_tol: float = 1e-8) -> float:
    """Parametrix kernel at one (x, y), d = 1.

    ``method="fourier"`` integrates the multiplier representation directly.
    ``method="split"`` applies the two generators in physical space: drift
    term by spectral differentiation, small jumps below (T-t)^(1/alpha) with
    a second-order Taylor expansion under ``micro`` times that scale, large
    jumps by radial quadrature, with p~ interpolated from a cached grid.
    ``resolution`` multiplies the quadrature panel counts.
    """
    if model.d != 1:
        raise ConfigurationError("kernel_H supports d = 1")
    if not T > t:
        raise ConfigurationError("need T > t")
    if model.alpha <= 1 and coeffs.drift_kind != "zero":
        raise ConfigurationError("alpha <= 1 requires F = 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ctx = _context(model, coeffs, t, T, x, y, n_time_nodes)
    sig_x = float(np.asarray(coeffs.sigma(t, x[None]))[0, 0, 0])
    dF = float(np.asarray(coeffs.drift(t, x[None]))[0, 0]) - ctx.f_fr
    if method == "fourier":
        return _kernel_fourier(model, ctx, sig_x, dF, resolution)
    if method == "split":
        return _kernel_split(model, ctx, sig_x, dF, resolution, micro, taylor_tol, T - t)
    raise ConfigurationError(f"unknown kernel method {method!r}")


def _kernel_fourier(model, ctx, sig_x, dF, resolution):
    w = ctx.w
    if sig_x == ctx.sig_theta and dF == 0.0:
        return 0.0

    def fun(rho):
        return np.exp(ctx.log_hat(rho))

    def jump(rho):
        return np.asarray(exponent(model, sig_x * rho)) - np.asarray(exponent(model, ctx.sig_theta * rho))

    weights = [lambda r: np.cos(w * r) * jump(r), lambda r: r * np.sin(w * r)]
    vals, errs = _fourier_integrals(fun, w, ctx.zmax, weights, n=24 * resolution)
    return float((vals[0] + dF * vals[1]) / math.pi)


def _spectral_derivatives(ctx, w, orders):
    """Derivatives of f(v) = (1/pi) int_0^inf cos(v rho) e^{Phi} d rho at v = w."""
    fun = lambda r: np.exp(ctx.log_hat(r))
    weights = []
    for k in orders:
        if k % 2 == 0:
            weights.append(lambda r, k=k: (-1) ** (k // 2) * r ** k * np.cos(w * r))
        else:
            weights.append(lambda r, k=k: (-1) ** ((k + 1) // 2) * r ** k * np.sin(w * r))
    vals, _ = _fourier_integrals(fun, w, ctx.zmax, weights)
    return vals / math.pi


def _cached_frozen_profile(model, ctx, tau, resolution):
    """f on a fine grid around 0, as a cubic spline; zero outside."""
    half = max(60.0 * tau, 4.0 * abs(ctx.w) + 20.0 * tau)
    h = min(math.pi / ctx.zmax, tau / 40.0) / resolution
    n = 8
    while 2 * half / n > h:
        n *= 2
    grid = SpaceGrid.line(0.0, half, n)
    freqs = dual_frequencies(grid, 2)[0]
    spec = np.exp(ctx.log_hat(np.abs(freqs)) + 1j * freqs * half)
    vals = np.fft.fft(spec).real[:n] / (2 * n * grid.spacing[0])
    ax = grid.axes()[0]
    return CubicSpline(ax, vals), ax[0], ax[-1]


def _kernel_split(model, ctx, sig_x, dF, resolution, micro, taylor_tol, elapsed):
    tau = elapsed ** (1.0 / model.alpha)
    w = ctx.w
    d1, d2, d4 = _spectral_derivatives(ctx, w, (1, 2, 4))
    # p~(x') = f(theta - x'), so d/dx' p~ = -f'
    drift = dF * (-d1) if model.alpha > 1 else 0.0
    spline, lo, hi = _cached_frozen_profile(model, ctx, tau, resolution)

    def f(v):
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        inside = (v >= lo) & (v <= hi)
        out[inside] = spline(v[inside])
        return out

    weight = model.spectral.weights[0]  # mass of each of the two atoms in d = 1
    alpha = model.alpha
    eps_m = micro * tau
    cut = tau

    def second_difference(sig):
        # int_0^inf [f(w - sig s) + f(w + sig s) - 2 f(w)] qbar(s) s^(-1-alpha) ds, per atom
        taylor = sig ** 2 * d2 * model.radial_integral(0.0, eps_m, 1.0 - alpha)
        remainder = sig ** 4 * abs(d4) / 12.0 * model.radial_integral(0.0, eps_m, 3.0 - alpha)
        if remainder > taylor_tol * max(abs(taylor), 1.0):
            raise PrecisionError("Taylor remainder above tolerance at the micro cutoff",
                                 remainder=remainder)

        def g(v):
            s = np.exp(v)
            return (f(w - sig * s) + f(w + sig * s) - 2.0 * f(w)) * np.exp(
                -alpha * v + model.tempering.log(s))

        near, _ = adaptive_gl(g, math.log(eps_m), math.log(cut), rtol=1e-10 / resolution, n=16 * resolution)
        far_hi = math.log(max(hi - lo, cut) / min(sig, 1.0) + cut)
        far, _ = adaptive_gl(g, math.log(cut), far_hi, rtol=1e-10 / resolution, n=16 * resolution)
        # beyond the cached support only -2 f(w) survives
        far += -2.0 * float(f(np.array(w))) * model.radial_integral(math.exp(far_hi), math.inf, -1.0 - alpha)
        return taylor + near + far

    jumps = weight * (second_difference(sig_x) - second_difference(ctx.sig_theta))
    return float(drift + jumps)


# ---------------------------------------------------------------------------
# kernel fields
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class KernelField:
    grid: SpaceGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        DensityField(self.grid, self.values, self.meta).to_csv(path)


class LatticeKernels:
    """Band-limited frozen densities and kernels on a 1-d grid.

    With spacing h and FFT length P = pad N, a function with spectrum g is
    represented on the lattice by f(n h) = Re fft(g)[n] / (P h). Rows of all
    arrays are indexed by the freezing point y (grid node), columns by the
    lattice lag n = index(y) - index(z) mod P.
    """

    def __init__(self, model: LevyModel, coeffs: Coefficients, grid: SpaceGrid, pad: int = 2,
                 n_cheb: int = 12, filter_order: int | None = None):
        if model.d != 1 or grid.d != 1:
            raise ConfigurationError("the lattice engine supports d = 1")
        if coeffs.has_flow:
            raise ConfigurationError("the lattice engine supports zero or bounded drifts")
        if not coeffs.time_homogeneous:
            raise ConfigurationError("the lattice engine needs a time-homogeneous sigma")
        if pad < 2:
            raise ConfigurationError("pad must be at least 2 so lags do not wrap")
        self.model, self.coeffs, self.grid = model, coeffs, grid
        self.N = grid.n_points[0]
        self.h = float(grid.spacing[0])
        self.P = pad * self.N
        self.zeta = dual_frequencies(grid, pad)[0]
        self.nodes = grid.axes()[0]
        self.sig = np.asarray(coeffs.sigma(0.0, self.nodes[:, None]))[:, 0, 0]
        idx = np.arange(self.N)
        self.lag = (idx[None, :] - idx[:, None]) % self.P  # [z, y]
        self.rows = idx[None, :]
        phi = np.asarray(exponent(model, self.zeta))
        self.rate = np.asarray(exponent(model, self.sig[:, None] * self.zeta[None, :]))  # (N, P)
        self.sig_const = float(np.ptp(self.sig)) == 0.0
        self.homogeneous = model.untempered
        self.phi = phi
        if not self.sig_const and not self.homogeneous:
            lo, hi = float(self.sig.min()), float(self.sig.max())
            k = np.arange(n_cheb)
            self.cheb = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * (2 * k + 1) / (2 * n_cheb))
            self.cheb_phi = np.asarray(exponent(model, self.cheb[:, None] * self.zeta[None, :]))
            # barycentric Lagrange basis evaluated at sigma(z)
            bw = (-1.0) ** k * np.sin(np.pi * (2 * k + 1) / (2 * n_cheb))
            diff = self.sig[:, None] - self.cheb[None, :]
            exact = np.isclose(diff, 0.0, atol=1e-15)
            with np.errstate(divide="ignore", invalid="ignore"):
                basis = (bw / diff) / np.sum(bw / diff, axis=1, keepdims=True)
            for i, j in zip(*np.nonzero(exact)):
                basis[i] = 0.0
                basis[i, j] = 1.0
            self.basis = basis  # (N_z, n_cheb)
        self.scale = 1.0 / (self.P * self.h)
        # exponential filter on kernel multipliers: removes the derivative jump at +-Nyquist
        if filter_order:
            self.filt = np.exp(-36.0 * (np.abs(self.zeta) / (np.pi / self.h)) ** filter_order)
        else:
            self.filt = np.ones_like(self.zeta)
        probe = np.linspace(grid.center[0] - grid.half_width[0], grid.center[0] + grid.half_width[0], 17)
        drift_free = coeffs.drift_kind == "zero" or not np.any(
            np.asarray(coeffs.drift(0.0, probe[:, None])) != 0)
        self.vanishing = self.sig_const and drift_free

    def _fft(self, spec: np.ndarray) -> np.ndarray:
        return np.fft.fft(spec, axis=-1).real * self.scale

    def _gather(self, arr: np.ndarray) -> np.ndarray:
        return arr[self.rows, self.lag]  # [z, y]

    def density_rows(self, gap: float) -> np.ndarray:
        """Lattice values f_y(n h) of the frozen density after elapsed time ``gap``."""
        return self._fft(np.exp(gap * self.rate))

    def diagonal(self, gap: float, x_index: int) -> np.ndarray:
        """p~^{s,y}(t, s, x, y) over y, with s - t = gap."""
        dens = self.density_rows(gap)
        lags = (np.arange(self.N) - x_index) % self.P
        return dens[np.arange(self.N), lags]

    def _kernel_from(self, E: np.ndarray, u: float, real: bool) -> np.ndarray:
        """Assemble H[z, y] from the per-row time factor E[y, q] of the frozen spectrum."""
        fft = self._fft if real else (lambda spec: np.fft.fft(spec, axis=-1) * self.scale)
        F = np.asarray(self.coeffs.drift(u, self.nodes[:, None]))[:, 0]
        H = np.zeros((self.N, self.N), dtype=float if real else complex)
        if np.any(F != 0):
            H += F[:, None] * self._gather(fft(1j * self.zeta[None, :] * E))
        if self.sig_const:
            return H
        if self.homogeneous:
            a = self.model.alpha
            G = self._gather(fft(self.phi[None, :] * E))
            H += (self.sig[:, None] ** a - self.sig[None, :] ** a) * G
            return H
        for k in range(self.cheb.size):
            H += self.basis[:, k:k + 1] * self._gather(fft(self.cheb_phi[k][None, :] * E))
        H -= self._gather(fft(self.rate * E))
        return H

    def matrix(self, u: float, gap: float) -> np.ndarray:
        """H(u, u + gap, z, y) as an (N_z, N_y) matrix."""
        return self._kernel_from(np.exp(gap * self.rate) * self.filt[None, :], u, real=True)

    def laplace(self, lam: complex, x_index: int) -> tuple[np.ndarray, np.ndarray]:
        """Laplace transforms in the elapsed time of the diagonal frozen row and of H.

        Each lattice mode of the frozen spectrum is exp(g R[y, q]); its
        transform is 1 / (lam - R[y, q]).
        """
        A = 1.0 / (lam - self.rate)
        row = np.fft.fft(A, axis=-1) * self.scale
        diag = row[np.arange(self.N), (np.arange(self.N) - x_index) % self.P]
        return diag, self._kernel_from(A * self.filt[None, :], 0.0, real=False)

    def kernel_slice(self, t: float, T: float, y_index: int) -> np.ndarray:
        """H(t, T, x, y) over the grid in x for a fixed node y."""
        return self.matrix(t, T - t)[:, y_index]


def kernel_field(model: LevyModel, coeffs: Coefficients, t: float, T: float, y, grid: SpaceGrid,
                 pad: int = 2) -> KernelField:
    """x-slice of H at a grid node y, from the lattice representation."""
    lk = LatticeKernels(model, coeffs, grid, pad)
    j = grid.index_of(y)[0]
    return KernelField(grid, lk.kernel_slice(t, T, j), {"t": t, "T": T, "y": float(grid.axes()[0][j]),
                                                         "orientation": "x-slice"})


# ---------------------------------------------------------------------------
# time meshes and the convolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConvolutionScheme:
    """Time nodes on [t, T] with density proportional to ((u-t)(T-u))^(g-1).

    The mesh is the image of ``n`` uniform cells of [0, 1] under the
    Beta(g, g) quantile function. ``closed=False`` (default) places ``order``
    Gauss-Legendre points in each cell of the uniform variable, so endpoints
    are never evaluated and weights carry the Jacobian of the map; integrable
    endpoint singularities (T-u)^(w-1) become smooth for g <= w. ``closed=True``
    keeps the mesh edges with trapezoid weights (used by the lattice sweep,
    where every integrand is finite).
    """

    t: float
    T: float
    n: int
    g: float = 0.5
    closed: bool = False
    grid: SpaceGrid | None = None
    order: int = 4

    def __post_init__(self):
        if not 0 < self.g <= 1:
            raise ConfigurationError("grading exponent must lie in (0, 1]", g=self.g)
        if self.n < 2:
            raise ConfigurationError("need at least two time cells")

    def _map(self, v: np.ndarray) -> np.ndarray:
        return v if self.g == 1 else special.betaincinv(self.g, self.g, v)

    @property
    def edges(self) -> np.ndarray:
        e = self.t + (self.T - self.t) * self._map(np.arange(self.n + 1) / self.n)
        e[0], e[-1] = self.t, self.T
        return e

    def _open_rule(self) -> tuple[np.ndarray, np.ndarray]:
        xg, wg = gauss_legendre(self.order)
        lo = np.arange(self.n) / self.n
        v = (lo[:, None] + 0.5 * (1.0 + xg[None, :]) / self.n).ravel()
        wv = np.tile(wg, self.n) * 0.5 / self.n
        frac = self._map(v)
        if self.g == 1:
            jac = np.ones_like(v)
        else:
            # d frac / d v = 1 / beta_pdf(frac), evaluated in logs to avoid overflow near the ends
            with np.errstate(divide="ignore"):
                logpdf = (self.g - 1.0) * (np.log(frac) + np.log1p(-frac)) - special.betaln(self.g, self.g)
            jac = np.exp(-logpdf)
        return self.t + (self.T - self.t) * frac, (self.T - self.t) * wv * jac

    @property
    def nodes(self) -> np.ndarray:
        return self.edges if self.closed else self._open_rule()[0]

    @property
    def weights(self) -> np.ndarray:
        if self.closed:
            e = self.edges
            w = np.zeros(e.size)
            w[:-1] += 0.5 * np.diff(e)
            w[1:] += 0.5 * np.diff(e)
            return w
        return self._open_rule()[1]

    def partial_weights(self, j: int) -> np.ndarray:
        """Closed trapezoid weights on nodes 0..j (integral up to node j)."""
        e = self.edges[: j + 1]
        w = np.zeros(j + 1)
        if j == 0:
            return w
        w[:-1] += 0.5 * np.diff(e)
        w[1:] += 0.5 * np.diff(e)
        return w

    def with_grading(self, g: float) -> "ConvolutionScheme":
        return ConvolutionScheme(self.t, self.T, self.n, g, self.closed, self.grid, self.order)

    def doubled(self) -> "ConvolutionScheme":
        return ConvolutionScheme(self.t, self.T, 2 * self.n, self.g, self.closed, self.grid, self.order)


def _convolve_once(left, right, scheme: ConvolutionScheme, h: float) -> np.ndarray:
    total = None
    for u, w in zip(scheme.nodes, scheme.weights):
        a = np.asarray(left(u), dtype=float)
        b = np.asarray(right(u), dtype=float)
        piece = a @ b * h
        if not np.all(np.isfinite(piece)):
            raise ResolutionError("non-finite value in the convolution", u=float(u))
        total = w * piece if total is None else total + w * piece
    return total


MIN_GRADING = 0.25  # below this the Beta quantile rounds to the endpoints in double precision


def convolve(left: Callable[[float], np.ndarray], right: Callable[[float], np.ndarray],
             scheme: ConvolutionScheme, rel_tol: float = 1e-3) -> np.ndarray:
    """int_t^T du int f(t,u,x,z) g(u,T,z,y) dz on a graded mesh.

    ``left(u)`` returns f over z (shape (N,) or (K, N)); ``right(u)`` returns
    g as an (N_z, N_y) matrix, or (N,) for a single y. Spatial integration is
    the trapezoid rule on the scheme's grid. If doubling the cell count moves
    the result by more than ``rel_tol`` (relative sup) the grading exponent
    is halved, down to 0.25.
    """
    if scheme.grid is None:
        raise ConfigurationError("the scheme needs a spatial grid")
    h = scheme.grid.cell_volume
    current = scheme
    while True:
        coarse = _convolve_once(left, right, current, h)
        fine = _convolve_once(left, right, current.doubled(), h)
        scale = float(np.max(np.abs(fine)))
        if scale == 0.0 or float(np.max(np.abs(fine - coarse))) <= rel_tol * scale:
            return fine
        if current.g / 2 < MIN_GRADING:
            raise PrecisionError("time quadrature did not settle", change=float(np.max(np.abs(fine - coarse))),
                                 scale=scale)
        current = current.with_grading(current.g / 2)


# ---------------------------------------------------------------------------
# the series
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SeriesState:
    """Series terms at the final time on a 1-d grid started from the grid center."""

    grid: SpaceGrid
    terms: list
    norms: list
    partial_sum: DensityField
    converged: bool
    r_used: int
    meta: dict = field(default_factory=dict)

    @property
    def x(self) -> float:
        return self.grid.center[0]

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for r, term in enumerate(self.terms):
            term.to_csv(d / f"term_{r:02d}.csv")
        self.partial_sum.to_csv(d / "partial_sum.csv")
        manifest = {"norms": self.norms, "converged": self.converged, "r_used": self.r_used,
                    "grid": self.grid.to_dict(), "meta": self.meta}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "SeriesState":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        terms = [DensityField.from_csv(d / f"term_{r:02d}.csv") for r in range(len(man["norms"]))]
        ps = DensityField.from_csv(d / "partial_sum.csv")
        return cls(SpaceGrid.from_dict(man["grid"]), terms, man["norms"], ps, man["converged"],
                   man["r_used"], man["meta"])


def _sweep(lk: LatticeKernels, scheme: ConvolutionScheme, x_index: int, r_max: int, rel_tol: float):
    """All series terms at every mesh time, forward in the final time.

    term_r(s_j) = sum_{i <= j} w_ij sum_z term_{r-1}(u_i, z) H(u_i, s_j, z, .) h
    """
    nodes = scheme.edges
    M = nodes.size - 1
    N = lk.N
    reuse = scheme.g == 1 and lk.coeffs.time_homogeneous
    cache: dict = {}
    terms = np.zeros((r_max + 1, M + 1, N))
    for j in range(M + 1):
        terms[0, j] = lk.diagonal(nodes[j] - nodes[0], x_index)
    if lk.vanishing:
        return terms
    for j in range(1, M + 1):
        w = scheme.partial_weights(j)
        for i in range(j + 1):
            gap = nodes[j] - nodes[i]
            key = j - i
            if reuse and key in cache:
                H = cache[key]
            else:
                H = lk.matrix(nodes[i], gap)
                if reuse:
                    cache[key] = H
            if i < j:
                terms[1:, j] += w[i] * lk.h * (terms[:-1, i] @ H)
            else:
                for r in range(1, r_max + 1):
                    terms[r, j] += w[i] * lk.h * (terms[r - 1, j] @ H)
        if not reuse:
            cache.clear()
    return terms


def _talbot_nodes(n: int, elapsed: float):
    """Fixed Talbot contour: nodes lam_k and weights with f(T) ~ Re sum w_k F(lam_k)."""
    r = 2.0 * n / (5.0 * elapsed)
    theta = np.arange(1, n) * np.pi / n
    cot = 1.0 / np.tan(theta)
    lam = np.concatenate([[r], r * theta * (cot + 1j)])
    sig = theta + (theta * cot - 1.0) * cot
    w = np.concatenate([[0.5 * np.exp(r * elapsed)], np.exp(elapsed * lam[1:]) * (1.0 + 1j * sig)]) * r / n
    return lam, w


def _laplace_terms(lk: LatticeKernels, elapsed: float, x_index: int, r_max: int, n_nodes: int) -> np.ndarray:
    lam, w = _talbot_nodes(n_nodes, elapsed)
    out = np.zeros((r_max + 1, lk.N))
    for lk_, wk in zip(lam, w):
        v, K = lk.laplace(lk_, x_index)
        for r in range(r_max + 1):
            out[r] += (wk * v).real
            if r < r_max:
                v = lk.h * (v @ K)
    return out


def series(model: LevyModel, coeffs: Coefficients, t: float, T: float, grid: SpaceGrid, r_max: int = 10,
           rel_tol: float = 1e-6, method: str = "laplace", n_time: int | None = None, g: float = 1.0, pad: int = 2,
           richardson_tol: float = 1e-3, check_assumptions: bool = True,
           filter_order: int | None = None) -> SeriesState:
    """Partial sums of sum_r p~ (x) H^(r) at the final time, started from x = grid center.

    On the lattice every term is a convolution in the elapsed time, so
    ``method="laplace"`` evaluates term_r(T) = L^-1[D K^r] by a fixed Talbot
    contour with ``n_time`` nodes (default 12), checked against ``2 n_time``
    nodes; more nodes lose digits to cancellation on the contour.
    ``method="sweep"`` marches forward in the final time on a closed mesh
    with n, 2n and 4n cells (default n = 32) and Richardson-extrapolates consecutive pairs;
    g = 1 (uniform) reuses kernels across equal gaps and the grading is
    halved while the two extrapolants of term 1 differ by more than
    ``richardson_tol``.
    """
    if not T > t:
        raise ConfigurationError("need T > t")
    meta: dict = {"t": t, "T": T, "x": grid.center[0], "pad": pad, "method": method,
                  "filter_order": filter_order}
    if check_assumptions:
        from .levy import validate_assumptions
        report = validate_assumptions(model, coeffs)
        if not report.all_passed:
            raise AssumptionError("standing assumptions failed", report=report.to_dict())
        meta["assumptions"] = "passed"
    else:
        meta["assumptions"] = "not checked (caller override)"
    if n_time is None:
        n_time = 12 if method == "laplace" else 32
    x_index = grid.n_points[0] // 2
    lk = LatticeKernels(model, coeffs, grid, pad, filter_order=filter_order)
    started = time.perf_counter()
    if method == "laplace":
        coarse = _laplace_terms(lk, T - t, x_index, r_max, n_time)
        final = _laplace_terms(lk, T - t, x_index, r_max, 2 * n_time)
        scale = float(np.max(np.abs(final[1])))
        gap = float(np.max(np.abs(final[1] - coarse[1]))) / scale if scale > 0 else 0.0
        meta.update({"n_time": 2 * n_time, "contour_check": gap, "richardson_ok": gap <= richardson_tol})
        # term 0 is the lattice frozen density itself, not its transform
        final[0] = lk.diagonal(T - t, x_index)
    elif method == "sweep":
        scheme = ConvolutionScheme(t, T, n_time, g, closed=True, grid=grid)
        history = []
        while True:
            runs = [_sweep(lk, sch, x_index, r_max, rel_tol)
                    for sch in (scheme, scheme.doubled(), scheme.doubled().doubled())]
            # the trapezoid error is O(step^2): extrapolate twice, compare the two extrapolants
            ext = [(4.0 * fine[:, -1] - coarse[:, -1]) / 3.0 for coarse, fine in zip(runs[:-1], runs[1:])]
            scale = float(np.max(np.abs(ext[1][1])))
            gap = float(np.max(np.abs(ext[1][1] - ext[0][1]))) / scale if scale > 0 else 0.0
            history.append({"g": scheme.g, "n_time": scheme.n, "richardson": gap})
            if gap <= richardson_tol or scheme.g <= 0.125:
                break
            scheme = scheme.with_grading(scheme.g / 2)
        final = ext[1]
        final[0] = runs[-1][0, -1]
        meta.update({"n_time": 4 * scheme.n, "g": scheme.g, "richardson_history": history,
                     "richardson_ok": history[-1]["richardson"] <= richardson_tol})
    else:
        raise ConfigurationError(f"unknown series method {method!r}")
    meta["seconds"] = time.perf_counter() - started
    return _assemble(model, coeffs, grid, t, T, final, rel_tol, meta)


def _assemble(model, coeffs, grid, t, T, final, rel_tol, meta) -> SeriesState:
    norms = [float(np.max(np.abs(v))) for v in final]
    # stopping rule
    partial = np.zeros_like(final[0])
    r_used = len(final) - 1
    stopped = False
    for r, v in enumerate(final):
        partial = partial + v
        if r >= 1 and norms[r] <= rel_tol * float(np.max(np.abs(partial))):
            r_used, stopped = r, True
            break
    # divergence: three consecutive increases of the term norms
    rises = 0
    for a, b in zip(norms[1:r_used], norms[2:r_used + 1]):
        rises = rises + 1 if b > a else 0
        if rises >= 3:
            raise DivergenceError("series term norms increase", norms=norms)
    ratios = [norms[r + 2] / norms[r] for r in range(1, r_used - 1) if norms[r] > 0]
    # factorial envelope ratio_r <= c / ceil(r/2); c is the smallest constant that fits
    c_fit = max((rho * math.ceil(r / 2) for r, rho in enumerate(ratios, start=1)), default=None)
    envelope_ok = all(rho < 1.0 for rho in ratios)
    converged = stopped and envelope_ok
    clip_tol = 1e-3 * float(np.max(partial))
    if np.any(partial < -clip_tol):
        meta["negative_min"] = float(partial.min())
    values = np.maximum(partial, 0.0)
    tau = time_scale(model, t, T)
    ax = grid.axes()[0]
    x = grid.center[0]
    tail = sum(edge_tail(model, tau, abs(ax[k] - x) + 0.5 * grid.spacing[0], float(values[k])) for k in (0, -1))
    mass = float(values.sum() * grid.cell_volume)
    meta.update({"mass": mass, "tail_estimate": tail, "mass_total": mass + tail, "ratios": ratios,
                 "envelope_constant": c_fit, "stopped": stopped})
    terms = [DensityField(grid, v.copy(), {"r": r}) for r, v in enumerate(final[: r_used + 1])]
    # wall-clock time stays out of the field sidecars so reruns write identical files
    field_meta = {k: v for k, v in meta.items() if k != "seconds"}
    for term in terms:
        term.meta.update({"t": t, "T": T, "x": field_meta["x"]})
    return SeriesState(grid, terms, norms[: r_used + 1], DensityField(grid, values, field_meta),
                       converged, r_used, meta)


def evaluator(state: SeriesState, outside: float = float("nan")) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised partial-sum interpolant returning ``outside`` beyond the grid."""
    ax = state.grid.axes()[0]

    def fn(points):
        p = np.asarray(points, dtype=float).reshape(-1)
        out = np.full(p.shape, outside)
        inside = (p >= ax[0]) & (p <= ax[-1])
        out[inside] = np.interp(p[inside], ax, state.partial_sum.values)
        return out

    return fn


def density(state: SeriesState, x, y) -> np.ndarray | float:
    """Series density at y (interpolated); x must be the start point of the run."""
    x = float(np.atleast_1d(x)[0])
    if abs(x - state.x) > 1e-12 * max(1.0, abs(x)):
        raise ConfigurationError("the series was computed for a different start point", x=state.x)
    out = state.partial_sum.at(y)
    return out[()] if np.ndim(out) == 0 else out
