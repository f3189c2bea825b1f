"""Density of the frozen process by Fourier inversion.

With the freezing pair (T, y) fixed, the frozen process started at x at
time t is Gaussian-free Lévy with time-dependent linear map
sigma(u, theta_{u,T}(y)). Its density at time s is

    p~(t, s, x, z) = (2 pi)^-d int exp(-i <zeta, z - x - m>) exp(Phi(zeta)) dzeta,
    Phi(zeta)      = int_t^s phi(sigma(u, theta_{u,T}(y))^T zeta) du,

where m = theta_{s,T}(y) - theta_{t,T}(y) is the frozen drift displacement
(zero unless the drift is Lipschitz, in which case the frozen process follows
the flow).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ._quad import adaptive_gl, gauss_legendre, gl_interval, sphere_rule
from .errors import ConfigurationError, PrecisionError, QuadratureError, ResolutionError
from .flow import Coefficients, FlowPath, flow
from .levy import LevyModel, exponent

EXP_CUT = 1e-12
LOG_EXP_CUT = math.log(EXP_CUT)
MAX_GRID_POINTS = 1 << 24


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpaceGrid:
    """Uniform lattice; axis a has nodes center + (k - N/2) h, h = 2 L / N."""

    center: tuple
    half_width: tuple
    n_points: tuple

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.center))
        L = tuple(float(v) for v in np.atleast_1d(self.half_width))
        n = tuple(int(v) for v in np.atleast_1d(self.n_points))
        if len(L) == 1 and len(c) > 1:
            L = L * len(c)
        if len(n) == 1 and len(c) > 1:
            n = n * len(c)
        if not (len(c) == len(L) == len(n)) or len(c) not in (1, 2, 3):
            raise ConfigurationError("grid axes inconsistent")
        for k in n:
            if k < 8 or k & (k - 1):
                raise ConfigurationError("points per axis must be a power of two and at least 8", n=k)
        if any(v <= 0 for v in L):
            raise ConfigurationError("half width must be positive")
        if math.prod(n) > MAX_GRID_POINTS:
            raise ConfigurationError("grid exceeds the memory cap", points=math.prod(n))
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", L)
        object.__setattr__(self, "n_points", n)

    @classmethod
    def line(cls, center: float, half_width: float, n: int) -> "SpaceGrid":
        return cls((center,), (half_width,), (n,))

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def shape(self) -> tuple:
        return self.n_points

    @property
    def spacing(self) -> np.ndarray:
        return 2.0 * np.array(self.half_width) / np.array(self.n_points)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def nyquist(self) -> np.ndarray:
        return np.pi / self.spacing

    def axes(self) -> list[np.ndarray]:
        return [c + (np.arange(n) - n // 2) * h
                for c, n, h in zip(self.center, self.n_points, self.spacing)]

    def nodes(self) -> np.ndarray:
        """Array of shape (*shape, d)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def refined(self, factor: int = 2) -> "SpaceGrid":
        return SpaceGrid(self.center, self.half_width, tuple(n * factor for n in self.n_points))

    def index_of(self, point) -> tuple:
        """Index of a point that must be a lattice node."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for a, (c, n, h) in enumerate(zip(self.center, self.n_points, self.spacing)):
            k = (p[a] - c) / h + n // 2
            kr = int(round(k))
            if abs(k - kr) > 1e-9 or not 0 <= kr < n:
                raise ResolutionError("point is not a grid node", point=p.tolist())
            idx.append(kr)
        return tuple(idx)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "half_width": list(self.half_width),
                "n_points": list(self.n_points)}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceGrid":
        return cls(tuple(d["center"]), tuple(d["half_width"]), tuple(d["n_points"]))


@dataclass(eq=False)
class DensityField:
    grid: SpaceGrid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)

    def at(self, z) -> np.ndarray:
        """Multilinear interpolation; points outside the grid are refused."""
        z = np.asarray(z, dtype=float)
        if self.grid.d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        axes = self.grid.axes()
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        if np.any(z < lo - 1e-12) or np.any(z > hi + 1e-12):
            raise ResolutionError("query outside the grid; use the pbar tail instead")
        interp = RegularGridInterpolator(axes, self.values, method="linear")
        return interp(np.clip(z, lo, hi))

    def to_csv(self, path) -> None:
        path = Path(path)
        pts = self.grid.nodes().reshape(-1, self.grid.d)
        cols = [f"x{a}" for a in range(self.grid.d)] + ["value"]
        data = np.column_stack([pts, self.values.reshape(-1)])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
        sidecar = {"grid": self.grid.to_dict(), "meta": self.meta}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "DensityField":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        grid = SpaceGrid.from_dict(side["grid"])
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(grid, data[:, -1].reshape(grid.shape), side["meta"])


# ---------------------------------------------------------------------------
# frozen exponent
# ---------------------------------------------------------------------------

def freezing_flow(coeffs: Coefficients, T: float, y, t: float, steps: int | None = None) -> FlowPath:
    """theta_{u,T}(y) for u in [t, T]."""
    return flow(coeffs, y, T, t, steps)


def _sigma_constant_in_time(coeffs: Coefficients) -> bool:
    return coeffs.space_constant_sigma and coeffs.time_homogeneous or (
        coeffs.time_homogeneous and not coeffs.has_flow)


def frozen_sigmas(coeffs: Coefficients, t: float, s: float, path: FlowPath, n: int):
    """Gauss-Legendre nodes on [t, s] and the matrices sigma(u, theta_{u,T}(y))."""
    u, w = gl_interval(t, s, n)
    theta = path.at(u)
    sig = np.stack([np.asarray(coeffs.sigma(ui, th[None]))[0] for ui, th in zip(u, theta)])
    return u, w, sig


def frozen_exponent(model: LevyModel, coeffs: Coefficients, t: float, s: float, T: float, y, p,
                    flow_path: FlowPath | None = None, n_time_nodes: int = 16,
                    richardson: bool = True) -> np.ndarray:
    """Phi(p) = int_t^s phi(sigma(u, theta_{u,T}(y))^T p) du, vectorised over p."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if s < t:
        raise ConfigurationError("need s >= t")
    path = freezing_flow(coeffs, T, y, min(t, T)) if flow_path is None else flow_path
    if not path.covers(t, s):
        raise ConfigurationError("flow path does not cover [t, s]",
                                 span=[float(path.times[0]), float(path.times[-1])], t=t, s=s)
    p = np.asarray(p, dtype=float)
    if model.d == 1 and (p.ndim == 0 or p.shape[-1] != 1):
        p = p[..., None]
    if s == t:
        return np.zeros(p.shape[:-1])[()]
    if _sigma_constant_in_time(coeffs):
        sig = np.asarray(coeffs.sigma(t, path.at(t)[None]))[0]
        return (s - t) * np.asarray(exponent(model, p @ sig))

    def with_nodes(n):
        _, w, sig = frozen_sigmas(coeffs, t, s, path, n)
        return sum(wk * np.asarray(exponent(model, p @ sk)) for wk, sk in zip(w, sig))

    val = with_nodes(n_time_nodes)
    if not richardson:
        return val
    n = n_time_nodes
    while True:
        finer = with_nodes(2 * n)
        gap = float(np.max(np.abs(finer - val))) if np.size(val) else 0.0
        val, n = finer, 2 * n
        if gap <= 1e-10 * max(1.0, float(np.max(np.abs(val)))):
            return val
        if n >= 1024:
            raise PrecisionError("frozen exponent time quadrature did not settle", gap=gap)


def frozen_shift(coeffs: Coefficients, t: float, s: float, path: FlowPath) -> np.ndarray:
    """m = int_t^s F_frozen(u, theta_{u,T}(y)) du = theta_{s,T}(y) - theta_{t,T}(y)."""
    if not coeffs.has_flow:
        return np.zeros_like(path.anchor_point)
    return path.at(s) - path.at(t)


# ---------------------------------------------------------------------------
# grid inversion
# ---------------------------------------------------------------------------

def dual_frequencies(grid: SpaceGrid, pad: int = 2) -> list[np.ndarray]:
    return [2.0 * np.pi * np.fft.fftfreq(pad * n, h) for n, h in zip(grid.n_points, grid.spacing)]


def _dual_points(freqs: list[np.ndarray]) -> np.ndarray:
    return np.stack(np.meshgrid(*freqs, indexing="ij"), axis=-1)


def tail_shape(model: LevyModel, r) -> np.ndarray:
    """r^-(alpha+gamma) qbar(r): leading far-field profile used to extrapolate tails.

    The next term of the stable expansion is of relative order r^-alpha and
    negative, so matching at an edge overestimates slightly; an offset profile
    such as (1 + r/tau)^-(alpha+gamma) overestimates far more at a few scales.
    """
    r = np.asarray(r, dtype=float)
    return r ** (-(model.alpha + model.gamma)) * model.tempering(r)


def edge_tail(model: LevyModel, tau: float, r_edge: float, value: float) -> float:
    """Mass beyond r_edge of a 1-d profile matched to ``value`` at r_edge."""
    if value <= 0:
        return 0.0
    g = lambda v: np.exp(v) * tail_shape(model, np.exp(v))
    lo = math.log(r_edge)
    hi = lo + 1.0
    while float(tail_shape(model, math.exp(hi))) * math.exp(hi) > 1e-16 * value and hi < lo + 200:
        hi += 1.0
    integral, _ = adaptive_gl(g, lo, hi, rtol=1e-10)
    return value * integral / float(tail_shape(model, r_edge))


def time_scale(model: LevyModel, t: float, s: float) -> float:
    return (s - t) ** (1.0 / model.alpha)


def default_grid(model: LevyModel, coeffs: Coefficients, t: float, s: float, x, norm_tol: float = 5e-3,
                 sigma_bounds: tuple[float, float] | None = None) -> SpaceGrid:
    """A grid wide enough for the mass check and fine enough for the Nyquist check (d = 1)."""
    from .levy import tail_mass
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if model.d != 1:
        raise ConfigurationError("default_grid supports d = 1")
    lo_s, hi_s = (1.0 / coeffs.kappa, coeffs.kappa) if sigma_bounds is None else sigma_bounds
    # width: expected number of jumps beyond L/2 stays below norm_tol/4
    L = 1.0
    while (s - t) * tail_mass(model, L / (2.0 * hi_s)) > norm_tol / 4 and L < 1e6:
        L *= 2.0
    drift = abs(coeffs.drift_constant) * (s - t) if coeffs.drift_kind == "bounded" else 0.0
    L = max(L, 8.0 * hi_s * time_scale(model, t, s)) + drift
    # spacing: exp(Phi) below the cut at the Nyquist frequency
    zmax = 1.0
    while (s - t) * float(exponent(model, lo_s * zmax)) > LOG_EXP_CUT * 1.05:
        zmax *= 1.25
    h = math.pi / zmax
    n = 8
    while 2 * L / n > h:
        n *= 2
    return SpaceGrid.line(float(x[0]), L, n)


def frozen_density_grid(model: LevyModel, coeffs: Coefficients, t: float, s: float, T: float, y, x,
                        grid: SpaceGrid, pad: int = 2, norm_tol: float = 5e-3, clip_tol: float = 1e-6,
                        n_time_nodes: int = 16, check: bool = True) -> DensityField:
    """p~^{T,y}(t, s, x, .) on ``grid`` by zero-padded FFT.

    The frozen drift displacement enters as a phase, so the lattice need not
    be aligned with it. Negative ringing is clipped; large negatives, a
    non-negligible spectrum at the Nyquist frequency, or a mass defect beyond
    ``norm_tol`` (after an edge-matched tail estimate) raise
    :class:`ResolutionError`.
    """
    if not s > t:
        raise ConfigurationError("need s > t")
    if grid.d != model.d:
        raise ConfigurationError("grid dimension differs from the model")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    path = freezing_flow(coeffs, T, y, min(t, T))
    m = frozen_shift(coeffs, t, s, path)
    freqs = dual_frequencies(grid, pad)
    zeta = _dual_points(freqs)
    log_hat = np.asarray(frozen_exponent(model, coeffs, t, s, T, y, zeta, path, n_time_nodes))
    if check:
        edge = max(float(np.max(np.take(log_hat, [len(f) // 2], axis=a))) for a, f in enumerate(freqs))
        if edge > LOG_EXP_CUT:
            raise ResolutionError("spectrum not negligible at the Nyquist frequency; refine the grid",
                                  log_spectrum_at_nyquist=edge, spacing=grid.spacing.tolist())
    first = np.array([a[0] for a in grid.axes()])
    eps = first - x - m
    phase = np.zeros(zeta.shape[:-1])
    for a, f in enumerate(freqs):
        shape = [1] * grid.d
        shape[a] = -1
        phase = phase + (f * eps[a]).reshape(shape)
    spec = np.exp(log_hat - 1j * phase)
    full = np.fft.fftn(spec).real / np.prod([len(f) * h for f, h in zip(freqs, grid.spacing)])
    vals = full[tuple(slice(0, n) for n in grid.n_points)].copy()
    peak = float(vals.max())
    neg = vals < 0
    if np.any(vals < -clip_tol * peak):
        raise ResolutionError("negative density beyond the clip tolerance", min=float(vals.min()), peak=peak)
    clipped = float(-vals[neg].sum() * grid.cell_volume)
    vals[neg] = 0.0
    field_ = DensityField(grid, vals, {})
    mass = field_.mass
    tail = 0.0
    if grid.d == 1:
        tau = time_scale(model, t, s)
        c = float(x[0] + m[0])
        ax = grid.axes()[0]
        for k, r in ((0, c - ax[0]), (-1, ax[-1] - c)):
            if r > 0:
                tail += edge_tail(model, tau, r + 0.5 * grid.spacing[0], float(vals[k]))
    field_.meta = {"t": t, "s": s, "T": T, "y": y.tolist(), "x": x.tolist(), "shift": m.tolist(),
                   "mass": mass, "tail_estimate": tail, "clipped_mass": clipped, "pad": pad}
    if check and abs(mass + tail - 1.0) > norm_tol:
        raise ResolutionError("mass defect beyond tolerance; use a wider or finer grid",
                              mass=mass, tail_estimate=tail)
    return field_


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------

def _zeta_cutoff(log_hat_on_ray: Callable[[np.ndarray], np.ndarray]) -> float:
    z = 1.0
    while float(log_hat_on_ray(np.array([z]))[0]) > LOG_EXP_CUT:
        z *= 1.5
        if z > 1e12:
            raise QuadratureError("characteristic function does not decay")
    return z


def _oscillatory_radial(fun, w: float, zmax: float, n: int = 16) -> tuple[float, float]:
    """int_0^zmax cos(w rho) fun(rho) d rho with graded panels near 0."""
    width = zmax if w == 0 else min(zmax, math.pi / abs(w))
    brk = np.concatenate([[0.0], np.geomspace(width * 1e-9, width, 28)])
    if zmax > width:
        count = int(math.ceil((zmax - width) / width))
        if count > 200000:
            raise QuadratureError("too many oscillation panels", estimate=float("inf"), panels=count)
        brk = np.concatenate([brk, np.linspace(width, zmax, count + 1)[1:]])
    a, b = brk[:-1], brk[1:]
    x1, w1 = gauss_legendre(n)
    x2, w2 = gauss_legendre(2 * n)

    def rule(xn, wn):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        rho = mid[:, None] + half[:, None] * xn[None, :]
        vals = np.cos(w * rho) * fun(rho.ravel()).reshape(rho.shape)
        return float(np.sum(half[:, None] * wn[None, :] * vals))

    coarse, fine = rule(x1, w1), rule(x2, w2)
    return fine, abs(fine - coarse)


def frozen_density_point(model: LevyModel, coeffs: Coefficients, t: float, s: float, T: float, y, x, z,
                         n_time_nodes: int = 16, rel_tol: float = 1e-7) -> float:
    """p~^{T,y}(t, s, x, z) by direct quadrature in zeta.

    d = 1: one-sided cosine integral. d >= 2: radial cosine integrals along
    the spherical rule. The zeta range is cut where exp(Phi) < 1e-12.
    """
    if not s > t:
        raise ConfigurationError("need s > t")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    path = freezing_flow(coeffs, T, y, min(t, T))
    w = z - x - frozen_shift(coeffs, t, s, path)
    d = model.d

    def log_hat(pts):
        return np.asarray(frozen_exponent(model, coeffs, t, s, T, y, pts, path, n_time_nodes))

    if d == 1:
        fun = lambda rho: np.exp(log_hat(rho[:, None]))
        zmax = _zeta_cutoff(lambda r: log_hat(r[:, None]))
        val, err = _oscillatory_radial(fun, float(w[0]), zmax)
        val /= math.pi
        err /= math.pi
    else:
        nodes, qw = sphere_rule(d)
        val = err = 0.0
        for th, wt in zip(nodes, qw):
            ray = lambda r, th=th: log_hat(r[:, None] * th[None, :])
            zmax = _zeta_cutoff(ray)
            fun = lambda r, ray=ray: np.exp(ray(r)) * r ** (d - 1)
            v, e = _oscillatory_radial(fun, float(np.dot(th, w)), zmax)
            val += wt * v
            err += wt * e
        val /= (2.0 * math.pi) ** d
        err /= (2.0 * math.pi) ** d
    peak_scale = time_scale(model, t, s) ** (-d)
    if err > rel_tol * max(abs(val), 1e-6 * peak_scale):
        raise QuadratureError("frozen density quadrature did not converge", estimate=err)
    return max(val, 0.0)


def diagonal_value(model: LevyModel, coeffs: Coefficients, t: float, T: float, x, y, **kw) -> float:
    """p~(t, T, x, y) = p~^{T,y}(t, T, x, y), evaluated at theta_{t,T}(y) - x."""
    return frozen_density_point(model, coeffs, t, T, T, y, x, y, **kw)


# ---------------------------------------------------------------------------
# Dirac probe
# ---------------------------------------------------------------------------

class ProbeResult(NamedTuple):
    value: float
    core: float
    tail: float
    nodes: int


def dirac_probe(model: LevyModel, coeffs: Coefficients, f: Callable[[np.ndarray], np.ndarray], x,
                t: float, T: float, y_grid: SpaceGrid, radius_factor: float = 8.0) -> ProbeResult:
    """int f(y) p~^{T,y}(t, T, x, y) dy with the freezing point equal to the variable (d = 1).

    Nodes of ``y_grid`` inside |y - theta_{T,t}(x)| <= radius_factor (T-t)^(1/alpha)
    are integrated by the trapezoid rule; the two outer pieces use the decay
    profile of pbar matched to the density at the last node on each side.
    """
    from .flow import flow_map
    if model.d != 1:
        raise ConfigurationError("dirac_probe supports d = 1")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tau = time_scale(model, t, T)
    c = float(flow_map(coeffs, x, t, T)[0])
    R = radius_factor * tau
    ys = y_grid.axes()[0]
    inside = ys[np.abs(ys - c) <= R]
    if inside.size < 8:
        raise ResolutionError("too few probe nodes inside the ball; refine the grid", nodes=int(inside.size))
    dens = np.array([diagonal_value(model, coeffs, t, T, x, yk) for yk in inside])
    fv = np.asarray(f(inside), dtype=float)
    h = y_grid.spacing[0]
    core = h * (float(np.dot(fv, dens)) - 0.5 * (fv[0] * dens[0] + fv[-1] * dens[-1]))
    tail = 0.0
    for edge, sign, dv in ((inside[-1], 1.0, dens[-1]), (inside[0], -1.0, dens[0])):
        r0 = abs(edge - c)
        scale = dv / float(tail_shape(model, r0))
        g = lambda v: (np.exp(v) * tail_shape(model, np.exp(v)) * scale
                       * np.asarray(f(c + sign * np.exp(v)), dtype=float))
        lo = math.log(r0)
        tail += adaptive_gl(g, lo, lo + 40.0, rtol=1e-10)[0]
    return ProbeResult(core + tail, core, tail, int(inside.size))
