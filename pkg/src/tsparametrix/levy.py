"""The driving Lévy process.

The Lévy measure is given in polar form

    nu(A) = int_S int_0^inf 1_A(s theta) qbar(s) / s^(1+alpha) ds mu(dtheta),

with a finite symmetric spectral measure ``mu`` on the unit sphere and a
non-increasing tempering ``qbar`` normalised to ``qbar(0) = 1``. Everything in
this module works from that representation: the characteristic exponent, the
large-jump rate and law, the small-jump covariance, ball masses, and the
sampled assumption checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, interpolate, special

from ._quad import adaptive_gl, gl_interval, sphere_rule
from .errors import ConfigurationError, QuadratureError

TAIL_CUT = 1e-14


# ---------------------------------------------------------------------------
# spectral measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Finite symmetric measure on S^{d-1}.

    ``kind == "atomic"``: point masses ``weights`` at ``directions``.
    ``kind == "density"``: ``density`` w.r.t. surface measure; ``directions``
    and ``weights`` then hold a spherical quadrature rule with the density
    already folded into the weights.
    """

    kind: str
    directions: np.ndarray
    weights: np.ndarray
    density: Callable[[np.ndarray], np.ndarray] | None = None
    rule_order: int | None = None

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def atomic(cls, directions, weights) -> "SpectralMeasure":
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        if dirs.ndim == 2 and dirs.shape[0] == 1 and np.ndim(directions) == 1 and len(directions) > 1:
            # a flat list of 1-d directions such as [1, -1]
            dirs = dirs.T
        w = np.asarray(weights, dtype=float).ravel()
        if dirs.shape[0] != w.size:
            raise ConfigurationError("directions and weights differ in length",
                                     n_directions=dirs.shape[0], n_weights=w.size)
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ConfigurationError("atomic directions must be unit vectors",
                                     max_defect=float(np.max(np.abs(norms - 1.0))))
        if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ConfigurationError("spectral weights must be nonnegative with positive finite total")
        # symmetry: every atom must have a mirror with the same weight
        for i in range(dirs.shape[0]):
            gap = np.linalg.norm(dirs + dirs[i], axis=1)
            j = np.flatnonzero(gap < 1e-12)
            if j.size == 0 or not np.any(np.abs(w[j] - w[i]) <= 1e-12 * max(1.0, w[i])):
                raise ConfigurationError("spectral measure is not symmetric", atom=i)
        return cls("atomic", dirs, w)

    @classmethod
    def on_sphere(cls, d: int, density, order: int | None = None) -> "SpectralMeasure":
        """Density on the sphere; ``density`` maps (n, d) unit vectors to (n,)."""
        nodes, qw = sphere_rule(d, order)
        vals = np.asarray(density(nodes), dtype=float)
        if vals.shape != (nodes.shape[0],):
            raise ConfigurationError("density must map (n, d) points to (n,) values")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ConfigurationError("spectral density must be nonnegative and finite")
        mirror = np.asarray(density(-nodes), dtype=float)
        if np.any(np.abs(mirror - vals) > 1e-12 * max(1.0, float(np.max(vals)))):
            raise ConfigurationError("spectral density is not even")
        w = vals * qw
        if w.sum() <= 0:
            raise ConfigurationError("spectral density has zero mass")
        return cls("density", nodes, w, density=density, rule_order=order)

    @classmethod
    def uniform(cls, d: int, level: float, order: int | None = None) -> "SpectralMeasure":
        return cls.on_sphere(d, lambda th: np.full(th.shape[0], float(level)), order)

    def density_bound(self) -> float:
        """Upper bound for the density, used by the rejection sampler."""
        if self.kind != "density":
            raise ConfigurationError("atomic measure has no density")
        rng = np.random.default_rng(12345)
        pts = rng.standard_normal((4096, self.d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        vals = np.concatenate([self.density(pts), self.density(self.directions)])
        return 1.25 * float(np.max(vals))

    def cap_mass(self, theta, r: float) -> float:
        """mu of the cap {phi in S : |phi - theta| < r}."""
        theta = np.asarray(theta, dtype=float)
        theta = theta / np.linalg.norm(theta)
        if self.kind == "atomic":
            dist = np.linalg.norm(self.directions - theta, axis=1)
            return float(self.weights[dist < r].sum())
        d = self.d
        if d == 1:
            # density on {-1, +1} with counting measure
            return float(self.weights[np.linalg.norm(self.directions - theta, axis=1) < r].sum())
        beta = 2.0 * math.asin(min(1.0, r / 2.0))  # geodesic radius
        if r >= 2.0:
            beta = math.pi
        if d == 2:
            ang0 = math.atan2(theta[1], theta[0])
            a, w = gl_interval(ang0 - beta, ang0 + beta, 64)
            pts = np.column_stack([np.cos(a), np.sin(a)])
            return float(np.dot(w, self.density(pts)))
        # d == 3: polar coordinates around theta
        e1 = np.cross(theta, [1.0, 0.0, 0.0])
        if np.linalg.norm(e1) < 1e-6:
            e1 = np.cross(theta, [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(theta, e1)
        b, wb = gl_interval(0.0, beta, 32)
        p, wp = gl_interval(0.0, 2.0 * math.pi, 64)
        B, P = np.meshgrid(b, p, indexing="ij")
        pts = (np.cos(B)[..., None] * theta
               + np.sin(B)[..., None] * (np.cos(P)[..., None] * e1 + np.sin(P)[..., None] * e2))
        vals = self.density(pts.reshape(-1, 3)).reshape(B.shape)
        return float(np.einsum("i,j,ij->", wb, wp, vals * np.sin(B)))

    def sample_directions(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "atomic" or self.d == 1:
            idx = rng.choice(self.weights.size, size=n, p=self.weights / self.weights.sum())
            return self.directions[idx]
        bound = self.density_bound()
        out = np.empty((n, self.d))
        filled = 0
        while filled < n:
            m = max(64, 2 * (n - filled))
            pts = rng.standard_normal((m, self.d))
            pts /= np.linalg.norm(pts, axis=1, keepdims=True)
            keep = rng.random(m) * bound < self.density(pts)
            take = pts[keep][: n - filled]
            out[filled:filled + take.shape[0]] = take
            filled += take.shape[0]
        return out

    def to_dict(self) -> dict:
        if self.kind == "atomic":
            return {"kind": "atomic", "directions": self.directions.tolist(),
                    "weights": self.weights.tolist()}
        return {"kind": "density", "rule_order": self.rule_order,
                "total_mass": self.total_mass}


# ---------------------------------------------------------------------------
# tempering
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Tempering:
    """Radial damping qbar, non-increasing with qbar(0) = 1."""

    kind: str = "none"
    m: float | None = None
    knots: np.ndarray | None = None
    values: np.ndarray | None = None
    doubling_constant: float | None = None
    _interp: object = field(default=None, repr=False)

    @classmethod
    def none(cls) -> "Tempering":
        return cls("none")

    @classmethod
    def polynomial(cls, m: float, doubling_constant: float | None = None) -> "Tempering":
        if not m > 0:
            raise ConfigurationError("polynomial tempering exponent must be positive", m=m)
        t = cls("polynomial", m=float(m), doubling_constant=doubling_constant)
        t.check()
        return t

    @classmethod
    def tabulated(cls, knots, values, doubling_constant: float | None = None) -> "Tempering":
        k = np.asarray(knots, dtype=float)
        v = np.asarray(values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise ConfigurationError("tabulated tempering needs matching 1-d knots and values")
        if np.any(np.diff(k) <= 0) or k[0] < 0:
            raise ConfigurationError("tempering knots must be increasing and nonnegative")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ConfigurationError("tabulated tempering values must be positive")
        v = v / v[0]
        interp = interpolate.PchipInterpolator(k, np.log(v), extrapolate=False)
        t = cls("tabulated", knots=k, values=v, doubling_constant=doubling_constant, _interp=interp)
        t.check()
        return t

    @classmethod
    def exponential(cls, rate: float, s_max: float = 200.0) -> "Tempering":
        """exp(-rate s), tabulated; violates doubling, so only usable under H1a."""
        knots = np.concatenate([[0.0], np.geomspace(1e-6, s_max, 600)])
        return cls.tabulated(knots, np.exp(-rate * knots))

    def log(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "none":
            return np.zeros_like(s)
        if self.kind == "polynomial":
            return -np.log1p(s ** self.m)
        k, lv = self.knots, np.log(self.values)
        out = np.empty_like(s)
        lo = s <= k[0]
        hi = s >= k[-1]
        mid = ~(lo | hi)
        out[lo] = 0.0
        out[mid] = self._interp(s[mid])
        slope = min(0.0, (lv[-1] - lv[-2]) / (k[-1] - k[-2]))
        out[hi] = lv[-1] + slope * (s[hi] - k[-1])
        return out

    def __call__(self, s) -> np.ndarray:
        if self.kind == "none":
            return np.ones_like(np.asarray(s, dtype=float))
        if self.kind == "polynomial":
            return 1.0 / (1.0 + np.asarray(s, dtype=float) ** self.m)
        return np.exp(self.log(s))

    def sample_grid(self) -> np.ndarray:
        return np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 1201)])

    def measured_doubling(self, s_max: float = 1e3) -> float:
        """sup over sampled s <= s_max of qbar(s)/qbar(2s)."""
        s = np.geomspace(1e-6, s_max, 901)
        with np.errstate(over="ignore"):  # exponential tails: the ratio is unbounded
            return float(np.exp(np.max(self.log(s) - self.log(2.0 * s))))

    def check(self) -> None:
        s = self.sample_grid()
        lq = self.log(s)
        if abs(lq[0]) > 1e-12:
            raise ConfigurationError("tempering must satisfy qbar(0) = 1")
        if np.any(np.diff(lq) > 1e-12):
            raise ConfigurationError("tempering must be non-increasing")
        if self.doubling_constant is not None:
            c = self.measured_doubling()
            if not c <= self.doubling_constant * (1 + 1e-9):
                raise ConfigurationError("tempering violates its doubling constant",
                                         declared=self.doubling_constant, measured=c)

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "doubling_constant": self.doubling_constant}
        if self.kind == "polynomial":
            out["m"] = self.m
        if self.kind == "tabulated":
            out["knots"] = self.knots.tolist()
            out["values"] = self.values.tolist()
        return out


# ---------------------------------------------------------------------------
# lower-bound data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AllSpace:
    def contains_ball(self, center, radius: float) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class Cone:
    """Union of circular cones with the given axes and half-angle (radians)."""

    directions: np.ndarray
    half_angle: float

    def contains_ball(self, center, radius: float) -> bool:
        c = np.atleast_1d(np.asarray(center, dtype=float))
        rho = float(np.linalg.norm(c))
        if radius >= rho:
            return False
        spread = math.asin(radius / rho)
        for e in np.atleast_2d(self.directions):
            e = e / np.linalg.norm(e)
            ang = math.acos(max(-1.0, min(1.0, float(np.dot(c, e)) / rho)))
            if ang + spread <= self.half_angle:
                return True
        return False


@dataclass(frozen=True)
class LowerBound:
    q_low: Tempering
    region: AllSpace | Cone = AllSpace()


class ClosedForm(NamedTuple):
    kind: str  # "isotropic_stable" | "relativistic"
    c: float = 1.0


# ---------------------------------------------------------------------------
# the model
# ---------------------------------------------------------------------------

def stable_constant(alpha: float) -> float:
    """c_alpha with int_0^inf (1 - cos(a s)) s^(-1-alpha) ds = c_alpha |a|^alpha."""
    if abs(alpha - 1.0) < 1e-14:
        return math.pi / 2
    return math.gamma(1.0 - alpha) * math.cos(math.pi * alpha / 2) / alpha


@dataclass(frozen=True, eq=False)
class LevyModel:
    d: int
    alpha: float
    spectral: SpectralMeasure
    tempering: Tempering = field(default_factory=Tempering.none)
    gamma: float | None = None
    flavor: str = "H1a"
    closed_form: ClosedForm | None = None
    lower_bound: LowerBound | None = None
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ConfigurationError("dimension must be 1, 2 or 3", d=self.d)
        if not 0.0 < self.alpha < 2.0:
            raise ConfigurationError("alpha must lie in (0, 2)", alpha=self.alpha)
        if self.spectral.d != self.d:
            raise ConfigurationError("spectral measure dimension mismatch")
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(self.d))
        if not 1.0 <= self.gamma <= self.d:
            raise ConfigurationError("gamma must lie in [1, d]", gamma=self.gamma)
        if self.flavor == "H1a":
            if self.gamma != self.d:
                raise ConfigurationError("flavor H1a forces gamma = d", gamma=self.gamma, d=self.d)
        elif self.flavor == "H1b":
            if not self.gamma + self.alpha > self.d:
                raise ConfigurationError("flavor H1b requires gamma + alpha > d")
            if self.tempering.doubling_constant is None:
                raise ConfigurationError("flavor H1b requires a doubling constant on the tempering")
        else:
            raise ConfigurationError(f"unknown flavor {self.flavor!r}")
        if self.closed_form is not None and self.closed_form.kind not in ("isotropic_stable", "relativistic"):
            raise ConfigurationError("unknown closed-form exponent tag")

    @property
    def untempered(self) -> bool:
        return self.tempering.kind == "none"

    def radial_density(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.tempering(s) * s ** (-1.0 - self.alpha)

    # -- radial integrals ---------------------------------------------------

    def radial_integral(self, lo: float, hi: float, power: float) -> float:
        """int_lo^hi s^power qbar(s) ds, with lo = 0 or hi = inf allowed."""
        p1 = power + 1.0
        q = self.tempering

        def g(v):
            return np.exp(p1 * v + q.log(np.exp(v)))

        extra = 0.0
        if lo == 0.0:
            if p1 <= 0:
                return math.inf
            v_hi = math.log(hi) if math.isfinite(hi) else 0.0
            v_lo = v_hi + math.log(1e-16) / p1
            s_lo = math.exp(v_lo)
            extra += float(q(np.array(s_lo))) * s_lo ** p1 / p1
        else:
            v_lo = math.log(lo)
        if math.isfinite(hi):
            v_hi = math.log(hi)
        else:
            if p1 >= 0:
                return math.inf
            # march outward until the untempered remainder bound is negligible
            v_hi = max(v_lo, 0.0) + 1.0
            base = float(g(np.array(v_lo)))
            while True:
                s_hi = math.exp(v_hi)
                bound = float(q(np.array(s_hi))) * s_hi ** p1 / (-p1)
                if bound < TAIL_CUT * max(base, 1e-300) or q.kind == "none":
                    break
                v_hi += 1.0
                if v_hi > 700:
                    raise QuadratureError("radial tail did not decay", estimate=bound)
            if q.kind == "none":
                extra += s_hi ** p1 / (-p1)
            else:
                extra += 0.0  # remainder below TAIL_CUT relative
        if v_hi <= v_lo:
            return extra
        val, err = adaptive_gl(g, v_lo, v_hi, rtol=1e-13)
        if err > 1e-9 * max(abs(val), 1e-300):
            raise QuadratureError("radial quadrature did not converge", estimate=err)
        return val + extra

    # -- radial exponent profile ---------------------------------------------

    def psi_direct(self, a: float) -> float:
        """int_0^inf (cos(a s) - 1) qbar(s) s^(-1-alpha) ds by quadrature."""
        a = abs(float(a))
        if a == 0.0:
            return 0.0
        alpha = self.alpha
        q = self.tempering
        S = math.pi / a

        def g(v):
            s = np.exp(v)
            return 2.0 * np.sin(0.5 * a * s) ** 2 * np.exp(-alpha * v + q.log(s))

        v_hi = math.log(S)
        v_lo = v_hi + math.log(1e-17) / (2.0 - alpha)
        s_lo = math.exp(v_lo)
        near, err = adaptive_gl(g, v_lo, v_hi, rtol=1e-13)
        near += 0.5 * a * a * s_lo ** (2.0 - alpha) / (2.0 - alpha)
        tail = self.radial_integral(S, math.inf, -1.0 - alpha)
        scale = near + tail
        with warnings.catch_warnings():
            # convergence is judged from the returned error estimate below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            osc, oerr = integrate.quad(lambda s: float(q(np.array(s))) * s ** (-1.0 - alpha),
                                       S, np.inf, weight="cos", wvar=a, limlst=200,
                                       epsabs=1e-13 * scale)
        if oerr > 1e-8 * scale or err > 1e-9 * scale:
            raise QuadratureError("exponent quadrature did not converge",
                                  estimate=max(oerr, err), a=a)
        return -(near + tail - osc)

    def _psi_table(self):
        tab = self._cache.get("psi")
        if tab is None:
            la = np.linspace(math.log(1e-5), math.log(1e5), 241)
            vals = np.array([self.psi_direct(math.exp(v)) for v in la])
            if np.any(vals >= 0):
                raise QuadratureError("tabulated exponent is not negative")
            spline = interpolate.CubicSpline(la, np.log(-vals))
            lo_slope = float(spline(la[0], 1))
            hi_slope = float(spline(la[-1], 1))
            tab = (la, spline, lo_slope, hi_slope)
            self._cache["psi"] = tab
        return tab

    def psi(self, a) -> np.ndarray:
        """Radial exponent profile, vectorised; symmetric in a."""
        a = np.abs(np.asarray(a, dtype=float))
        if self.untempered:
            return -stable_constant(self.alpha) * a ** self.alpha
        la, spline, lo_slope, hi_slope = self._psi_table()
        out = np.zeros_like(a)
        pos = a > 0
        x = np.log(a[pos])
        y = np.empty_like(x)
        lo = x < la[0]
        hi = x > la[-1]
        mid = ~(lo | hi)
        y[mid] = spline(x[mid])
        y[lo] = spline(la[0]) + lo_slope * (x[lo] - la[0])
        y[hi] = spline(la[-1]) + hi_slope * (x[hi] - la[-1])
        out[pos] = -np.exp(y)
        return out


def _as_frequencies(model: LevyModel, zeta) -> np.ndarray:
    z = np.asarray(zeta, dtype=float)
    if model.d == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != model.d:
        raise ConfigurationError("frequency dimension mismatch", expected=model.d, got=z.shape[-1])
    if not np.all(np.isfinite(z)):
        raise ConfigurationError("frequencies must be finite")
    return z


def exponent(model: LevyModel, zeta) -> np.ndarray | float:
    """Characteristic exponent phi(zeta) = int (cos<zeta, xi> - 1) nu(dxi).

    ``zeta`` has trailing axis d (for d = 1 a bare array of scalars is also
    accepted); the result drops that axis.
    """
    z = _as_frequencies(model, zeta)
    cf = model.closed_form
    if cf is not None:
        r = np.linalg.norm(z, axis=-1)
        if cf.kind == "isotropic_stable":
            out = -cf.c * r ** model.alpha
        else:
            out = -np.expm1(0.5 * model.alpha * np.log1p(r * r))
    else:
        proj = z @ model.spectral.directions.T
        out = model.psi(proj) @ model.spectral.weights
    return out[()] if out.ndim == 0 else out


def exponent_quadrature(model: LevyModel, zeta) -> np.ndarray | float:
    """Same as :func:`exponent` but always by direct radial quadrature."""
    z = _as_frequencies(model, zeta)
    flat = z.reshape(-1, model.d)
    proj = np.abs(flat @ model.spectral.directions.T)
    out = np.empty(flat.shape[0])
    for i, row in enumerate(proj):
        out[i] = sum(w * model.psi_direct(a) for a, w in zip(row, model.spectral.weights) if w > 0)
    out = out.reshape(z.shape[:-1])
    return out[()] if out.ndim == 0 else out


def tail_mass(model: LevyModel, delta: float) -> float:
    """nu({|z| >= delta})."""
    if not delta > 0:
        raise ConfigurationError("delta must be positive", delta=delta)
    return model.spectral.total_mass * model.radial_integral(delta, math.inf, -1.0 - model.alpha)


def small_jump_covariance(model: LevyModel, delta: float) -> np.ndarray:
    """int_{|z| < delta} z z^T nu(dz)."""
    if not delta > 0:
        raise ConfigurationError("delta must be positive", delta=delta)
    radial = model.radial_integral(0.0, delta, 1.0 - model.alpha)
    th = model.spectral.directions
    return radial * np.einsum("j,ja,jb->ab", model.spectral.weights, th, th)


class BallMass(NamedTuple):
    value: float
    support_miss: bool


def ball_mass(model: LevyModel, x, r: float, sigma=None) -> BallMass:
    """nu(B(x, r)), or nu({z : sigma z in B(x, r)}) when a matrix is given.

    Along each direction theta the ray s -> s v (v = sigma theta) meets the
    ball on an explicit interval of s, so the mass is a sum of 1-d radial
    integrals. An empty intersection is reported with ``support_miss``.
    """
    if not r > 0:
        raise ConfigurationError("radius must be positive", r=r)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    dirs = model.spectral.directions
    v = dirs if sigma is None else dirs @ np.asarray(sigma, dtype=float).reshape(model.d, model.d).T
    vv = np.einsum("ja,ja->j", v, v)
    b = (v @ x) / vv
    disc = b * b - (x @ x - r * r) / vv
    total = 0.0
    hit = False
    for j in range(dirs.shape[0]):
        w = model.spectral.weights[j]
        if w <= 0 or disc[j] <= 0:
            continue
        root = math.sqrt(disc[j])
        s1, s2 = b[j] - root, b[j] + root
        if s2 <= 0:
            continue
        hit = True
        if s1 <= 0:
            return BallMass(math.inf, False)
        total += w * model.radial_integral(s1, s2, -1.0 - model.alpha)
    return BallMass(total, not hit)


# ---------------------------------------------------------------------------
# large-jump sampling
# ---------------------------------------------------------------------------

def _radius_table(model: LevyModel, delta: float):
    key = ("icdf", float(delta))
    tab = model._cache.get(key)
    if tab is not None:
        return tab
    alpha = model.alpha
    total = model.radial_integral(delta, math.inf, -1.0 - alpha)
    # log-radius nodes until the relative tail is below 1e-13
    lv = [math.log(delta)]
    tails = [total]
    step = 1.0 / 40.0
    while tails[-1] > 1e-13 * total:
        a, b = lv[-1], lv[-1] + step
        x, w = gl_interval(a, b, 12)
        piece = float(np.dot(w, np.exp(-alpha * x + model.tempering.log(np.exp(x)))))
        lv.append(b)
        tails.append(tails[-1] - piece)
        if len(lv) > 200000:
            raise ConfigurationError("inverse-CDF table did not terminate")
    lv = np.array(lv)
    g = np.array(tails) / total
    ok = g > 0
    lv, g = lv[ok], g[ok]
    u = -np.log(g)
    if np.any(np.diff(u) <= 0):
        raise ConfigurationError("inverse-CDF table is not monotone", delta=delta)
    inv = interpolate.PchipInterpolator(u, lv)
    end_slope = (lv[-1] - lv[-2]) / (u[-1] - u[-2])
    tab = (u, lv, inv, end_slope)
    model._cache[key] = tab
    return tab


def sample_radius(model: LevyModel, delta: float, rng: np.random.Generator, size) -> np.ndarray:
    """Radii on [delta, inf) with density proportional to qbar(s) s^(-1-alpha)."""
    u_tab, lv, inv, end_slope = _radius_table(model, delta)
    e = rng.standard_exponential(size)  # -log of a uniform survival level
    out = np.empty_like(e)
    inside = e <= u_tab[-1]
    out[inside] = inv(e[inside])
    out[~inside] = lv[-1] + end_slope * (e[~inside] - u_tab[-1])
    return np.exp(out)


def sample_large_jump(model: LevyModel, delta: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw from nu restricted to {|z| >= delta}, normalised.

    Returns shape (d,) when ``size`` is None, else (size, d).
    """
    if not tail_mass(model, delta) > 0:
        raise ConfigurationError("no mass beyond delta", delta=delta)
    n = 1 if size is None else int(size)
    theta = model.spectral.sample_directions(rng, n)
    rad = sample_radius(model, delta, rng, n)
    out = theta * rad[:, None]
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# factories
# ---------------------------------------------------------------------------

def _sphere_abs_moment(d: int, alpha: float) -> float:
    """int_S |theta_1|^alpha dtheta (counting measure for d = 1)."""
    if d == 1:
        return 2.0
    return 2.0 * math.pi ** ((d - 1) / 2) * math.gamma((alpha + 1) / 2) / math.gamma((alpha + d) / 2)


def isotropic_stable(d: int, alpha: float, c: float = 1.0, tempering: Tempering | None = None,
                     flavor: str = "H1a", lower_bound: LowerBound | None = None,
                     order: int | None = None) -> LevyModel:
    """Rotation-invariant measure normalised so the untempered exponent is -c|zeta|^alpha.

    With tempering the same spectral measure is used and the exponent comes from
    quadrature; the closed form tag is only attached when untempered.
    """
    level = c / (stable_constant(alpha) * _sphere_abs_moment(d, alpha))
    if d == 1:
        spectral = SpectralMeasure.atomic([[1.0], [-1.0]], [level, level])
    else:
        spectral = SpectralMeasure.uniform(d, level, order)
    temp = Tempering.none() if tempering is None else tempering
    cf = ClosedForm("isotropic_stable", float(c)) if temp.kind == "none" else None
    if lower_bound is None and temp.kind == "none":
        lower_bound = LowerBound(Tempering.none(), AllSpace())
    return LevyModel(d, float(alpha), spectral, temp, float(d), flavor, cf, lower_bound,
                     name=f"isotropic_stable(d={d}, alpha={alpha})")


def relativistic_stable(d: int, alpha: float, order: int | None = None) -> LevyModel:
    """phi(zeta) = -((|zeta|^2 + 1)^(alpha/2) - 1).

    The Lévy density is A K_nu(r) / r^nu with nu = (d + alpha)/2, so the
    tempering is qbar(s) = K_nu(s) s^nu / (Gamma(nu) 2^(nu-1)). It decays
    exponentially, hence flavor H1a with gamma = d and A_low the whole space.
    """
    nu = 0.5 * (d + alpha)
    amp = alpha * 2.0 ** ((alpha - d) / 2) / (math.pi ** (d / 2) * math.gamma(1.0 - alpha / 2))
    j0 = amp * math.gamma(nu) * 2.0 ** (nu - 1.0)
    knots = np.concatenate([[0.0], np.geomspace(1e-8, 400.0, 2001)])
    logq = np.log(special.kve(nu, knots[1:])) - knots[1:] + nu * np.log(knots[1:])
    logq -= math.lgamma(nu) + (nu - 1.0) * math.log(2.0)
    logq = np.minimum(logq, 0.0)
    values = np.exp(np.concatenate([[0.0], logq]))
    temp = Tempering.tabulated(knots, values)
    if d == 1:
        spectral = SpectralMeasure.atomic([[1.0], [-1.0]], [j0, j0])
    else:
        spectral = SpectralMeasure.uniform(d, j0, order)
    lb = LowerBound(temp, AllSpace())
    return LevyModel(d, float(alpha), spectral, temp, float(d), "H1a",
                     ClosedForm("relativistic"), lb, name=f"relativistic_stable(d={d}, alpha={alpha})")


def product_stable(d: int, alpha: float, c: float = 1.0, tempering: Tempering | None = None) -> LevyModel:
    """Independent 1-d stable coordinates: atoms at +-e_i, gamma = 1 (flavor H1b).

    Only admissible when 1 + alpha > d.
    """
    w = c / (2.0 * stable_constant(alpha))
    dirs = np.vstack([np.eye(d), -np.eye(d)])
    temp = tempering if tempering is not None else Tempering("none", doubling_constant=1.0)
    if temp.doubling_constant is None:
        raise ConfigurationError("product model is H1b and needs a doubling constant")
    return LevyModel(d, float(alpha), SpectralMeasure.atomic(dirs, np.full(2 * d, w)), temp,
                     1.0, "H1b" if d > 1 else "H1a", None, None,
                     name=f"product_stable(d={d}, alpha={alpha})")


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToleranceSet:
    """Sample sizes and thresholds for :func:`validate_assumptions`."""

    zeta_range: tuple[float, float] = (1.0, 100.0)
    n_zeta: int = 25
    n_space: int = 41
    space_extent: float = 5.0
    times: tuple[float, ...] = (0.0, 0.5, 1.0)
    cap_radii: tuple[float, ...] = (0.05, 0.1, 0.2, 0.4)
    holder_cap: float = 1.0
    h5_ratio_cap: float = 1e6
    seed: int = 7


@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "sampled pass" | "skipped"
    measured: dict = field(default_factory=dict)
    message: str = ""

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "sampled pass", "skipped")


@dataclass
class AssumptionReport:
    checks: list[Check]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed,
                "checks": [{"name": c.name, "status": c.status, "measured": c.measured,
                            "message": c.message} for c in self.checks]}


def _zeta_sample(d: int, lo: float, hi: float, n: int, rng) -> np.ndarray:
    radii = np.geomspace(lo, hi, n)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = rng.standard_normal((16 if d == 2 else 32, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        dirs = np.vstack([np.eye(d), dirs])
    return (radii[:, None, None] * dirs[None]).reshape(-1, d)


def validate_assumptions(model: LevyModel, coeffs, tol: ToleranceSet | None = None) -> AssumptionReport:
    """Sampled check of the standing assumptions; never raises on failure."""
    tol = ToleranceSet() if tol is None else tol
    rng = np.random.default_rng(tol.seed)
    d = model.d
    checks: list[Check] = []

    # H1: symmetric, no Gaussian part, tempering shape and concentration
    doubling = model.tempering.doubling_constant
    measured_doubling = model.tempering.measured_doubling()
    h1_msgs = []
    status = "pass"
    if model.flavor == "H1b":
        if doubling is None or not measured_doubling <= doubling * (1 + 1e-9):
            status, _ = "fail", h1_msgs.append("doubling condition fails")
    thetas = model.spectral.directions[model.spectral.weights > 0]
    caps = []
    for r in tol.cap_radii:
        caps.append(max(model.spectral.cap_mass(th, r) for th in thetas[:64]))
    caps = np.array(caps)
    if np.all(caps > 0):
        slope = np.polyfit(np.log(tol.cap_radii), np.log(caps), 1)[0]
    else:
        slope = float("nan")
    gamma_fit = 1.0 + float(slope)
    if not gamma_fit >= model.gamma - 0.1:
        status = "fail"
        h1_msgs.append("spectral measure is more concentrated than the declared gamma")
    checks.append(Check("H1", status, {
        "flavor": model.flavor, "gamma": model.gamma, "gamma_fit": gamma_fit,
        "doubling_constant": doubling, "measured_doubling": measured_doubling,
        "spectral_mass": model.spectral.total_mass}, "; ".join(h1_msgs)))

    # H2: non-degeneracy constant K
    zs = _zeta_sample(d, tol.zeta_range[0], tol.zeta_range[1], tol.n_zeta, rng)
    ratios = -np.asarray(exponent(model, zs)) / np.linalg.norm(zs, axis=1) ** model.alpha
    K = float(np.min(ratios))
    checks.append(Check("H2", "pass" if K > 0 else "fail", {"K": K, "K_max": float(np.max(ratios))}))

    # spatial sample
    xs1 = np.linspace(-tol.space_extent, tol.space_extent, tol.n_space)
    if d == 1:
        xs = xs1[:, None]
    else:
        xs = rng.uniform(-tol.space_extent, tol.space_extent, (tol.n_space * 4, d))
    xs = np.vstack([xs, np.zeros((1, d))])

    # H3: drift regime and sigma regularity
    fvals = np.concatenate([np.asarray(coeffs.drift(t, xs)).ravel() for t in tol.times])
    drift_nonzero = coeffs.drift_kind != "zero" or bool(np.any(fvals != 0))
    sig = np.stack([np.asarray(coeffs.sigma(t, xs)) for t in tol.times])
    sig_sup = float(np.max(np.abs(sig)))
    i, j = np.triu_indices(xs.shape[0], 1)
    dist = np.linalg.norm(xs[i] - xs[j], axis=1)
    good = dist > 0
    diff = np.max(np.abs(sig[:, i] - sig[:, j]).reshape(len(tol.times), i.size, -1), axis=(0, 2))
    holder = float(np.max(diff[good] / dist[good] ** coeffs.eta))
    msgs = []
    status = "pass"
    if model.alpha <= 1.0 and drift_nonzero:
        status = "fail"
        msgs.append("alpha <= 1 requires F = 0")
    if not np.isfinite(fvals).all() or (coeffs.drift_kind == "bounded"
                                        and np.max(np.abs(fvals)) > coeffs.drift_constant * (1 + 1e-9)):
        status = "fail"
        msgs.append("drift exceeds its declared bound")
    if coeffs.holder_constant > 0 and holder > coeffs.holder_constant * (1 + 1e-6):
        status = "fail"
        msgs.append("sigma exceeds its declared Hölder constant")
    checks.append(Check("H3", status, {"drift_kind": coeffs.drift_kind, "drift_nonzero": drift_nonzero,
                                       "sigma_sup": sig_sup, "holder_measured": holder,
                                       "holder_declared": coeffs.holder_constant, "eta": coeffs.eta},
                        "; ".join(msgs)))

    # H4: uniform ellipticity
    sym = 0.5 * (sig + np.swapaxes(sig, -1, -2))
    eig = np.linalg.eigvalsh(sym.reshape(-1, d, d))
    lo, hi = float(eig.min()), float(eig.max())
    kappa = max(hi, 1.0 / lo) if lo > 0 else math.inf
    ok = lo > 0 and kappa <= coeffs.kappa * (1 + 1e-9)
    checks.append(Check("H4", "pass" if ok else "fail",
                        {"kappa_measured": kappa, "kappa_declared": coeffs.kappa,
                         "rayleigh_min": lo, "rayleigh_max": hi}))

    # H5: sampled comparison of image measures on balls
    sup_ratio = 0.0
    eta_eff = coeffs.eta * min(model.alpha, 1.0)
    pts = xs[:: max(1, xs.shape[0] // 9)]
    centers = []
    for rad in (0.5, 1.0, 2.0, 4.0):
        for th in model.spectral.directions[:8]:
            centers.append(rad * th)
        if d > 1:
            v = rng.standard_normal(d)
            centers.append(rad * v / np.linalg.norm(v))
    infinite = False
    for t in tol.times[:1]:
        smat = np.asarray(coeffs.sigma(t, pts))
        for c in centers:
            r = 0.25 * float(np.linalg.norm(c))
            ref = ball_mass(model, c, r).value
            masses = [ball_mass(model, c, r, sigma=smat[k]).value for k in range(pts.shape[0])]
            for a in range(len(masses)):
                for b in range(a + 1, len(masses)):
                    gap = abs(masses[a] - masses[b])
                    if gap == 0:
                        continue
                    h = min(tol.holder_cap, float(np.linalg.norm(pts[a] - pts[b])) ** eta_eff)
                    if ref == 0:
                        infinite = True
                        continue
                    sup_ratio = max(sup_ratio, gap / (ref * h))
    ok = (not infinite) and sup_ratio <= tol.h5_ratio_cap
    checks.append(Check("H5", "sampled pass" if ok else "fail",
                        {"sup_ratio": math.inf if infinite else sup_ratio, "delta_scale": tol.holder_cap},
                        "image measure charges a set the dominating measure does not" if infinite else ""))

    # H-LB: tail rate and ball lower bound
    if model.lower_bound is not None:
        deltas = np.geomspace(1e-3, 1.0, 7)
        tail_c = max(tail_mass(model, dl) * dl ** model.alpha for dl in deltas)
        region = model.lower_bound.region
        lb_ratios = []
        for rad in (0.25, 0.5, 1.0, 2.0, 4.0):
            for th in model.spectral.directions[:8]:
                x = rad * th
                for frac in (0.1, 0.25):
                    r = frac * rad
                    if not region.contains_ball(x, r):
                        continue
                    bm = ball_mass(model, x, r).value
                    target = r ** model.gamma * float(model.lower_bound.q_low(np.array(rad))) / rad ** (
                        model.alpha + model.gamma)
                    lb_ratios.append(bm / target)
        c_lb = float(min(lb_ratios)) if lb_ratios else float("nan")
        ok = bool(lb_ratios) and c_lb > 0
        checks.append(Check("HLB", "sampled pass" if ok else "fail",
                            {"tail_constant": tail_c, "ball_constant": c_lb}))
    else:
        checks.append(Check("HLB", "skipped", {}, "no lower-bound data"))
    return AssumptionReport(checks)
