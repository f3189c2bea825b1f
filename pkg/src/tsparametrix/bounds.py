"""Bound profiles pbar, hbar, plow and empirical sandwich constants."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from ._quad import adaptive_gl
from .errors import ConfigurationError
from .flow import Coefficients, flow_map
from .levy import LevyModel, Tempering

Q_CASES = ("BoundedDrift_H1a", "BoundedDrift_H1b", "LipschitzDrift_H1a", "LipschitzDrift_H1b")
CONVENTIONS = ("TheoremMin", "ProofMax")


@dataclass(frozen=True, eq=False)
class QProfile:
    """Spatial profile Q in the upper bound.

    The theorem statement uses min(1, s, s^(gamma-1)) qbar(s) style factors
    while the kernel estimate in the proof uses the corresponding max; the
    default follows the proof. Under TheoremMin the profile must be
    non-increasing, otherwise construction fails.
    """

    case: str
    gamma: float
    qbar: Tempering
    convention: str = "ProofMax"

    def __post_init__(self):
        if self.case not in Q_CASES:
            raise ConfigurationError(f"unknown Q case {self.case!r}")
        if self.convention not in CONVENTIONS:
            raise ConfigurationError(f"unknown Q convention {self.convention!r}")
        if self.convention == "TheoremMin":
            s = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 1201)])
            if np.any(np.diff(self(s)) > 1e-12 * np.maximum(1.0, self(s)[:-1])):
                raise ConfigurationError("Q is not non-increasing under the theorem convention",
                                         case=self.case)

    @classmethod
    def for_model(cls, model: LevyModel, coeffs: Coefficients, convention: str = "ProofMax") -> "QProfile":
        drift = "LipschitzDrift" if coeffs.drift_kind == "lipschitz" else "BoundedDrift"
        return cls(f"{drift}_{model.flavor}", model.gamma, model.tempering, convention)

    def factor(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        pick = np.minimum if self.convention == "TheoremMin" else np.maximum
        one = np.ones_like(s)
        with np.errstate(divide="ignore"):
            sg = np.where(s > 0, s ** (self.gamma - 1.0), 0.0 if self.gamma > 1 else 1.0)
        if self.case == "BoundedDrift_H1a":
            return one
        if self.case == "BoundedDrift_H1b":
            return pick(one, sg)
        if self.case == "LipschitzDrift_H1a":
            return pick(one, s)
        return pick(pick(one, s), sg)

    def __call__(self, s) -> np.ndarray:
        return self.factor(s) * self.qbar(s)

    def to_dict(self) -> dict:
        return {"case": self.case, "gamma": self.gamma, "convention": self.convention}


def _dist(coeffs: Coefficients, t: float, T: float, x, y, orientation: str) -> np.ndarray:
    """Transported distance, vectorised over leading axes of x and y."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if orientation == "forward":
        return np.linalg.norm(y - flow_map(coeffs, x, t, T), axis=-1)
    if orientation == "backward":
        return np.linalg.norm(flow_map(coeffs, y, T, t) - x, axis=-1)
    raise ConfigurationError(f"unknown orientation {orientation!r}")


def _points(model: LevyModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if model.d == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        v = v[..., None]
    return v


def pbar_profile(model: LevyModel, q: Callable, elapsed: float, dist) -> np.ndarray:
    """(T-t)^(-d/alpha) (1 + dist/(T-t)^(1/alpha))^-(alpha+gamma) Q(dist)."""
    tau = elapsed ** (1.0 / model.alpha)
    dist = np.asarray(dist, dtype=float)
    return elapsed ** (-model.d / model.alpha) * (1.0 + dist / tau) ** (-(model.alpha + model.gamma)) * q(dist)


def pbar(model: LevyModel, coeffs: Coefficients, qprofile: QProfile, t: float, T: float, x, y,
         orientation: str = "forward") -> np.ndarray | float:
    if not T > t:
        raise ConfigurationError("need T > t")
    dist = _dist(coeffs, t, T, _points(model, x), _points(model, y), orientation)
    out = pbar_profile(model, qprofile, T - t, dist)
    return out[()] if np.ndim(out) == 0 else out


def singular_factor(model: LevyModel, coeffs: Coefficients, t: float, T: float, dist_backward,
                    delta_h: float = 1.0) -> np.ndarray:
    """(T-t)^(-1/alpha) 1{alpha > 1, F != 0} + min(delta_h, dist^(eta (alpha ^ 1)))/(T-t)."""
    dist_backward = np.asarray(dist_backward, dtype=float)
    first = (T - t) ** (-1.0 / model.alpha) if (model.alpha > 1 and coeffs.drift_kind != "zero") else 0.0
    beta = coeffs.eta * min(model.alpha, 1.0)
    return first + np.minimum(delta_h, dist_backward ** beta) / (T - t)


def hbar(model: LevyModel, coeffs: Coefficients, qprofile: QProfile, t: float, T: float, x, y,
         delta_h: float = 1.0) -> np.ndarray | float:
    if not T > t:
        raise ConfigurationError("need T > t")
    dist = _dist(coeffs, t, T, _points(model, x), _points(model, y), "backward")
    out = singular_factor(model, coeffs, t, T, dist, delta_h) * pbar_profile(model, qprofile, T - t, dist)
    return out[()] if np.ndim(out) == 0 else out


class LowerValue(NamedTuple):
    value: float
    applicable: bool


def plow(model: LevyModel, coeffs: Coefficients, t: float, T: float, x, y,
         radius_multiplier: float = 1.0) -> LowerValue:
    """Lower profile with q_low, gated on the ball around the displacement lying in A_low."""
    if model.lower_bound is None:
        raise ConfigurationError("model carries no lower-bound data")
    if not T > t:
        raise ConfigurationError("need T > t")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    disp = flow_map(coeffs, y, T, t) - x
    radius = radius_multiplier * (T - t) ** (1.0 / model.alpha)
    if not model.lower_bound.region.contains_ball(disp, radius):
        return LowerValue(0.0, False)
    dist = float(np.linalg.norm(disp))
    return LowerValue(float(pbar_profile(model, model.lower_bound.q_low, T - t, dist)), True)


# ---------------------------------------------------------------------------
# smoothing integral
# ---------------------------------------------------------------------------

class SmoothingResult(NamedTuple):
    value: float
    fitted_omega: float
    elapsed: np.ndarray
    values: np.ndarray


def _smoothing_value(model, coeffs, qprofile, t, tau, x, delta_h) -> float:
    """int min(delta_h, |x - theta_{t,tau}(z)|^beta) pbar(t, tau, x, z) dz, d = 1."""
    beta = coeffs.eta * min(model.alpha, 1.0)
    elapsed = tau - t
    x = np.atleast_1d(np.asarray(x, dtype=float))
    c = float(flow_map(coeffs, x, t, tau)[0])
    scale = elapsed ** (1.0 / model.alpha)
    total = 0.0
    for sign in (1.0, -1.0):
        def g(v, sign=sign):
            z = c + sign * np.exp(v)
            dist = np.abs(x[0] - flow_map(coeffs, z[:, None], tau, t)[:, 0])
            cap = np.minimum(delta_h, dist ** beta) if delta_h > 0 else np.zeros_like(dist)
            fwd = np.abs(z - c)
            return np.exp(v) * cap * pbar_profile(model, qprofile, elapsed, fwd)
        lo = math.log(scale) - 40.0
        hi = math.log(scale) + 2.0
        while float(g(np.array([hi]))[0]) > 1e-18 * max(total, 1e-300) and hi < 700:
            hi += 2.0
        total += adaptive_gl(g, lo, hi, rtol=1e-11)[0]
    return total


def smoothing_integral(model: LevyModel, coeffs: Coefficients, qprofile: QProfile, t: float, tau: float,
                       x, delta_h: float = 1.0, ladder: tuple[int, ...] = (2, 3, 4, 5, 6)) -> SmoothingResult:
    """Value at (t, tau) plus the log-log slope over tau - t = 2^-k, k in ``ladder``.

    Integration is in the transported variable on log-distance panels around
    theta_{tau,t}(x), out to where the integrand is negligible (d = 1).
    """
    if not tau > t:
        raise ConfigurationError("need tau > t")
    if model.d != 1:
        raise ConfigurationError("smoothing_integral supports d = 1")
    value = _smoothing_value(model, coeffs, qprofile, t, tau, x, delta_h)
    el = np.array([2.0 ** -k for k in ladder])
    vals = np.array([_smoothing_value(model, coeffs, qprofile, t, t + e, x, delta_h) for e in el])
    if np.all(vals > 0):
        omega = float(np.polyfit(np.log(el), np.log(vals), 1)[0])
    else:
        omega = float("nan")
    return SmoothingResult(value, omega, el, vals)


# ---------------------------------------------------------------------------
# sandwich reports
# ---------------------------------------------------------------------------

@dataclass
class SandwichReport:
    c_upper: float
    c_lower: float | None
    region: dict
    refinement_stability: float | None = None
    c_upper_refined: float | None = None
    excluded_nodes: int = 0
    semigroup_constant: float | None = None

    @property
    def passed(self) -> bool:
        ok = math.isfinite(self.c_upper) and self.c_upper > 0
        if self.c_lower is not None:
            ok = ok and math.isfinite(self.c_lower) and self.c_lower > 0
        return ok

    def to_dict(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def sandwich_constants(values, bound, lower=None, mask=None) -> tuple[float, float | None, int]:
    values = np.asarray(values, dtype=float)
    bound = np.asarray(bound, dtype=float)
    mask = np.ones(values.shape, bool) if mask is None else np.asarray(mask, bool)
    usable = mask & (bound > 0)
    excluded = int(np.count_nonzero(mask & ~(bound > 0)))
    c_up = float(np.max(np.abs(values[usable]) / bound[usable])) if np.any(usable) else float("nan")
    c_lo = None
    if lower is not None:
        lower = np.asarray(lower, dtype=float)
        lu = mask & (lower > 0)
        if np.any(lu & (values <= 0)):
            c_lo = float("inf")
        elif np.any(lu):
            c_lo = float(np.max(lower[lu] / values[lu]))
    return c_up, c_lo, excluded


def sandwich(field_, bound_fn: Callable[[np.ndarray], np.ndarray],
             lower_fn: Callable[[np.ndarray], np.ndarray] | None = None,
             region: Callable[[np.ndarray], np.ndarray] | None = None,
             refined=None) -> SandwichReport:
    """cUpper = sup |field| / bound and cLower = sup lower / field over ``region``.

    ``field_`` is anything with ``grid`` and ``values`` (density or kernel
    field); ``bound_fn`` and ``lower_fn`` map grid nodes (shape (..., d)) to
    values; ``refined`` is the same field on a refined grid.
    """
    def consts(f):
        nodes = f.grid.nodes()
        mask = None if region is None else region(nodes)
        low = None if lower_fn is None else lower_fn(nodes)
        return sandwich_constants(f.values, bound_fn(nodes), low, mask)

    c_up, c_lo, excl = consts(field_)
    report = SandwichReport(c_up, c_lo, {"grid": field_.grid.to_dict(),
                                          "restricted": region is not None}, excluded_nodes=excl)
    if refined is not None:
        c_ref, _, _ = consts(refined)
        report.c_upper_refined = c_ref
        report.refinement_stability = c_ref / c_up
    return report


def semigroup_constant(model: LevyModel, coeffs: Coefficients, qprofile: QProfile, t: float, tau: float,
                       T: float, x, ys) -> float:
    """max over y of int pbar(t,tau,x,z) pbar(tau,T,z,y) dz / pbar(t,T,x,y), by 1-d quadrature."""
    if model.d != 1:
        raise ConfigurationError("semigroup_constant supports d = 1")
    x = float(np.atleast_1d(x)[0])
    worst = 0.0
    s1 = (tau - t) ** (1 / model.alpha)
    s2 = (T - tau) ** (1 / model.alpha)
    for y in np.atleast_1d(np.asarray(ys, dtype=float)):
        def g(z):
            a = pbar(model, coeffs, qprofile, t, tau, x, z)
            b = pbar(model, coeffs, qprofile, tau, T, z[..., None], np.full(z.shape + (1,), y))
            return a * b
        pts = sorted({x, float(y)})
        width = 60.0 * max(s1, s2) + abs(y - x)
        brk = np.unique(np.concatenate([[pts[0] - width], pts, [pts[-1] + width]]))
        val = 0.0
        for a, b in zip(brk[:-1], brk[1:]):
            val += adaptive_gl(g, a, b, rtol=1e-10)[0]
        # power-law remainders beyond the window
        far = pbar(model, coeffs, qprofile, t, tau, x, brk[-1]) * pbar(model, coeffs, qprofile, tau, T, brk[-1], y)
        val += 2.0 * far * width / (2 * (model.alpha + model.gamma) - 1.0)
        worst = max(worst, val / float(pbar(model, coeffs, qprofile, t, T, x, y)))
    return worst
