"""SDE coefficients and the deterministic flow of the drift ODE."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ConfigurationError, FlowIntegrationError

DEFAULT_STEPS_PER_UNIT = 64
DRIFT_KINDS = ("zero", "bounded", "lipschitz")


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Drift F(t, x) and dispersion sigma(t, x).

    Both callables are vectorised over leading axes: ``x`` has shape (..., d),
    ``drift`` returns (..., d) and ``sigma`` returns (..., d, d).
    ``drift_constant`` is the bound M for bounded drifts and the Lipschitz
    constant L for Lipschitz drifts.
    """

    d: int
    drift: Callable[[float, np.ndarray], np.ndarray]
    sigma: Callable[[float, np.ndarray], np.ndarray]
    drift_kind: str = "zero"
    drift_constant: float = 0.0
    kappa: float = 1.0
    eta: float = 1.0
    holder_constant: float = 0.0
    time_homogeneous: bool = True
    space_constant_sigma: bool = False
    name: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.drift_kind not in DRIFT_KINDS:
            raise ConfigurationError(f"unknown drift kind {self.drift_kind!r}")
        if not self.kappa >= 1.0:
            raise ConfigurationError("kappa must be at least 1", kappa=self.kappa)
        if not 0.0 < self.eta <= 1.0:
            raise ConfigurationError("eta must lie in (0, 1]", eta=self.eta)

    def flow_drift(self, t: float, x: np.ndarray) -> np.ndarray:
        """Drift used for the freezing flow: F for Lipschitz drifts, else 0."""
        if self.drift_kind == "lipschitz":
            return np.asarray(self.drift(t, x), dtype=float)
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def has_flow(self) -> bool:
        return self.drift_kind == "lipschitz"

    def to_dict(self) -> dict:
        return {"name": self.name, "params": self.params, "drift_kind": self.drift_kind,
                "drift_constant": self.drift_constant, "kappa": self.kappa, "eta": self.eta,
                "holder_constant": self.holder_constant}


# ---------------------------------------------------------------------------
# named families
# ---------------------------------------------------------------------------

def _zero_drift(t, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _with_drift(sig: dict, drift: dict, d: int) -> Coefficients:
    kappa = sig["kappa"]
    return Coefficients(d, drift["fn"], sig["fn"], drift["kind"], drift["constant"], kappa,
                        sig["eta"], sig["holder"], sig.get("time_homogeneous", True),
                        sig.get("space_constant", False),
                        name=f"{sig['name']}+{drift['name']}",
                        params={"sigma": sig["params"], "drift": drift["params"]})


def constant_sigma_spec(d: int, value=1.0) -> dict:
    m = np.asarray(value, dtype=float)
    mat = m * np.eye(d) if m.ndim == 0 else m.reshape(d, d)
    sym = 0.5 * (mat + mat.T)
    ev = np.linalg.eigvalsh(sym)
    if ev.min() <= 0:
        raise ConfigurationError("constant sigma must be positive definite in the symmetric part")
    kappa = max(1.0, float(ev.max()), 1.0 / float(ev.min()))
    # the Rayleigh quotient bound is what the validator checks; norms enter via kappa
    kappa = max(kappa, float(np.linalg.norm(mat, 2)))

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(mat, x.shape[:-1] + (d, d)).copy()

    return {"name": "constant_sigma", "fn": fn, "kappa": kappa, "eta": 1.0, "holder": 0.0,
            "space_constant": True, "params": {"value": mat.tolist()}}


def holder_sigma_spec(d: int, a: float = 1.0, b: float = 0.5, eta: float = 0.5) -> dict:
    """sigma(x) = (a + b min(1, |x|^eta)) Id."""
    if not (a > 0 and b >= 0):
        raise ConfigurationError("holder sigma needs a > 0 and b >= 0")

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        s = a + b * np.minimum(1.0, r ** eta)
        return s[..., None, None] * np.eye(d)

    kappa = max(1.0, a + b, 1.0 / a)
    return {"name": "holder_sigma", "fn": fn, "kappa": kappa, "eta": float(eta), "holder": float(b),
            "params": {"a": a, "b": b, "eta": eta}}


def time_sigma_spec(d: int, a: float = 1.0, b: float = 1.0) -> dict:
    """sigma(t) = (a + b t) Id; space independent, time varying."""

    def fn(t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to((a + b * t) * np.eye(d), x.shape[:-1] + (d, d)).copy()

    return {"name": "time_sigma", "fn": fn, "kappa": max(1.0, abs(a) + abs(b) * 2.0, 1.0 / a),
            "eta": 1.0, "holder": 0.0, "time_homogeneous": False, "space_constant": True,
            "params": {"a": a, "b": b}}


def zero_drift_spec() -> dict:
    return {"name": "zero_drift", "fn": _zero_drift, "kind": "zero", "constant": 0.0, "params": {}}


def sinusoidal_drift_spec(amplitude: float = 0.5, frequency: float = 1.0) -> dict:
    """F(x) = amplitude sin(frequency x), componentwise; bounded."""

    def fn(t, x):
        return amplitude * np.sin(frequency * np.asarray(x, dtype=float))

    return {"name": "sinusoidal_drift", "fn": fn, "kind": "bounded", "constant": abs(amplitude),
            "params": {"amplitude": amplitude, "frequency": frequency}}


def linear_drift_spec(d: int, matrix=1.0, offset=0.0) -> dict:
    """F(x) = A x + b; Lipschitz."""
    m = np.asarray(matrix, dtype=float)
    A = m * np.eye(d) if m.ndim == 0 else m.reshape(d, d)
    b = np.broadcast_to(np.asarray(offset, dtype=float), (d,)).copy()

    def fn(t, x):
        return np.asarray(x, dtype=float) @ A.T + b

    return {"name": "linear_drift", "fn": fn, "kind": "lipschitz", "constant": float(np.linalg.norm(A, 2)),
            "params": {"matrix": A.tolist(), "offset": b.tolist()}}


SIGMA_FAMILIES = {"constant": constant_sigma_spec, "holder": holder_sigma_spec, "time_linear": time_sigma_spec}
DRIFT_FAMILIES = {"zero": lambda d, **kw: zero_drift_spec(),
                  "sinusoidal": lambda d, **kw: sinusoidal_drift_spec(**kw),
                  "linear": linear_drift_spec}


def make_coefficients(d: int, sigma: dict | None = None, drift: dict | None = None) -> Coefficients:
    """Build coefficients from registry descriptions like ``{"family": "holder", "a": 1}``."""
    sigma = {"family": "constant"} if sigma is None else dict(sigma)
    drift = {"family": "zero"} if drift is None else dict(drift)
    sf, df = sigma.pop("family"), drift.pop("family")
    if sf not in SIGMA_FAMILIES:
        raise ConfigurationError(f"unknown sigma family {sf!r}")
    if df not in DRIFT_FAMILIES:
        raise ConfigurationError(f"unknown drift family {df!r}")
    return _with_drift(SIGMA_FAMILIES[sf](d, **sigma), DRIFT_FAMILIES[df](d, **drift), d)


def constant_coefficients(d: int = 1, sigma=1.0) -> Coefficients:
    return _with_drift(constant_sigma_spec(d, sigma), zero_drift_spec(), d)


def holder_coefficients(d: int = 1, a=1.0, b=0.5, eta=0.5, drift_amplitude: float = 0.0) -> Coefficients:
    drift = sinusoidal_drift_spec(drift_amplitude) if drift_amplitude else zero_drift_spec()
    return _with_drift(holder_sigma_spec(d, a, b, eta), drift, d)


# ---------------------------------------------------------------------------
# flow
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FlowPath:
    """theta_{s, anchor_time}(anchor_point) on a uniform mesh of s.

    ``times`` is increasing; ``direction`` says whether the integration ran
    forward or backward from the anchor.
    """

    times: np.ndarray
    states: np.ndarray
    direction: str
    anchor_time: float
    anchor_point: np.ndarray
    derivs: np.ndarray = field(repr=False, default=None)

    @property
    def anchor_index(self) -> int:
        return 0 if self.direction == "forward" else len(self.times) - 1

    def covers(self, a: float, b: float) -> bool:
        lo, hi = self.times[0], self.times[-1]
        eps = 1e-12 * max(1.0, abs(lo), abs(hi))
        return lo - eps <= min(a, b) and max(a, b) <= hi + eps

    def at(self, s) -> np.ndarray:
        """Cubic Hermite interpolation of the state at time(s) ``s``."""
        s = np.asarray(s, dtype=float)
        if not self.covers(float(np.min(s)), float(np.max(s))):
            raise ConfigurationError("flow path does not cover the requested times",
                                     span=[float(self.times[0]), float(self.times[-1])])
        if len(self.times) < 2 or np.all(self.derivs == 0):
            return np.broadcast_to(self.states[0], s.shape + self.states.shape[1:]).copy()
        spline = CubicHermiteSpline(self.times, self.states, self.derivs, axis=0)
        out = spline(np.clip(s, self.times[0], self.times[-1]))
        # exact at the anchor
        hit = s == self.anchor_time
        if np.any(hit):
            out[hit] = self.anchor_point
        return out


def _rk4(f, t0: float, x0: np.ndarray, t1: float, steps: int):
    h = (t1 - t0) / steps
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    xs = np.empty((steps + 1,) + x0.shape)
    ks = np.empty_like(xs)
    xs[0] = x0
    x = x0
    for n in range(steps):
        t = ts[n]
        k1 = f(t, x)
        k2 = f(t + h / 2, x + h / 2 * k1)
        k3 = f(t + h / 2, x + h / 2 * k2)
        k4 = f(t + h, x + h * k3)
        ks[n] = k1
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise FlowIntegrationError("non-finite flow state", node=n + 1, time=float(ts[n + 1]))
        xs[n + 1] = x
    ks[steps] = f(ts[steps], x)
    return ts, xs, ks


def flow(coeffs: Coefficients, anchor_point, anchor_time: float, target_time: float,
         steps: int | None = None) -> FlowPath:
    """Solve d/ds theta_s = F(s, theta_s), theta_{anchor_time} = anchor_point, up to target_time.

    Classical RK4 on a uniform mesh; ``target_time`` may precede
    ``anchor_time`` (backward integration). Only Lipschitz drifts move the
    flow; zero and bounded drifts give the identity.
    """
    x0 = np.atleast_1d(np.asarray(anchor_point, dtype=float)).copy()
    span = target_time - anchor_time
    if steps is None:
        steps = max(1, int(math.ceil(abs(span) * DEFAULT_STEPS_PER_UNIT)))
    if steps < 1:
        raise ConfigurationError("steps must be at least 1")
    f = coeffs.flow_drift
    if span == 0.0 or not coeffs.has_flow:
        lo, hi = sorted((anchor_time, target_time))
        ts = np.array([lo, hi]) if hi > lo else np.array([lo, lo])
        xs = np.broadcast_to(x0, (2,) + x0.shape).copy()
        direction = "forward" if target_time >= anchor_time else "backward"
        return FlowPath(ts, xs, direction, float(anchor_time), x0, np.zeros_like(xs))
    ts, xs, ks = _rk4(f, float(anchor_time), x0, float(target_time), steps)
    if span > 0:
        return FlowPath(ts, xs, "forward", float(anchor_time), x0, ks)
    return FlowPath(ts[::-1].copy(), xs[::-1].copy(), "backward", float(anchor_time), x0, ks[::-1].copy())


def flow_map(coeffs: Coefficients, x, s_from: float, s_to: float, steps: int | None = None) -> np.ndarray:
    """Vectorised theta_{s_to, s_from}(x) for x of shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if not coeffs.has_flow or s_to == s_from:
        return x.copy()
    span = s_to - s_from
    if steps is None:
        steps = max(1, int(math.ceil(abs(span) * DEFAULT_STEPS_PER_UNIT)))
    return _rk4(coeffs.flow_drift, float(s_from), x, float(s_to), steps)[1][-1]


def transported_distance(coeffs: Coefficients, t: float, T: float, x, y,
                         steps: int | None = None) -> tuple[float, float]:
    """(|y - theta_{T,t}(x)|, |theta_{t,T}(y) - x|)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    fwd = flow_map(coeffs, x, t, T, steps)
    bwd = flow_map(coeffs, y, T, t, steps)
    return float(np.linalg.norm(y - fwd)), float(np.linalg.norm(bwd - x))
