"""Monte Carlo simulation of the SDE with the large/small jump split.

Jumps of size at least delta arrive on an exponential clock with rate
nu(|z| >= delta) and are applied exactly; between arrivals the process is
advanced by Euler steps in which the small jumps are either dropped or
replaced by a Gaussian with the matching covariance.
"""
from __future__ import annotations

import json
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, ResolutionError, SimulationError
from .flow import Coefficients
from .frozen import SpaceGrid
from .levy import LevyModel, sample_large_jump, small_jump_covariance, tail_mass

SMALL_JUMP_MODES = ("gaussian", "drop")
MAX_EXCLUDED_FRACTION = 1e-3


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    steps_per_unit_time: int = 256
    delta: float | str = "characteristic"
    small_jumps: str = "gaussian"
    seed: int = 0
    block_count: int = 8
    record_clocks: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be at least 1")
        if self.block_count < 1 or self.block_count > self.n_paths:
            raise ConfigurationError("block_count must lie in [1, n_paths]")
        if self.steps_per_unit_time < 1:
            raise ConfigurationError("steps_per_unit_time must be positive")
        if self.small_jumps not in SMALL_JUMP_MODES:
            raise ConfigurationError(f"small_jumps must be one of {SMALL_JUMP_MODES}")
        if isinstance(self.delta, str):
            if self.delta != "characteristic":
                raise ConfigurationError("delta must be a positive number or 'characteristic'")
        elif not self.delta > 0:
            raise ConfigurationError("delta must be positive", delta=self.delta)

    def resolve_delta(self, model: LevyModel, t: float, T: float) -> float:
        if self.delta == "characteristic":
            return (T - t) ** (1.0 / model.alpha)
        return float(self.delta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class PathEnsemble:
    terminal: np.ndarray  # (n_paths, d)
    jump_counts: np.ndarray
    config: SimConfig
    delta: float
    rate: float
    excluded: int = 0
    wall_clock: float = 0.0
    clocks: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.terminal.shape[0]

    def header(self) -> dict:
        return {"config": self.config.to_dict(), "delta": self.delta, "rate": self.rate,
                "excluded": self.excluded, "d": int(self.terminal.shape[1]), "n_paths": self.n_paths,
                "meta": self.meta}

    def save(self, path) -> None:
        """Flat binary: uint64 header length, JSON header, little-endian float64 path-major body."""
        head = json.dumps(self.header(), sort_keys=True).encode()
        body = np.column_stack([self.terminal, self.jump_counts[:, None]]).astype("<f8")
        with open(path, "wb") as fh:
            fh.write(struct.pack("<Q", len(head)))
            fh.write(head)
            fh.write(body.tobytes())

    @classmethod
    def load(cls, path) -> "PathEnsemble":
        raw = Path(path).read_bytes()
        (n,) = struct.unpack("<Q", raw[:8])
        head = json.loads(raw[8:8 + n])
        body = np.frombuffer(raw[8 + n:], dtype="<f8").reshape(head["n_paths"], head["d"] + 1)
        cfg = SimConfig(**head["config"])
        return cls(body[:, :-1].copy(), body[:, -1].astype(np.int64), cfg, head["delta"], head["rate"],
                   head["excluded"], meta=head["meta"])


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _block_sizes(n: int, blocks: int) -> list[int]:
    base, extra = divmod(n, blocks)
    return [base + (1 if b < extra else 0) for b in range(blocks)]


def _simulate_block(model, coeffs, x0, t, T, n, n_steps, delta, rate, chol, rng, record):
    d = model.d
    X = np.tile(np.asarray(x0, dtype=float), (n, 1))
    counts = np.zeros(n, dtype=np.int64)
    clocks = [] if record else None
    grid = np.linspace(t, T, n_steps + 1)

    def draw_clock(k):
        c = rng.exponential(1.0 / rate, k) if rate > 0 else np.full(k, np.inf)
        if record:
            clocks.append(c)
        return c

    def euler(idx, s, dt):
        if idx.size == 0:
            return
        Xi = X[idx]
        step = np.asarray(coeffs.drift(s, Xi)) * dt[:, None]
        if chol is not None:
            g = rng.standard_normal((idx.size, d)) @ chol.T * np.sqrt(dt)[:, None]
            step = step + np.einsum("nij,nj->ni", np.asarray(coeffs.sigma(s, Xi)), g)
        X[idx] = Xi + step

    next_jump = t + draw_clock(n)
    for s0, s1 in zip(grid[:-1], grid[1:]):
        now = np.full(n, s0)
        while True:
            hit = np.nonzero(next_jump < s1)[0]
            if hit.size == 0:
                break
            tau = next_jump[hit]
            euler(hit, s0, tau - now[hit])
            # sigma at the left limit in space, at the step start in time
            J = sample_large_jump(model, delta, rng, hit.size)
            X[hit] += np.einsum("nij,nj->ni", np.asarray(coeffs.sigma(s0, X[hit])), J)
            counts[hit] += 1
            now[hit] = tau
            next_jump[hit] = tau + draw_clock(hit.size)
        euler(np.arange(n), s0, s1 - now)
    return X, counts, (np.concatenate(clocks) if record else None)


def simulate(model: LevyModel, coeffs: Coefficients, x0, t: float, T: float, config: SimConfig,
             threads: int = 0) -> PathEnsemble:
    """Terminal states X_T of paths started at X_t = x0."""
    if not T > t:
        raise ConfigurationError("need T > t")
    if model.alpha <= 1 and coeffs.drift_kind != "zero":
        raise ConfigurationError("alpha <= 1 requires F = 0")
    if model.d != coeffs.d:
        raise ConfigurationError("model and coefficients disagree on the dimension")
    started = time.perf_counter()
    delta = config.resolve_delta(model, t, T)
    rate = tail_mass(model, delta)
    chol = None
    if config.small_jumps == "gaussian":
        cov = small_jump_covariance(model, delta)
        w, v = np.linalg.eigh(cov)
        chol = v * np.sqrt(np.clip(w, 0.0, None))
    n_steps = max(1, int(math.ceil(config.steps_per_unit_time * (T - t))))
    sizes = _block_sizes(config.n_paths, config.block_count)

    def run(b):
        return _simulate_block(model, coeffs, x0, t, T, sizes[b], n_steps, delta, rate, chol,
                               _block_rng(config.seed, b), config.record_clocks)

    workers = threads if threads > 0 else None
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, range(config.block_count)))
    X = np.concatenate([r[0] for r in results])
    counts = np.concatenate([r[1] for r in results])
    clocks = np.concatenate([r[2] for r in results]) if config.record_clocks else None
    finite = np.all(np.isfinite(X), axis=1)
    excluded = int(np.sum(~finite))
    if excluded > MAX_EXCLUDED_FRACTION * config.n_paths:
        raise SimulationError("too many non-finite paths", excluded=excluded, n_paths=config.n_paths)
    return PathEnsemble(X[finite], counts[finite], config, delta, rate, excluded,
                        time.perf_counter() - started, clocks,
                        {"t": t, "T": T, "x0": np.atleast_1d(np.asarray(x0, float)).tolist(), "n_steps": n_steps})


# ---------------------------------------------------------------------------
# empirical densities
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EmpiricalDensity:
    """Density estimate on grid nodes; ``values`` are normalised by the total path count.

    The mass that fell outside the grid is kept in ``outside_mass`` so that
    sum(values) * cell_volume + outside_mass = 1.
    """

    grid: SpaceGrid
    values: np.ndarray
    standard_errors: np.ndarray
    bandwidth: float | np.ndarray
    n_paths: int
    outside_mass: float
    mode: str

    @property
    def coverage(self) -> float:
        return 1.0 - self.outside_mass

    def to_csv(self, path) -> None:
        cols = list(self.grid.axes()) if self.grid.d == 1 else None
        if cols is None:
            pts = self.grid.nodes().reshape(-1, self.grid.d)
        else:
            pts = cols[0][:, None]
        data = np.column_stack([pts, self.values.ravel(), self.standard_errors.ravel()])
        names = [f"x{k}" for k in range(self.grid.d)] + ["density", "standard_error"]
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def _edges(grid: SpaceGrid) -> list[np.ndarray]:
    return [np.concatenate([ax - 0.5 * h, [ax[-1] + 0.5 * h]]) for ax, h in zip(grid.axes(), grid.spacing)]


def silverman_bandwidth(samples: np.ndarray) -> np.ndarray:
    n, d = samples.shape
    sd = samples.std(axis=0, ddof=1)
    q75, q25 = np.percentile(samples, [75, 25], axis=0)
    spread = np.minimum(sd, (q75 - q25) / 1.349)
    spread = np.where(spread > 0, spread, sd)
    return 1.06 * spread * n ** (-1.0 / (d + 4))


def empirical_density(ensemble: PathEnsemble | np.ndarray, grid: SpaceGrid, mode: str = "histogram",
                      min_coverage: float = 0.99) -> EmpiricalDensity:
    """Histogram with bins centred on the grid nodes, or a Gaussian kernel estimate."""
    X = ensemble.terminal if isinstance(ensemble, PathEnsemble) else np.asarray(ensemble, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if X.shape[1] != grid.d:
        raise ConfigurationError("sample dimension does not match the grid")
    edges = _edges(grid)
    inside = np.ones(n, dtype=bool)
    for k, e in enumerate(edges):
        inside &= (X[:, k] >= e[0]) & (X[:, k] < e[-1])
    coverage = float(inside.mean())
    if coverage < min_coverage:
        raise ResolutionError("grid covers too few samples; widen it", coverage=coverage)
    vol = grid.cell_volume
    if mode == "histogram":
        counts, _ = np.histogramdd(X[inside], bins=edges)
        values = counts / (n * vol)
        se = np.sqrt(counts * (1.0 - counts / n)) / (n * vol)
        bw: float | np.ndarray = float(vol)
        # histogram mass outside plus inside is exactly one
        outside = 1.0 - float(counts.sum()) / n
    elif mode == "kernel":
        if grid.d != 1:
            raise ConfigurationError("kernel smoothing is implemented for d = 1")
        bw = silverman_bandwidth(X)
        h = float(bw[0])
        counts, _ = np.histogram(X[inside, 0], bins=edges[0])
        # binned Gaussian kernel estimate; the kernel is much wider than a bin or the bins are refined
        ax = grid.axes()[0]
        lags = (np.arange(ax.size) - ax.size // 2) * grid.spacing[0]
        kern = np.exp(-0.5 * (lags / h) ** 2) / (math.sqrt(2 * math.pi) * h)
        values = np.convolve(counts, kern, mode="same") / n
        total = float(values.sum() * vol)
        values *= (float(counts.sum()) / n) / total
        se = np.sqrt(values / (n * h * 2.0 * math.sqrt(math.pi)))
        outside = 1.0 - float(counts.sum()) / n
    else:
        raise ConfigurationError("mode must be 'histogram' or 'kernel'")
    return EmpiricalDensity(grid, values, se, bw, n, outside, mode)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonReport:
    z: np.ndarray
    bulk: np.ndarray
    fraction_within: float
    sup_z: float
    threshold: float
    slope_reference: float | None
    slope_empirical: float | None

    @property
    def slope_difference(self) -> float | None:
        if self.slope_reference is None or self.slope_empirical is None:
            return None
        return self.slope_reference - self.slope_empirical

    def passed(self, fraction: float = 0.99) -> bool:
        return self.fraction_within >= fraction

    def to_dict(self) -> dict:
        return {"fraction_within": self.fraction_within, "sup_z": self.sup_z, "threshold": self.threshold,
                "bulk_nodes": int(self.bulk.sum()), "slope_reference": self.slope_reference,
                "slope_empirical": self.slope_empirical, "slope_difference": self.slope_difference}


def _bin_average(fn: Callable[[np.ndarray], np.ndarray], grid: SpaceGrid, order: int = 4) -> np.ndarray:
    """Cell averages of ``fn`` over the histogram bins (d = 1)."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    ax = grid.axes()[0]
    h = grid.spacing[0]
    # half bins at the two ends are averaged over their inside halves
    pts = np.clip(ax[:, None] + 0.5 * h * xg[None, :], ax[0], ax[-1])
    vals = np.asarray(fn(pts.reshape(-1, 1))).reshape(pts.shape)
    return 0.5 * vals @ wg


def _loglog_slope(r: np.ndarray, v: np.ndarray) -> float | None:
    keep = (v > 0) & (r > 0)
    if keep.sum() < 3:
        return None
    return float(np.polyfit(np.log(r[keep]), np.log(v[keep]), 1)[0])


def compare(reference: Callable[[np.ndarray], np.ndarray] | np.ndarray, empirical: EmpiricalDensity,
            bulk_level: float = 0.01, threshold: float = 3.0, center: float | None = None,
            tail_range: tuple[float, float] | None = None, bin_average: bool = True) -> ComparisonReport:
    """z-scores (reference - empirical) / SE over the bulk (empirical density above bulk_level * max).

    ``reference`` is an evaluator on points of shape (m, d) or an array of
    node values. For d = 1 evaluators are averaged over each bin.
    """
    grid = empirical.grid
    if callable(reference):
        if grid.d == 1 and bin_average and empirical.mode == "histogram":
            ref = _bin_average(reference, grid)
        else:
            ref = np.asarray(reference(grid.nodes().reshape(-1, grid.d))).reshape(empirical.values.shape)
    else:
        ref = np.asarray(reference, dtype=float).reshape(empirical.values.shape)
    emp = empirical.values
    se = empirical.standard_errors
    # nodes where the reference is undefined (NaN) are outside the shared region
    bulk = (emp > bulk_level * emp.max()) & np.isfinite(ref)
    if not bulk.any():
        raise ConfigurationError("empty comparison region")
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (ref - emp) / se, np.where(ref == emp, 0.0, np.inf))
    zb = np.abs(z[bulk])
    frac = float(np.mean(zb <= threshold))
    s_ref = s_emp = None
    if tail_range is not None and grid.d == 1:
        c = grid.center[0] if center is None else center
        r = np.abs(grid.axes()[0] - c)
        sel = (r >= tail_range[0]) & (r <= tail_range[1])
        sel &= np.isfinite(ref)
        s_ref = _loglog_slope(r[sel], ref[sel])
        s_emp = _loglog_slope(r[sel], emp[sel])
    return ComparisonReport(z, bulk, frac, float(zb.max()), threshold, s_ref, s_emp)
