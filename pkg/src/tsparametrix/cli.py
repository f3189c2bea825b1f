"""Command line driver: ``tsparametrix --config run.json --stage all --out results``.

Exit status: 0 success, 2 invalid configuration or failed assumption check,
3 numerical tolerance failure, 4 divergence of the series. Every failure
also writes ``error.json`` with keys stage, code, message, context.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import bounds, frozen, levy, mc, parametrix
from .errors import (AssumptionError, ConfigurationError, DivergenceError, PrecisionError, QuadratureError,
                     ResolutionError, SimulationError, TsParametrixError)
from .flow import make_coefficients

log = logging.getLogger("tsparametrix")

STAGES = ("validate", "exponent", "frozen", "kernel", "series", "simulate", "compare", "bounds")
EXIT_OK, EXIT_ASSUMPTION, EXIT_NUMERICAL, EXIT_DIVERGENCE = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}


def _family(name: str, params: dict) -> dict:
    return {"type": "object", "additionalProperties": False, "required": ["family"],
            "properties": {"family": {"const": name}, **params}}


_grid = {"type": "object", "additionalProperties": False, "required": ["half_width", "n_points"],
         "properties": {"half_width": _pos, "n_points": {"type": "integer", "minimum": 8},
                        "center": _num}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "coefficients", "experiment"],
    "properties": {
        "model": {
            "type": "object", "additionalProperties": False, "required": ["kind", "d", "alpha"],
            "properties": {
                "kind": {"enum": ["isotropic", "relativistic", "product"]},
                "d": {"type": "integer", "minimum": 1, "maximum": 3},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
                "c": _pos,
                "tempering": {
                    "type": "object", "additionalProperties": False, "required": ["kind"],
                    "properties": {"kind": {"enum": ["none", "polynomial", "exponential"]},
                                   "m": _pos, "rate": _pos}},
                "name": {"type": "string"},
            }},
        "coefficients": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "sigma": {"oneOf": [
                    _family("constant", {"value": {"oneOf": [_pos, {"type": "array"}]}}),
                    _family("holder", {"a": _pos, "b": {"type": "number", "minimum": 0},
                                       "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}),
                    _family("time_linear", {"a": _pos, "b": _num})]},
                "drift": {"oneOf": [
                    _family("zero", {}),
                    _family("sinusoidal", {"amplitude": _num, "frequency": _num}),
                    _family("linear", {"matrix": {"oneOf": [_num, {"type": "array"}]},
                                       "offset": {"oneOf": [_num, {"type": "array"}]}})]},
            }},
        "experiment": {
            "type": "object", "additionalProperties": False, "required": ["t", "T"],
            "properties": {
                "t": _num, "T": _num,
                "x0": {"type": "array", "items": _num, "minItems": 1},
                "grid": _grid,
                "histogram_grid": _grid,
                "exponent": {"type": "object", "additionalProperties": False,
                             "properties": {"zeta_min": _pos, "zeta_max": _pos,
                                            "n": {"type": "integer", "minimum": 2},
                                            "cross_check": {"type": "boolean"}}},
                "series": {"type": "object", "additionalProperties": False,
                           "properties": {"r_max": {"type": "integer", "minimum": 1},
                                          "rel_tol": _pos, "method": {"enum": ["laplace", "sweep"]},
                                          "n_time": {"type": "integer", "minimum": 2},
                                          "filter_order": {"type": ["integer", "null"], "minimum": 2},
                                          "check_assumptions": {"type": "boolean"}}},
                "simulation": {"type": "object", "additionalProperties": False,
                               "properties": {"n_paths": {"type": "integer", "minimum": 1},
                                              "steps_per_unit_time": {"type": "integer", "minimum": 1},
                                              "delta": {"oneOf": [_pos, {"const": "characteristic"}]},
                                              "small_jumps": {"enum": list(mc.SMALL_JUMP_MODES)},
                                              "seed": {"type": "integer", "minimum": 0},
                                              "block_count": {"type": "integer", "minimum": 1}}},
                "compare": {"type": "object", "additionalProperties": False,
                            "properties": {"bulk_level": _pos, "threshold": _pos,
                                           "required_fraction": {"type": "number", "minimum": 0, "maximum": 1},
                                           "tail_range": {"type": "array", "items": _pos,
                                                          "minItems": 2, "maxItems": 2}}},
                "bounds": {"type": "object", "additionalProperties": False,
                           "properties": {"convention": {"enum": ["ProofMax", "TheoremMin"]},
                                          "kernel_points": {"type": "integer", "minimum": 2}}},
            }},
        "output": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}


# ---------------------------------------------------------------------------
# building objects from the configuration
# ---------------------------------------------------------------------------

def build_model(cfg: dict) -> levy.LevyModel:
    m = cfg["model"]
    tmp = m.get("tempering", {"kind": "none"})
    if tmp["kind"] == "none":
        tempering = None
    elif tmp["kind"] == "polynomial":
        tempering = levy.Tempering.polynomial(tmp["m"])
    else:
        tempering = levy.Tempering.exponential(tmp["rate"])
    if m["kind"] == "isotropic":
        return levy.isotropic_stable(m["d"], m["alpha"], m.get("c", 1.0), tempering)
    if m["kind"] == "relativistic":
        if tempering is not None:
            raise ConfigurationError("the relativistic model carries its own tempering")
        return levy.relativistic_stable(m["d"], m["alpha"])
    return levy.product_stable(m["d"], m["alpha"], m.get("c", 1.0), tempering)


def build_coefficients(cfg: dict):
    c = cfg.get("coefficients", {})
    return make_coefficients(cfg["model"]["d"], c.get("sigma"), c.get("drift"))


def _grid(cfg: dict, key: str, center: float) -> frozen.SpaceGrid:
    g = cfg["experiment"].get(key) or cfg["experiment"].get("grid")
    if g is None:
        raise ConfigurationError(f"experiment.{key} is required for this stage")
    return frozen.SpaceGrid.line(g.get("center", center), g["half_width"], g["n_points"])


def _sim_config(cfg: dict, seed_override: int | None) -> mc.SimConfig:
    sim = dict(cfg["experiment"].get("simulation", {}))
    if seed_override is not None:
        sim["seed"] = seed_override
    elif "seed" in cfg and "seed" not in sim:
        sim["seed"] = cfg["seed"]
    return mc.SimConfig(**sim)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def write_csv(path: Path, header: list[str], columns: list) -> None:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=1, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

class Run:
    def __init__(self, cfg: dict, out: Path, seed: int | None, threads: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.threads = threads
        self.model = build_model(cfg)
        self.coeffs = build_coefficients(cfg)
        ex = cfg["experiment"]
        self.t, self.T = float(ex["t"]), float(ex["T"])
        if not self.T > self.t:
            raise ConfigurationError("experiment.T must exceed experiment.t")
        self.x0 = np.asarray(ex.get("x0", [0.0] * self.model.d), dtype=float)
        if self.x0.size != self.model.d:
            raise ConfigurationError("x0 has the wrong dimension")
        self.state: dict = {}
        self.reports: dict = {}

    # each stage returns True when its own acceptance check passed
    def validate(self) -> bool:
        report = levy.validate_assumptions(self.model, self.coeffs)
        write_json(self.out / "assumptions.json", report.to_dict())
        self.reports["validate"] = {"all_passed": report.all_passed}
        if not report.all_passed:
            raise AssumptionError("standing assumptions failed",
                                  failures=[c.name for c in report.failures()])
        return True

    def exponent(self) -> bool:
        opts = self.cfg["experiment"].get("exponent", {})
        z = np.geomspace(opts.get("zeta_min", 1e-2), opts.get("zeta_max", 1e2), opts.get("n", 41))
        pts = np.zeros((z.size, self.model.d))
        pts[:, 0] = z
        phi = np.asarray(levy.exponent(self.model, pts))
        cols, head = [z, phi], ["zeta", "phi"]
        if opts.get("cross_check", False):
            quad = np.asarray(levy.exponent_quadrature(self.model, pts))
            cols.append(quad)
            head.append("phi_quadrature")
            self.reports["exponent"] = {"max_rel_diff": float(np.max(np.abs(quad - phi) / np.abs(phi)))}
        write_csv(self.out / "exponent.csv", head, cols)
        return True

    def frozen(self) -> bool:
        grid = _grid(self.cfg, "grid", float(self.x0[0]))
        field_ = frozen.frozen_density_grid(self.model, self.coeffs, self.t, self.T, self.T, self.x0, self.x0, grid)
        field_.to_csv(self.out / "frozen_density.csv")
        self.reports["frozen"] = {k: field_.meta[k] for k in ("mass", "tail_estimate", "clipped_mass")}
        return True

    def kernel(self) -> bool:
        grid = _grid(self.cfg, "grid", float(self.x0[0]))
        kf = parametrix.kernel_field(self.model, self.coeffs, self.t, self.T, self.x0, grid)
        kf.to_csv(self.out / "kernel.csv")
        q = bounds.QProfile.for_model(self.model, self.coeffs, self._convention())
        n = self.cfg["experiment"].get("bounds", {}).get("kernel_points", 11)
        ax = grid.axes()[0]
        span = min(3.0 * (self.T - self.t) ** (1.0 / self.model.alpha) + 1.0, 0.5 * (ax[-1] - ax[0]))
        xs = np.linspace(self.x0[0] - span, self.x0[0] + span, n)
        consts = []
        for res in (1, 2):
            H = np.array([[parametrix.kernel_H(self.model, self.coeffs, self.t, self.T, x, y, resolution=res)
                           for y in xs] for x in xs])
            B = np.array([[bounds.hbar(self.model, self.coeffs, q, self.t, self.T, x, y) for y in xs] for x in xs])
            consts.append(bounds.sandwich_constants(H, B)[0])
        c0, c1 = consts
        if c0 == 0.0 and c1 == 0.0:
            stable = True  # the kernel vanishes identically
        else:
            stable = bool(np.isfinite(c0) and c0 > 0 and 0.5 <= c1 / c0 <= 2.0)
        self.reports["kernel"] = {"c_upper": consts[0], "c_upper_refined": consts[1], "stable": stable}
        return stable

    def _convention(self) -> str:
        return self.cfg["experiment"].get("bounds", {}).get("convention", "ProofMax")

    def series(self) -> bool:
        if self.model.d != 1:
            raise ConfigurationError("the series stage supports d = 1")
        grid = _grid(self.cfg, "grid", float(self.x0[0]))
        opts = self.cfg["experiment"].get("series", {})
        st = parametrix.series(self.model, self.coeffs, self.t, self.T, grid, **opts)
        st.save(self.out / "series")
        self.state["series"] = st
        ok = st.converged and 0.99 <= st.meta["mass_total"] <= 1.01
        self.reports["series"] = {"converged": st.converged, "r_used": st.r_used, "norms": st.norms,
                                  "mass_total": st.meta["mass_total"], "passed": ok}
        return ok

    def simulate(self) -> bool:
        conf = _sim_config(self.cfg, self.seed)
        ens = mc.simulate(self.model, self.coeffs, self.x0, self.t, self.T, conf, threads=self.threads)
        ens.save(self.out / "ensemble.bin")
        self.state["ensemble"] = ens
        self.reports["simulate"] = {"n_paths": ens.n_paths, "excluded": ens.excluded, "delta": ens.delta,
                                    "rate": ens.rate, "mean_jumps": float(ens.jump_counts.mean()),
                                    "seed": conf.seed, "block_count": conf.block_count}
        return True

    def compare(self) -> bool:
        if "series" not in self.state:
            self.series()
        if "ensemble" not in self.state:
            self.simulate()
        st, ens = self.state["series"], self.state["ensemble"]
        hg = _grid(self.cfg, "histogram_grid", float(self.x0[0]))
        emp = mc.empirical_density(ens, hg)
        emp.to_csv(self.out / "histogram.csv")
        opts = self.cfg["experiment"].get("compare", {})
        tau = (self.T - self.t) ** (1.0 / self.model.alpha)
        tr = opts.get("tail_range")
        rep = mc.compare(parametrix.evaluator(st), emp, opts.get("bulk_level", 0.01),
                         opts.get("threshold", 3.0), center=float(self.x0[0]),
                         tail_range=None if tr is None else (tr[0] * tau, tr[1] * tau))
        write_csv(self.out / "zscores.csv", ["x", "z", "bulk"], [hg.axes()[0], rep.z, rep.bulk])
        required = opts.get("required_fraction", 0.99)
        data = rep.to_dict()
        data["required_fraction"] = required
        data["passed"] = rep.passed(required)
        write_json(self.out / "compare.json", data)
        self.reports["compare"] = data
        return data["passed"]

    def bounds(self) -> bool:
        if "series" not in self.state:
            self.series()
        st = self.state["series"]
        q = bounds.QProfile.for_model(self.model, self.coeffs, self._convention())
        ax = st.grid.axes()[0]
        upper = np.asarray(bounds.pbar(self.model, self.coeffs, q, self.t, self.T, self.x0, ax[:, None]))
        vals = st.partial_sum.values
        c_up, c_lo, excluded = bounds.sandwich_constants(vals, upper)
        write_csv(self.out / "bounds.csv", ["y", "density", "pbar"], [ax, vals, upper])
        self.reports["bounds"] = {"c_upper": c_up, "excluded_nodes": excluded, "convention": q.convention}
        return bool(np.isfinite(c_up))


def run(cfg: dict, stage: str, out: Path, seed: int | None = None, threads: int = 0) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    started = time.time()
    manifest = {"config": cfg, "stage": stage, "version": _version(), "seed_override": seed,
                "threads": threads, "started": started}
    current = "config"
    code = EXIT_OK
    try:
        jsonschema.validate(cfg, SCHEMA)
        runner = Run(cfg, out, seed, threads)
        stages = STAGES if stage == "all" else (stage,)
        results = {}
        for current in stages:
            log.info("stage %s", current)
            results[current] = getattr(runner, current)()
        manifest["results"] = results
        manifest["reports"] = runner.reports
        if not all(results.values()):
            code = EXIT_NUMERICAL
            _write_error(out, current if len(stages) == 1 else "all", code, "acceptance check failed",
                         {"failed": [k for k, v in results.items() if not v]})
    except jsonschema.ValidationError as exc:
        code = EXIT_ASSUMPTION
        _write_error(out, current, code, exc.message, {"path": list(exc.absolute_path)})
    except (AssumptionError, ConfigurationError) as exc:
        code = EXIT_ASSUMPTION
        _write_error(out, current, code, str(exc), exc.context)
    except DivergenceError as exc:
        code = EXIT_DIVERGENCE
        _write_error(out, current, code, str(exc), exc.context)
    except (QuadratureError, ResolutionError, PrecisionError, SimulationError, TsParametrixError) as exc:
        code = EXIT_NUMERICAL
        _write_error(out, current, code, str(exc), exc.context)
    manifest["exit_code"] = code
    manifest["wall_clock_seconds"] = time.time() - started
    write_json(out / "manifest.json", manifest)
    return code


def _write_error(out: Path, stage: str, code: int, message: str, context: dict) -> None:
    write_json(out / "error.json", {"stage": stage, "code": code, "message": message,
                                    "context": _jsonable(context)})


def _version() -> str:
    from . import __version__
    return __version__


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="tsparametrix", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    ap.add_argument("--stage", default="all", choices=STAGES + ("all",))
    ap.add_argument("--out", type=Path, default=None, help="output directory (default: config 'output')")
    ap.add_argument("--seed", type=int, default=None, help="overrides the simulation seed")
    ap.add_argument("--threads", type=int, default=0, help="worker threads, 0 = automatic")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        out = args.out or Path("results")
        out.mkdir(parents=True, exist_ok=True)
        _write_error(out, "config", EXIT_ASSUMPTION, f"cannot read config: {exc}", {})
        return EXIT_ASSUMPTION
    out = args.out or Path(cfg.get("output", "results"))
    return run(copy.deepcopy(cfg), args.stage, out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
