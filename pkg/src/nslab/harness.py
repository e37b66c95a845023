"""Experiment orchestration: single runs, sweeps and refinement studies.

Configs are nested mappings (loaded from JSON or YAML) with the sections
``grid``, ``kernel``, ``flux``, ``sim``, ``detector`` and ``ic``.  Missing keys
fall back to :data:`DEFAULTS`.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from nslab import initial_data
from nslab.exceptions import ConfigError, FormulaError, NslabError, NumericDivergence
from nslab.flux import available_fluxes, get_flux
from nslab.kernels import Boundary, Grid1D, KernelKind, KernelSpec
from nslab.solver import (BlowupEvent, Criterion, DetectorConfig, Trace, make_state, run)
from nslab.thresholds import ThresholdReport, general_lambda, threshold_report

logger = logging.getLogger(__name__)

EXIT_CLEAN = 0
EXIT_BLOWUP = 10
EXIT_NUMERIC = 20

DIVERGENCE_RATIO = 1.8
CONVERGENCE_RATIO = 1.15

DEFAULTS: dict[str, Any] = {
    "grid": {"n_cells": 800, "length": 4.0, "x_left": None, "boundary": "constant_extension"},
    "kernel": {"kind": "constant", "gamma": 1.0, "k0": 1.0, "table_path": None},
    "flux": {"name": "arrhenius", "m": None},
    "sim": {"t_final": None, "cfl": 0.45, "order": 1, "trace_stride": 1, "snapshot_times": []},
    "detector": {"slope_ceiling": None, "growth_window": 20, "grid_fraction": 0.05,
                 "factor": 100.0, "floor": 1e3, "enabled": True},
    "ic": {"name": "constant", "value": 0.5},
    "seed": 0,
}

SWEEP_CSV_COLUMNS = ("point", "axis1", "value1", "axis2", "value2", "sup_slope", "inf_slope",
                     "threshold", "above_threshold", "detected", "t_blowup", "peak_slope",
                     "consistent", "failure")


# ---------------------------------------------------------------------------
# configuration

def load_config(path: str | Path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key != "ic":
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_key(config: dict, dotted: str, value) -> None:
    """Assign ``config['a']['b'] = value`` for ``dotted == 'a.b'``."""
    *head, last = dotted.split(".")
    node = config
    for part in head:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"{dotted}: no section {part!r}")
        node = node[part]
    node[last] = value


def get_key(config: dict, dotted: str):
    node = config
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"{dotted}: key not found")
        node = node[part]
    return node


@dataclass
class Experiment:
    """A validated, fully resolved run configuration."""

    config: dict
    grid: Grid1D
    kernel: KernelSpec
    flux: Any
    profile: Any
    t_final: float
    cfl: float
    order: int
    trace_stride: int
    snapshot_times: list
    detector: DetectorConfig


def _number(config, key, positive=False, integer=False):
    value = get_key(config, key)
    try:
        value = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if integer and float(get_key(config, key)) != value:
        raise ConfigError(f"{key}: expected an integer")
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{key}: must be positive, got {value}")
    return value


def resolve(raw: dict) -> Experiment:
    """Validate a config and build the grid, kernel, flux and initial data."""
    cfg = merge(DEFAULTS, raw)
    unknown = set(cfg) - set(DEFAULTS) - {"name", "description"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    n = _number(cfg, "grid.n_cells", positive=True, integer=True)
    length = _number(cfg, "grid.length", positive=True)
    x_left = -0.5 * length if cfg["grid"]["x_left"] is None else _number(cfg, "grid.x_left")
    try:
        boundary = Boundary(cfg["grid"]["boundary"])
    except ValueError:
        raise ConfigError(f"grid.boundary: expected one of {[b.value for b in Boundary]}") from None
    grid = Grid1D.uniform(n, x_left, length, boundary)

    kind = cfg["kernel"]["kind"]
    try:
        kind = KernelKind(kind)
    except ValueError:
        raise ConfigError(f"kernel.kind: expected one of {[k.value for k in KernelKind]}") from None
    try:
        if kind is KernelKind.TABULATED:
            if not cfg["kernel"]["table_path"]:
                raise ConfigError("kernel.table_path: required for tabulated kernels")
            kernel = KernelSpec.from_table_file(cfg["kernel"]["table_path"])
        else:
            kernel = KernelSpec(kind, _number(cfg, "kernel.gamma", positive=True),
                                _number(cfg, "kernel.k0", positive=True))
        grid.check_kernel(kernel)
    except ConfigError:
        raise
    except (NslabError, OSError) as exc:
        raise ConfigError(f"kernel: {exc}") from None

    name = cfg["flux"]["name"]
    if name not in available_fluxes():
        raise ConfigError(f"flux.name: expected one of {available_fluxes()}, got {name!r}")
    flux = get_flux(name, cfg["flux"].get("m"))

    ic_cfg = dict(cfg["ic"])
    if "name" not in ic_cfg:
        raise ConfigError("ic.name: required")
    ic_name = ic_cfg.pop("name")
    if ic_name == "random_smooth":
        ic_cfg.setdefault("seed", cfg["seed"])
        ic_cfg.setdefault("period", length)
    profile = initial_data.build(ic_name, **ic_cfg)

    t_final = cfg["sim"]["t_final"]
    t_final = 20.0 * kernel.gamma if t_final is None else _number(cfg, "sim.t_final", positive=True)
    cfl = _number(cfg, "sim.cfl", positive=True)
    if cfl > 0.9:
        raise ConfigError("sim.cfl: must not exceed 0.9")
    order = _number(cfg, "sim.order", integer=True)
    if order not in (1, 2):
        raise ConfigError("sim.order: must be 1 or 2")
    stride = _number(cfg, "sim.trace_stride", positive=True, integer=True)
    snaps = [float(t) for t in cfg["sim"]["snapshot_times"] or []]

    det = cfg["detector"]
    window = _number(cfg, "detector.growth_window", positive=True, integer=True)
    detector = DetectorConfig(
        slope_ceiling=None if det.get("slope_ceiling") is None
        else _number(cfg, "detector.slope_ceiling", positive=True),
        growth_window=window,
        factor=float(det.get("factor", 100.0)),
        floor=float(det.get("floor", 1e3)),
        grid_fraction=None if det.get("grid_fraction") is None else float(det["grid_fraction"]),
        enabled=bool(det.get("enabled", True)),
    )
    return Experiment(cfg, grid, kernel, flux, profile, t_final, cfl, order, stride, snaps,
                      detector)


# ---------------------------------------------------------------------------
# single runs

@dataclass
class RunResult:
    exit_code: int
    event: BlowupEvent
    threshold: ThresholdReport | None
    sup_slope: float
    inf_slope: float
    t_end: float
    trace: Trace | None = None
    snapshots: list = field(default_factory=list)
    final_u: np.ndarray | None = None
    failure: str = ""

    def summary(self) -> dict:
        return {
            "exit_code": self.exit_code,
            "sup_slope": self.sup_slope,
            "inf_slope": self.inf_slope,
            "t_end": self.t_end,
            "blowup": self.event.to_dict(),
            "threshold": None if self.threshold is None else self.threshold.to_dict(),
            "failure": self.failure,
        }


def analytic_threshold(exp: Experiment) -> ThresholdReport | None:
    """Threshold matching the experiment's flux and kernel; None for the local LWR flux."""
    sup, inf = exp.profile.sup_slope, exp.profile.inf_slope
    if exp.flux.name == "lwr":
        return None
    k = exp.kernel
    if exp.flux.name == "arrhenius" and exp.flux.m == 1.0 and k.k0 == 1.0 \
            and k.kind in (KernelKind.CONSTANT, KernelKind.LINEAR):
        return threshold_report(k.kind.value, k.gamma, inf, sup)
    try:
        return general_lambda(exp.flux, k, inf, resolution=201, sup_slope=sup)
    except FormulaError as exc:
        logger.warning("no threshold for flux %r: %s", exp.flux.name, exc)
        return None


def execute(exp: Experiment, stop_on_detect: bool = True, t_final: float | None = None,
            detector_enabled: bool | None = None) -> RunResult:
    """Run one experiment in memory; ``detector_enabled`` overrides the config."""
    u0 = initial_data.cell_averages(exp.profile, exp.grid)
    thr = analytic_threshold(exp)
    detector = copy.copy(exp.detector)
    if detector_enabled is not None:
        detector.enabled = detector_enabled
    s0 = make_state(exp.grid, u0, exp.kernel)
    try:
        state, event, trace, snaps = run(
            s0, exp.flux, exp.kernel, t_final or exp.t_final, exp.cfl, detector, exp.order,
            exp.trace_stride, exp.snapshot_times, stop_on_detect)
    except NumericDivergence as exc:
        last = exc.last_state
        return RunResult(EXIT_NUMERIC, BlowupEvent(), thr, exp.profile.sup_slope,
                         exp.profile.inf_slope, last.t if last else 0.0,
                         final_u=None if last is None else last.u, failure=str(exc))
    code = EXIT_BLOWUP if event.detected else EXIT_CLEAN
    return RunResult(code, event, thr, exp.profile.sup_slope, exp.profile.inf_slope, state.t,
                     trace, snaps, state.u)


def write_trace(trace: Trace, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(Trace.COLUMNS)
        for row in trace.as_array():
            w.writerow([repr(float(v)) for v in row])


def write_snapshot(snap, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("x", "u", "ubar", "ux"))
        for row in zip(snap.x, snap.u, snap.ubar, snap.ux):
            w.writerow([repr(float(v)) for v in row])


def run_single(config: dict, out_dir: str | Path | None = None) -> RunResult:
    """Run one configured simulation and write its artifacts to ``out_dir``.

    Artifacts: ``trace.csv``, ``snapshots/t_<time>.csv``, ``blowup.json``,
    ``threshold.json`` and ``report.json``.
    """
    exp = resolve(config)
    result = execute(exp)
    if out_dir is not None:
        out = Path(out_dir)
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
        if result.trace is not None:
            write_trace(result.trace, out / "trace.csv")
        for snap in result.snapshots:
            write_snapshot(snap, out / "snapshots" / f"t_{snap.t:.6g}.csv")
        _dump(out / "blowup.json", result.event.to_dict())
        _dump(out / "threshold.json", None if result.threshold is None else result.threshold.to_dict())
        _dump(out / "report.json", {"config": exp.config, **result.summary()})
    return result


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ---------------------------------------------------------------------------
# sweeps

def axis_values(spec: dict) -> list[float]:
    """Expand ``{"values": [...]}``, ``{"linspace": [a, b, n]}`` or ``{"logspace": [a, b, n]}``."""
    if "values" in spec:
        vals = [float(v) for v in spec["values"]]
    elif "linspace" in spec:
        a, b, n = spec["linspace"]
        vals = np.linspace(float(a), float(b), int(n)).tolist()
    elif "logspace" in spec:
        a, b, n = spec["logspace"]
        vals = np.logspace(float(a), float(b), int(n)).tolist()
    else:
        raise ConfigError(f"axis {spec.get('key')!r}: give values, linspace or logspace")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"axis {spec.get('key')!r}: range must be non-empty and finite")
    return vals


@dataclass
class SweepPoint:
    index: int
    value1: float
    value2: float | None
    sup_slope: float = math.nan
    inf_slope: float = math.nan
    threshold: float = math.nan
    above_threshold: bool = False
    detected: bool = False
    t_blowup: float | None = None
    peak_slope: float = math.nan
    failure: str = ""

    @property
    def consistent(self) -> bool:
        # thresholds are sufficient conditions: above must imply detected
        return (not self.above_threshold) or self.detected

    def row(self, axis1: str, axis2: str | None) -> list:
        return [self.index, axis1, self.value1, axis2 or "", "" if self.value2 is None else self.value2,
                self.sup_slope, self.inf_slope, self.threshold, int(self.above_threshold),
                int(self.detected), "" if self.t_blowup is None else self.t_blowup,
                self.peak_slope, int(self.consistent), self.failure]


@dataclass
class SweepResult:
    axis1: str
    axis2: str | None
    points: list[SweepPoint]

    @property
    def soundness(self) -> float:
        """Fraction of above-threshold points where blow-up was detected."""
        above = [p for p in self.points if p.above_threshold and not p.failure]
        if not above:
            return 1.0
        return sum(p.detected for p in above) / len(above)

    @property
    def failed(self) -> list[int]:
        return [p.index for p in self.points if p.failure]

    def boundary_gaps(self) -> list[dict]:
        """Per inf-slope row: analytic threshold minus the smallest detected sup-slope."""
        rows: dict[float, list[SweepPoint]] = {}
        for p in self.points:
            if not p.failure:
                rows.setdefault(p.inf_slope, []).append(p)
        out = []
        for inf, pts in sorted(rows.items()):
            hits = [p.sup_slope for p in pts if p.detected]
            thr = pts[0].threshold
            smallest = min(hits) if hits else None
            out.append({"inf_slope": inf, "threshold": thr, "empirical_boundary": smallest,
                        "gap": None if smallest is None else thr - smallest})
        return out

    def report(self) -> dict:
        return {"axis1": self.axis1, "axis2": self.axis2, "n_points": len(self.points),
                "soundness": self.soundness, "failed_points": self.failed,
                "inconsistent_points": [p.index for p in self.points if not p.consistent],
                "boundary_gaps": self.boundary_gaps()}

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_CSV_COLUMNS)
            for p in self.points:
                w.writerow(p.row(self.axis1, self.axis2))


def _run_point(args) -> SweepPoint:
    index, configs, v1, v2 = args
    point = SweepPoint(index, v1, v2)
    detections, times, peaks = [], [], []
    for config in configs:
        try:
            exp = resolve(config)
            res = execute(exp)
        except NslabError as exc:
            point.failure = f"config: {exc}"
            return point
        if res.exit_code == EXIT_NUMERIC:
            point.failure = f"numeric: {res.failure}"
        point.sup_slope, point.inf_slope = res.sup_slope, res.inf_slope
        if res.threshold is not None:
            point.threshold = res.threshold.threshold
        elif exp.flux.name == "lwr":
            # local model: any compressive slope steepens into a shock
            point.threshold = 0.0
        else:
            point.threshold = math.nan
            point.failure = point.failure or "threshold: undefined for this flux"
        detections.append(res.event.detected)
        times.append(res.event.t_blowup)
        peaks.append(res.event.peak_slope)
    point.above_threshold = bool(point.sup_slope > point.threshold)
    # repeated runs must agree before a point counts as detected
    point.detected = all(detections)
    point.t_blowup = max(times) if point.detected else None
    point.peak_slope = float(min(peaks))
    return point


def run_sweep(sweep: dict, out_dir: str | Path | None = None, jobs: int | None = None) -> SweepResult:
    """Run every point of a one- or two-axis sweep.

    ``sweep`` has ``axis1`` (and optionally ``axis2``), each ``{"key": dotted,
    ...range...}``, plus ``fixed`` (a base config), ``classifier`` (detector
    overrides), ``runs_per_point`` (repeats with seeds ``seed + r``),
    ``output_dir`` and ``parallelism``.  Points run in parallel but are
    reported in grid order.
    """
    unknown = set(sweep) - {"axis1", "axis2", "fixed", "runs_per_point", "classifier",
                            "output_dir", "parallelism", "name", "description"}
    if unknown:
        raise ConfigError(f"sweep: unknown keys {sorted(unknown)}")
    if "axis1" not in sweep:
        raise ConfigError("sweep.axis1: required")
    base = merge(DEFAULTS, sweep.get("fixed", {}))
    if sweep.get("classifier"):
        base = merge(base, {"detector": sweep["classifier"]})
    a1 = sweep["axis1"]
    a2 = sweep.get("axis2")
    for ax in filter(None, (a1, a2)):
        if "key" not in ax:
            raise ConfigError("sweep axis: 'key' required")
        get_key(base, ax["key"])
    vals1 = axis_values(a1)
    vals2 = axis_values(a2) if a2 else [None]
    runs = int(sweep.get("runs_per_point", 1))
    if runs < 1:
        raise ConfigError("sweep.runs_per_point: must be at least 1")
    tasks = []
    for i, (v1, v2) in enumerate((v1, v2) for v1 in vals1 for v2 in vals2):
        cfg = copy.deepcopy(base)
        set_key(cfg, a1["key"], v1)
        if a2:
            set_key(cfg, a2["key"], v2)
        reps = []
        for r in range(runs):
            rep = copy.deepcopy(cfg)
            rep["seed"] = int(cfg["seed"]) + r
            reps.append(rep)
        tasks.append((i, reps, v1, v2))
    jobs = jobs or int(sweep.get("parallelism", 1))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = list(pool.map(_run_point, tasks))
    else:
        points = [_run_point(t) for t in tasks]
    result = SweepResult(a1["key"], a2["key"] if a2 else None, points)
    out_dir = out_dir if out_dir is not None else sweep.get("output_dir")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "sweep.csv")
        _dump(out / "report.json", result.report())
    return result


# ---------------------------------------------------------------------------
# refinement

@dataclass
class RefinementReport:
    n_cells: list[int]
    t_sample: float
    peak_slopes: list[float]
    ratios: list[float]
    l1_differences: list[float]
    l1_orders: list[float]

    @property
    def diverging(self) -> bool:
        return bool(self.ratios) and all(r >= DIVERGENCE_RATIO for r in self.ratios)

    @property
    def converged(self) -> bool:
        return bool(self.ratios) and all(r <= CONVERGENCE_RATIO for r in self.ratios)

    @property
    def verdict(self) -> str:
        if self.diverging:
            return "diverging"
        if self.converged:
            return "converged"
        return "inconclusive"

    def event(self) -> BlowupEvent:
        """Offline blow-up verdict from refinement divergence."""
        if not self.diverging:
            return BlowupEvent(peak_slope=self.peak_slopes[-1])
        return BlowupEvent(True, self.t_sample, None, self.peak_slopes[-1],
                           Criterion.REFINEMENT_DIVERGENCE)

    def to_dict(self) -> dict:
        return {"n_cells": self.n_cells, "t_sample": self.t_sample,
                "peak_slopes": self.peak_slopes, "ratios": self.ratios,
                "l1_differences": self.l1_differences, "l1_orders": self.l1_orders,
                "verdict": self.verdict}


def _restrict(fine: np.ndarray) -> np.ndarray:
    return 0.5 * (fine[0::2] + fine[1::2])


def refinement_study(config: dict, levels: int = 3, t_sample: float | None = None,
                     jobs: int = 1) -> RefinementReport:
    """Rerun ``config`` with the cell count doubled per level.

    Every level runs to ``t_sample`` (default ``sim.t_final``) without
    stopping at detection.  Peak slopes are compared between consecutive
    levels; the L1 differences of the final states (fine restricted to coarse)
    give self-convergence orders.
    """
    if levels < 2:
        raise ConfigError("levels: need at least 2")
    base = merge(DEFAULTS, config)
    configs = []
    for lev in range(levels):
        cfg = copy.deepcopy(base)
        cfg["grid"]["n_cells"] = int(base["grid"]["n_cells"]) * 2 ** lev
        configs.append(cfg)
    exps = [resolve(c) for c in configs]
    t_end = t_sample if t_sample is not None else exps[0].t_final
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_refine_level, [(e, t_end) for e in exps]))
    else:
        results = [_refine_level((e, t_end)) for e in exps]
    for e, r in zip(exps, results):
        if r.exit_code == EXIT_NUMERIC:
            raise NumericDivergence(f"refinement level n={e.grid.n_cells}: {r.failure}")
    peaks = [float(np.max(np.abs(_slope(e.grid, r.final_u)))) for e, r in zip(exps, results)]
    ratios = [(b / a) if a > 0 else (1.0 if b == 0 else math.inf) for a, b in zip(peaks, peaks[1:])]
    diffs = []
    for (e1, r1), r2 in zip(zip(exps, results), results[1:]):
        diffs.append(float(np.sum(np.abs(r1.final_u - _restrict(r2.final_u))) * e1.grid.dx))
    orders = [math.log2(a / b) if a > 0 and b > 0 else math.nan for a, b in zip(diffs, diffs[1:])]
    return RefinementReport([e.grid.n_cells for e in exps], t_end, peaks, ratios, diffs, orders)


def _refine_level(args):
    exp, t_end = args
    return execute(exp, stop_on_detect=False, t_final=t_end, detector_enabled=False)


def _slope(grid, u):
    from nslab.kernels import centered_slope
    return centered_slope(grid, u)
