"""End-to-end run: design, screening and model-uncertainty detection.

Stages, in order:

1. sensor selection on the initial (or reused) data,
2. restriction to the selected sensors,
3. normality screen of paired measurement differences,
4. the calibration/validation test for every candidate friction model,
5. report and plot data.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import MAX_NEWTON, STATE_TOL, InputSchedule
from .errors import ConfigError, IllConditionedDesignWarning, ModelUQError, NormalityWarning
from .estimation import MAX_ITER, TOL_GRAD, identify_parameters, model_outputs
from .io import SCHEMA_VERSION, dumps_report, ingest_measurements, write_table
from .oed import CardinalityConstraint, exhaustive_select, greedy_select
from .press import (MODEL_IDS, assemble_quasistatic, correct_measurements, default_layout,
                    generate_synthetic_measurements, surrogate_from_dict, train_candidates)
from .press.friction import MemoryArctan, generator_friction
from .press.structure import DEFAULT_CONFIG
from .stats import SplitScheme, normality_screen, run_algorithm1, standard_schemes

DEFAULTS = {
    "seed": 0,
    "surrogate": None,
    "data": None,
    "generate": {"n_series": 6, "peak": 1400.0, "n_up": 15, "n_down": 14, "jitter": 0.0,
                 "p_true": None, "friction": {"amplitude": 80.0, "force_scale": 1000.0}},
    "oed": {"criterion": "E", "min_sensors": 2, "max_sensors": 2, "method": "exhaustive"},
    "normality": {"level": 0.05, "policy": "warn"},
    "tol": 0.05,
    "schemes": None,
    "models": list(MODEL_IDS),
    "memory_variant": "literal",
    "train_series": [0, 1, 2, 3],
    "reuse_initial_data": True,
    "second_order": True,
}

SCHEME_LABELS = {
    "loading-within": SplitScheme("alternating-within-phase", phase="loading"),
    "unloading-within": SplitScheme("alternating-within-phase", phase="unloading"),
    "loading-vs-unloading": SplitScheme("loading-vs-unloading"),
    "across-all": SplitScheme("alternating-across-all"),
}


class StageError(ModelUQError):
    """A stage failed; ``stage`` names it and ``cause`` is the original error."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(source=None, **overrides):
    """Merge a JSON file or dict over the defaults and validate it."""
    if source is None:
        raw = {}
    elif isinstance(source, dict):
        raw = source
    else:
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = _merge(DEFAULTS, raw)
    cfg = _merge(cfg, {k: v for k, v in overrides.items() if v is not None})
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if not 0.0 < float(cfg["tol"]) < 1.0:
        raise ConfigError("tol must lie in (0, 1)")
    if cfg["oed"]["criterion"] not in ("A", "D", "E"):
        raise ConfigError("oed.criterion must be A, D or E")
    if cfg["oed"]["method"] not in ("exhaustive", "greedy"):
        raise ConfigError("oed.method must be exhaustive or greedy")
    if cfg["normality"]["policy"] not in ("abort", "warn", "skip"):
        raise ConfigError("normality.policy must be abort, warn or skip")
    if cfg["memory_variant"] not in ("literal", "corrected"):
        raise ConfigError("memory_variant must be literal or corrected")
    bad = set(cfg["models"]) - set(MODEL_IDS)
    if bad or not cfg["models"]:
        raise ConfigError(f"models must be a non-empty subset of {list(MODEL_IDS)}")
    schemes = scheme_list(cfg)
    if not schemes:
        raise ConfigError("at least one split scheme is required")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")


def scheme_list(cfg):
    if cfg["schemes"] is None:
        return standard_schemes()
    out = []
    for item in cfg["schemes"]:
        if isinstance(item, str):
            if item not in SCHEME_LABELS:
                raise ConfigError(f"unknown scheme {item!r}; use one of {sorted(SCHEME_LABELS)}")
            out.append(SCHEME_LABELS[item])
        elif isinstance(item, dict):
            try:
                out.append(SplitScheme(**item))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad scheme {item}: {exc}") from exc
        else:
            raise ConfigError(f"bad scheme entry {item!r}")
    return out


def build_surrogate(cfg):
    src = cfg["surrogate"]
    if src is None:
        desc = DEFAULT_CONFIG
    elif isinstance(src, dict):
        desc = src
    else:
        try:
            desc = json.loads(Path(src).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read surrogate description {src}: {exc}") from exc
    return surrogate_from_dict(desc)


def _generator(cfg):
    fr = cfg["generate"]["friction"]
    if fr is None:
        return None
    if "weights" in fr:
        return MemoryArctan(tuple(tuple(u) for u in fr["units"]), np.asarray(fr["weights"]),
                            float(fr.get("bias", 0.0)), fr.get("variant", cfg["memory_variant"]))
    return generator_friction(float(fr.get("amplitude", 80.0)),
                              float(fr.get("force_scale", 1000.0)), cfg["memory_variant"])


def generate_data(cfg, surrogate=None, model=None):
    surrogate = surrogate or build_surrogate(cfg)
    model = model or assemble_quasistatic(surrogate)
    gen = cfg["generate"]
    p_true = surrogate.nominal if gen["p_true"] is None else np.asarray(gen["p_true"], float)
    sched = InputSchedule.ramp(float(gen["peak"]), int(gen["n_up"]), int(gen["n_down"]))
    return generate_synthetic_measurements(model, p_true, sched, default_layout(surrogate),
                                           int(gen["n_series"]), cfg["seed"],
                                           friction=_generator(cfg), jitter=float(gen["jitter"]))


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ModelUQError as exc:
        raise StageError(name, exc) from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def select_design(cfg, model, tensor, p0):
    oed = cfg["oed"]
    constraint = CardinalityConstraint(oed.get("min_sensors"), oed.get("max_sensors"),
                                       tuple(oed.get("forced_on", ())),
                                       tuple(oed.get("forced_off", ())))
    select = exhaustive_select if oed["method"] == "exhaustive" else greedy_select
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedDesignWarning)
        return select(model, tensor.layout, tensor, constraint, oed["criterion"], p0)


@dataclass
class PipelineResult:
    report: dict
    plots: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def text(self):
        return dumps_report(self.report)


def provenance(cfg):
    return {
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "seed": cfg["seed"],
        "memory_variant": cfg["memory_variant"],
        "tolerances": {"state_residual": STATE_TOL, "newton_iterations": MAX_NEWTON,
                       "gradient": TOL_GRAD, "optimizer_iterations": MAX_ITER,
                       "tol": float(cfg["tol"])},
        "config": cfg,
    }


def run_pipeline(cfg, data_path=None):
    """Run every stage; returns a :class:`PipelineResult`.

    Verdicts are data: a rejected model is reported, not raised. Any stage
    failure raises :class:`StageError` naming the stage.
    """
    cfg = load_config(cfg)
    surrogate = _stage("config", build_surrogate, cfg)
    model = _stage("config", assemble_quasistatic, surrogate)
    layout = default_layout(surrogate)
    data_path = data_path or cfg["data"]
    if data_path is not None:
        tensor = _stage("data", ingest_measurements, data_path, layout)
    else:
        tensor = _stage("generate", generate_data, cfg, surrogate, model)
    tensor = _stage("correct", correct_measurements, tensor)
    p0 = surrogate.nominal
    initial = tensor if cfg["reuse_initial_data"] else _stage("generate", generate_data, cfg,
                                                               surrogate, model)

    design = _stage("oed", select_design, cfg, model, initial, p0)
    omega = design.omega
    active = tensor.with_omega(omega)

    policy = cfg["normality"]["policy"]
    if policy == "skip":
        screen = None
    else:
        screen = _stage("screen", normality_screen, active, float(cfg["normality"]["level"]))
    schemes = scheme_list(cfg)

    candidates, p_free = _stage("train", train_candidates, model, active, p0,
                                cfg["train_series"], variant=cfg["memory_variant"])
    reports, plots, fits = {}, {}, {}
    for mid in cfg["models"]:
        cand = candidates[mid]
        data = cand.tensor(active)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NormalityWarning)
            rep = _stage(f"detect:{mid}", run_algorithm1, model, active.layout, data, schemes,
                         float(cfg["tol"]), p_free, normality=screen,
                         normality_policy="warn" if policy == "skip" else policy,
                         second_order=cfg["second_order"], model_id=mid)
        fit = _stage(f"fit:{mid}", identify_parameters, model, active.layout, data, p_free)
        reports[mid] = dict(rep.to_dict(), friction=cand.to_dict()["friction"])
        fits[mid] = fit.p
        plots[mid] = plot_rows(model, fit.p, data)

    names = layout.sensor_names()
    report = {
        "schema_version": SCHEMA_VERSION,
        "provenance": provenance(cfg),
        "parameters": list(surrogate.parameter_names),
        "sensors": list(names),
        "design": {"omega": "".join(str(int(w)) for w in omega),
                   "criterion": cfg["oed"]["criterion"],
                   "selected": design.to_dict(), "evaluated": design.diagnostics},
        "normality": None if screen is None else [
            {"sensor": names[r.sensor], "W": r.w, "p_value": r.p_value,
             "sigma_hat_um": r.sigma_hat * 1e6, "passed": r.passed} for r in screen],
        "frictionless_parameters": list(p_free),
        "models": reports,
        "fitted_parameters": {k: list(v) for k, v in fits.items()},
        "summary": {k: v["verdict"] for k, v in reports.items()},
    }
    tables = {"design": design_table(design, names), "verdicts": verdict_table(reports)}
    return PipelineResult(report, plots, tables)


PLOT_HEADER = ("series", "input_index", "sensor", "q_setpoint_N", "measured_um", "model_um")


def plot_rows(model, p, tensor):
    """One row per (series, input, active sensor): measured and model displacement."""
    h, _ = model_outputs(model, p, tensor.schedule.inputs)
    names = tensor.layout.sensor_names()
    sp = tensor.schedule.setpoints if tensor.schedule.setpoints is not None \
        else tensor.schedule.inputs[:, 0]
    rows = []
    for i in range(tensor.n_m):
        for j in range(tensor.n_q):
            for k in np.flatnonzero(tensor.layout.omega):
                rows.append((i + 1, j + 1, names[k], float(sp[j]),
                             float(tensor.z[i, j, k] * 1e6), float(h[j, k] * 1e6)))
    return rows


def design_table(design, names):
    rows = []
    for d in design.diagnostics:
        rows.append((d["omega"], d["feasible"], d["psi_A"], d["psi_D"], d["psi_E"]))
    return ("omega", "feasible", "psi_A", "psi_D", "psi_E"), rows


def verdict_table(reports):
    rows = []
    for mid, rep in reports.items():
        for sc in rep["scenarios"]:
            rows.append((mid, sc["scenario"], sc["alpha_min"], sc["rejected"]))
    return ("model", "scenario", "alpha_min", "rejected"), rows


def write_outputs(result, out_dir):
    """Report, per-model plot data and delimited tables under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(result.text)
    for mid, rows in result.plots.items():
        write_table(rows, PLOT_HEADER, out / f"curves_{mid}.csv")
    for name, (header, rows) in result.tables.items():
        write_table([["" if v is None else v for v in r] for r in rows], header,
                    out / f"{name}.csv")
    summary = {"summary": result.report["summary"], "omega": result.report["design"]["omega"]}
    (out / "verdicts.json").write_text(dumps_report(summary))
    return out
