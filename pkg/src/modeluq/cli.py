"""Command-line front end.

Exit status: 0 when every stage completes (whatever the verdicts),
2 for configuration errors, 3 for data errors, 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, DataError, EmptySplit, IllConditionedDesignWarning,
                     InvalidTopology, ModelUQError, NormalityRejected, OddSeriesCount,
                     ZeroRealizedForce)
from .io import dumps_report, export_measurements, ingest_measurements
from .pipeline import (StageError, build_surrogate, generate_data, load_config, provenance,
                       run_pipeline, scheme_list, select_design, write_outputs)
from .press import assemble_quasistatic, correct_measurements, default_layout, train_candidates
from .stats import normality_screen, run_algorithm1

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

_CONFIG_ERRORS = (ConfigError, InvalidTopology)
_DATA_ERRORS = (DataError, ZeroRealizedForce, NormalityRejected, OddSeriesCount, EmptySplit)


def exit_code(exc):
    cause = exc.cause if isinstance(exc, StageError) else exc
    if isinstance(cause, _CONFIG_ERRORS):
        return EXIT_CONFIG
    if isinstance(cause, _DATA_ERRORS):
        return EXIT_DATA
    return EXIT_NUMERICAL


def _config(args):
    over = {"seed": args.seed, "tol": args.tol, "memory_variant": args.variant}
    if args.criterion is not None:
        base = load_config(args.config)
        over["oed"] = dict(base["oed"], criterion=args.criterion)
    return load_config(args.config, **over)


def _tensor(cfg, args):
    surrogate = build_surrogate(cfg)
    model = assemble_quasistatic(surrogate)
    path = args.data or cfg["data"]
    if path:
        tensor = ingest_measurements(path, default_layout(surrogate))
    else:
        tensor = generate_data(cfg, surrogate, model)
    return surrogate, model, correct_measurements(tensor)


def _emit(doc, out):
    text = dumps_report(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_generate(args):
    cfg = _config(args)
    tensor = generate_data(cfg)
    text = export_measurements(tensor, args.out)
    if not args.out:
        sys.stdout.write(text)


def cmd_oed(args):
    cfg = _config(args)
    surrogate, model, tensor = _tensor(cfg, args)
    design = select_design(cfg, model, tensor, surrogate.nominal)
    _emit({"provenance": provenance(cfg), "sensors": list(surrogate.sensor_names()),
           "selected": design.to_dict(), "evaluated": design.diagnostics}, args.out)


def _omega(text, n_s):
    if text is None:
        return np.ones(n_s, dtype=int)
    if len(text) != n_s or set(text) - {"0", "1"}:
        raise ConfigError(f"--omega must be {n_s} binary digits, got {text!r}")
    return np.array([int(c) for c in text])


def cmd_screen(args):
    cfg = _config(args)
    surrogate, _, tensor = _tensor(cfg, args)
    tensor = tensor.with_omega(_omega(args.omega, tensor.n_s))
    names = surrogate.sensor_names()
    rows = normality_screen(tensor, float(cfg["normality"]["level"]))
    _emit({"provenance": provenance(cfg), "normality": [
        {"sensor": names[r.sensor], "W": r.w, "p_value": r.p_value,
         "sigma_hat_um": r.sigma_hat * 1e6, "passed": r.passed} for r in rows]}, args.out)


def cmd_detect(args):
    cfg = _config(args)
    surrogate, model, tensor = _tensor(cfg, args)
    tensor = tensor.with_omega(_omega(args.omega, tensor.n_s))
    candidates, p_free = train_candidates(model, tensor, surrogate.nominal, cfg["train_series"],
                                          variant=cfg["memory_variant"])
    reports = {}
    for mid in cfg["models"]:
        cand = candidates[mid]
        rep = run_algorithm1(model, tensor.layout, cand.tensor(tensor), scheme_list(cfg),
                             float(cfg["tol"]), p_free, model_id=mid)
        reports[mid] = dict(rep.to_dict(), friction=cand.to_dict()["friction"])
    _emit({"provenance": provenance(cfg), "models": reports,
           "summary": {k: v["verdict"] for k, v in reports.items()}}, args.out)


def cmd_pipeline(args):
    cfg = _config(args)
    result = run_pipeline(cfg, data_path=args.data)
    if args.out_dir:
        write_outputs(result, args.out_dir)
    else:
        sys.stdout.write(result.text)


def build_parser():
    parser = argparse.ArgumentParser(prog="modeluq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--tol", type=float, help="override the global test level")
    common.add_argument("--criterion", choices=("A", "D", "E"), help="design criterion")
    common.add_argument("--variant", choices=("literal", "corrected"),
                        help="memory-state update rule")
    common.add_argument("--data", help="measurement file (um / N); generated when omitted")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write synthetic measurements")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("oed", parents=[common], help="select sensors")
    p.add_argument("--out")
    p.set_defaults(func=cmd_oed)

    for name, func, text in (("screen", cmd_screen, "normality screen of paired differences"),
                             ("detect", cmd_detect, "calibration/validation test per model")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--omega", help="active sensors as binary digits, e.g. 110")
        p.add_argument("--out")
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage")
    p.add_argument("--out-dir", help="directory for report, curves and tables")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IllConditionedDesignWarning)
            args.func(args)
    except ModelUQError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
