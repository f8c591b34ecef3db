"""
Command-line entry point.

Each command writes its output to ``--output`` (or stdout) and, when writing
to a file, a ``<output>.meta.json`` sidecar with the argument vector, the
resolved configuration, the seed, library versions, warnings and the SHA-256
of the input. Running ``fracmort`` again with the recorded ``argv`` reproduces
the output byte for byte.

Failures exit nonzero and print a JSON object with ``error``, ``module`` and
``message`` keys on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import traceback
import warnings
from importlib import metadata

import numpy as np
import scipy

from . import data as data_mod
from . import hurst as hurst_mod
from .errors import DataFormatError
from .fgn import generate_fgn
from .mortality import MortalityModel, Sex, fit_alpha0, fit_model, forecast, residuals, survival_curve
from .qgv import estimate_qgv, get_filter

SEED_ENV = "FRACMORT_SEED"
FILTERS = ("classical-k2", "daubechies4")
HURST_METHODS = tuple(m.value for m in hurst_mod.HurstMethod)
EXIT_ERROR = 1
EXIT_USAGE = 2

log = logging.getLogger("fracmort")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        seed = int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be a nonnegative integer, got {raw!r}") from None
    if seed < 0:
        raise UsageError(f"{SEED_ENV} must be a nonnegative integer, got {raw!r}")
    return seed


def _seed(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("seed must be nonnegative")
    return value


def _year_range(text: str) -> tuple[int, int]:
    try:
        start, end = (int(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:END, got {text!r}") from None
    if end < start:
        raise argparse.ArgumentTypeError("END must not precede START")
    return start, end


def _age_list(text: str) -> list[int]:
    ages = []
    for part in text.split(","):
        if ":" in part:
            a, b = (int(p) for p in part.split(":"))
            ages.extend(range(a, b + 1))
        else:
            ages.append(int(part))
    return ages


def _add_cohort_args(p, required=True):
    p.add_argument("--input", help="Mx_1x1 table (default: bundled synthetic fixture)")
    p.add_argument("--age", type=int, required=required)
    p.add_argument("--sex", type=Sex.parse, required=required, help="F, M or T")
    p.add_argument("--years", type=_year_range, default=(1950, 2004), help="START:END (default 1950:2004)")
    p.add_argument("--max-age", type=int, default=data_mod.MODEL_MAX_AGE)


def _add_fit_args(p):
    p.add_argument("--hurst-method", choices=HURST_METHODS, default=hurst_mod.HurstMethod.RESCALED_RANGE.value)
    p.add_argument("--filter", choices=FILTERS, default="classical-k2")


def _add_model_source(p):
    p.add_argument("--model", help="model JSON from 'fit'; otherwise the cohort is fitted here")
    _add_cohort_args(p, required=False)
    _add_fit_args(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracmort", description="Fractional OU mortality modelling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fgn", help="simulate fractional Gaussian noise")
    p.add_argument("--hurst", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="number of increments")
    p.add_argument("--mesh", type=float, default=1.0)
    p.add_argument("--method", choices=("auto", "circulant", "cholesky"), default="auto")

    p = sub.add_parser("est-hurst", help="estimate the Hurst index of a series")
    p.add_argument("--input", help="CSV or one-value-per-line series")
    p.add_argument("--column", help="column name or 0-based index (default: last)")
    p.add_argument("--method", choices=HURST_METHODS + ("all",), default=hurst_mod.HurstMethod.RESCALED_RANGE.value)
    p.add_argument("--bandwidth", type=int, help="local Whittle bandwidth m")
    p.add_argument("--diagnostics", help="write log-log diagnostics CSV here")
    p.add_argument("--compare-hurst", action="store_true", help="all estimators over sliding windows")
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--step", type=int, default=None)
    p.add_argument("--hmd", help="Mx_1x1 table; estimate on the log-rate residuals of a cohort")
    p.add_argument("--age", type=int)
    p.add_argument("--sex", type=Sex.parse)
    p.add_argument("--years", type=_year_range, default=(1950, 2004))

    p = sub.add_parser("est-qgv", help="estimate (H, sigma, lambda) by quadratic variations")
    p.add_argument("--input", required=True)
    p.add_argument("--column")
    p.add_argument("--mesh", type=float, default=1.0)
    p.add_argument("--filter", choices=FILTERS, default="classical-k2")
    p.add_argument("--force-lambda", action="store_true")

    p = sub.add_parser("fit", help="fit the hazard model to one cohort")
    _add_cohort_args(p)
    _add_fit_args(p)

    p = sub.add_parser("forecast", help="Monte Carlo hazard bands")
    _add_model_source(p)
    p.add_argument("--n-years", type=int, default=None, help="default: model horizon")
    p.add_argument("--n-paths", type=int, default=10_000)
    p.add_argument("--coverage", type=float, default=0.955)
    p.add_argument("--band", choices=("auto", "sd", "quantile"), default="auto")

    p = sub.add_parser("survival", help="Monte Carlo survival probabilities")
    _add_model_source(p)
    p.add_argument("--t", type=float, default=0.0, help="start time on the model clock")
    p.add_argument("--months", type=int, default=12, help="horizon in months")
    p.add_argument("--y-t", type=float, default=None, help="fOU state at t (default: fitted residual, 0 at t=0)")
    p.add_argument("--n-paths", type=int, default=10_000)

    p = sub.add_parser("fixture", help="write the synthetic Italian-style table")
    p.add_argument("--ages", type=_age_list, default=list(range(0, data_mod.OPEN_AGE + 1)))
    p.add_argument("--years", type=_year_range, default=(1950, 2004))
    p.add_argument("--format", choices=("hmd", "csv", "json"), default="hmd")

    for name, sp in sub.choices.items():
        sp.add_argument("--output", "-o", help="output path (default: stdout, no sidecar)")
        if name in ("gen-fgn", "forecast", "survival", "fixture"):
            sp.add_argument("--seed", type=_seed, default=None, help=f"default: ${SEED_ENV} or 0")
    return parser


# ---- inputs ---------------------------------------------------------------


def _read_series(path: str, column: str | None) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataFormatError(f"{path}: no data")
    header = None
    try:
        [float(c) for c in rows[0] if c.strip()]
    except ValueError:
        header, rows = rows[0], rows[1:]
    if column is None:
        idx = -1
    elif header is not None and column in header:
        idx = header.index(column)
    else:
        try:
            idx = int(column)
        except ValueError:
            raise DataFormatError(f"{path}: no column {column!r}") from None
    values = []
    for r in rows:
        cell = r[idx].strip() if -len(r) <= idx < len(r) else ""
        if cell:  # empty cells (e.g. the first increment) are skipped
            values.append(float(cell))
    return np.asarray(values)


def _table(path: str | None):
    if path is None:
        return data_mod.load_bundled_fixture()
    table, report = data_mod.read_hmd(path)
    for lineno, _, reason in report.skipped:
        warnings.warn(f"{path}:{lineno}: skipped ({reason})", stacklevel=2)
    return table


def _cohort(args):
    if args.age is None or args.sex is None:
        raise UsageError("--age and --sex are required")
    if args.age > args.max_age:
        raise UsageError(f"age {args.age} above --max-age {args.max_age}")
    table = _table(args.input)
    return data_mod.extract_cohort(table, args.age, args.sex, *args.years)


def _model(args) -> MortalityModel:
    if args.model is not None:
        with open(args.model, encoding="utf-8") as fh:
            return MortalityModel.from_json(fh.read())
    return fit_model(_cohort(args), args.hurst_method, get_filter(args.filter))


# ---- commands -------------------------------------------------------------


def _cmd_gen_fgn(args) -> str:
    return generate_fgn(args.hurst, args.n, args.mesh, args.seed, args.method).to_csv()


def _hurst_one(x, method, args):
    if method == hurst_mod.HurstMethod.LOCAL_WHITTLE.value:
        return hurst_mod.estimate_local_whittle(x, args.bandwidth)
    return hurst_mod.estimate_hurst(x, method)


def _cmd_est_hurst(args) -> str:
    if args.hmd is not None:
        if args.age is None or args.sex is None:
            raise UsageError("--hmd needs --age and --sex")
        cohort = data_mod.extract_cohort(_table(args.hmd), args.age, args.sex, *args.years)
        x = residuals(cohort, *fit_alpha0(cohort))
    elif args.input is not None:
        x = _read_series(args.input, args.column)
    else:
        raise UsageError("one of --input or --hmd is required")

    if args.compare_hurst:
        table = hurst_mod.sliding_window_estimates(x, args.window, args.step)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = [m for m in HURST_METHODS]
        writer.writerow(["start", "end"] + names)
        for i, start in enumerate(table["start"]):
            writer.writerow([int(start), int(start) + args.window - 1] + [repr(float(table[m][i])) for m in names])
        return buf.getvalue()

    methods = HURST_METHODS if args.method == "all" else (args.method,)
    estimates = [_hurst_one(x, m, args) for m in methods]
    if args.diagnostics:
        with open(args.diagnostics, "w", encoding="utf-8", newline="") as fh:
            fh.write("method," + estimates[0].diagnostics_csv().splitlines()[0] + "\n")
            for est in estimates:
                for line in est.diagnostics_csv().splitlines()[1:]:
                    fh.write(f"{est.method.value},{line}\n")
    out = {
        e.method.value: {"value": e.value, "n_points": e.n_points, "out_of_range": e.out_of_range}
        for e in estimates
    }
    return json.dumps(out, indent=2) + "\n"


def _cmd_est_qgv(args) -> str:
    x = _read_series(args.input, args.column)
    return estimate_qgv(x, get_filter(args.filter), args.mesh, args.force_lambda).to_json() + "\n"


def _cmd_fit(args) -> str:
    model = fit_model(_cohort(args), args.hurst_method, get_filter(args.filter))
    return model.to_json() + "\n"


def _cmd_forecast(args) -> str:
    model = _model(args)
    n_years = args.n_years if args.n_years is not None else int(round(model.horizon_T))
    band = forecast(model, n_years, args.n_paths, args.seed, args.coverage, args.band)
    return band.to_csv()


def _cmd_survival(args) -> str:
    model = _model(args)
    y_t = args.y_t
    if y_t is None:
        y_t = 0.0
        if args.t > 0 and args.model is None:
            cohort = _cohort(args)
            k = int(round(args.t))
            if abs(args.t - k) > 1e-9 or k >= len(cohort):
                raise UsageError("--y-t is required when --t is not an observed year")
            y_t = float(residuals(cohort, model.h0, model.alpha0)[k])
        elif args.t > 0:
            raise UsageError("--y-t is required with --model and --t > 0")
    horizons, est, se = survival_curve(model, args.t, args.months, args.n_paths, args.seed, y_t)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["month", "time", "survival", "std_error"])
    for k, (tt, s, e) in enumerate(zip(horizons, est, se)):
        writer.writerow([k, repr(float(tt)), repr(float(s)), repr(float(e))])
    return buf.getvalue()


def _cmd_fixture(args) -> str:
    table = data_mod.synthesize_fixture(
        data_mod.italian_style_params,
        ages=args.ages,
        years=range(args.years[0], args.years[1] + 1),
        seed=args.seed,
        label="Italy-like synthetic",
    )
    return {"hmd": table.to_hmd, "csv": table.to_csv, "json": table.to_json}[args.format]()


COMMANDS = {
    "gen-fgn": _cmd_gen_fgn,
    "est-hurst": _cmd_est_hurst,
    "est-qgv": _cmd_est_qgv,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "survival": _cmd_survival,
    "fixture": _cmd_fixture,
}


# ---- driver ---------------------------------------------------------------


def _sha256(path: str | None) -> str | None:
    if path is None:
        return None
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _origin_module(exc: BaseException) -> str:
    module = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = os.path.normpath(frame.filename).split(os.sep)
        if "fracmort" in parts[:-1]:
            module = os.path.splitext(parts[-1])[0]
    return module


def _fail(kind: str, module: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "module": module, "message": message}), file=sys.stderr)
    return code


def run(args: argparse.Namespace, argv: list[str]) -> int:
    """Execute one parsed command; returns the exit status."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        text = COMMANDS[args.command](args)

    # modules log their own warnings; the sidecar keeps a deduplicated copy
    notes = list(dict.fromkeys(str(w.message) for w in caught))

    if args.output is None:
        sys.stdout.write(text)
        return 0
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    input_path = getattr(args, "input", None) or getattr(args, "hmd", None)
    config = {k: (v.value if isinstance(v, Sex) else v) for k, v in vars(args).items()}
    meta = {
        "command": args.command,
        "argv": argv,
        "config": config,
        "seed": getattr(args, "seed", None),
        "seed_source": getattr(args, "seed_source", None),
        "input_sha256": _sha256(input_path),
        "model_sha256": _sha256(getattr(args, "model", None)),
        "warnings": notes,
        "versions": {
            "fracmort": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    with open(args.output + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if hasattr(args, "seed"):
            if args.seed is None:
                args.seed, args.seed_source = _default_seed(), ("env" if SEED_ENV in os.environ else "default")
                # pin the resolved seed so the recorded argv replays without the environment
                argv = argv + ["--seed", str(args.seed)]
            else:
                args.seed_source = "flag"
        return run(args, argv)
    except UsageError as exc:
        return _fail("UsageError", "cli", str(exc), EXIT_USAGE)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(type(exc).__name__, "cli", str(exc), EXIT_ERROR)
    except (ValueError, ArithmeticError, LookupError) as exc:
        return _fail(type(exc).__name__, _origin_module(exc), str(exc), EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
