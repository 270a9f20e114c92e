"""Command line interface.

Subcommands::

    integraft simulate   write one simulated multi-study replicate
    integraft fit        fit one penalized model at fixed parameters
    integraft cv         tune by cross-validation, then fit
    integraft benchmark  simulation study over settings x methods
    integraft evaluate   selection metrics or the prediction protocol
    integraft defaults   print every configurable default as key=value

Numeric and tuning parameters can come from a flat ``key=value`` config
file (``--config``); command line flags override file entries, which
override built-in defaults.  Every command echoes its effective
configuration as ``#``-prefixed lines, and the same lines are written
at the top of every output file together with a short hash of the
configuration, so outputs are traceable.

Exit codes: 0 success, 2 invalid input, 3 benchmark finished with some
failed cells, 1 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

import numpy as np

from . import __version__
from .data import load_studies, standardize
from .errors import (
    CalibrationError,
    ContractError,
    DataFormatError,
    SolverError,
    ValidationError,
)
from .evaluate import (
    ALL_METHODS,
    fit_method,
    repeated_split_eval,
    run_benchmark,
    selection_metrics,
)
from .sim import SimConfig, gen_replicate, write_replicate
from .solver import SolverOptions, fit
from .tuning import METHOD_CODES, TuneGrid, make_spec


def _int(s: str) -> int:
    return int(s)


def _float(s: str) -> float:
    return float(s)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _str(s: str) -> str:
    return s.strip()


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _words(s: str) -> tuple:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _settings(s: str) -> tuple:
    return tuple(v.strip() for v in s.split(";") if v.strip())


_SIM_KEYS = {
    "n_studies": (3, _int),
    "n_per_study": (100, _int),
    "p": (1000, _int),
    "correlation": ("ar(0.5)", _str),
    "structure": ("homogeneous", _str),
    "signal": ("low", _str),
    "n_important": (20, _int),
    "n_shared": (10, _int),
    "target_censoring": (0.3, _float),
    "intercept": (0.5, _float),
    "shared_values": (False, _bool),
}
_TUNE_KEYS = {
    "n_lambda": (100, _int),
    "n_lambda_two": (10, _int),
    "lambda_min_ratio": (0.05, _float),
    "a_values": ((1.8, 3.0, 6.0, 10.0), _floats),
    "ratios": ((0.1, 0.25, 0.5, 1.0, 2.0), _floats),
    "n_folds": (5, _int),
}
_SOLVER_KEYS = {
    "tol": (1e-4, _float),
    "max_sweeps": (1000, _int),
}
_SEED_KEY = {"seed": (0, _int)}

_COMMAND_KEYS = {
    "simulate": {**_SIM_KEYS, "replicate": (0, _int), **_SEED_KEY},
    "fit": {
        "method": (None, _str),
        "lam": (None, _float),
        "a": (None, _float),
        "ratio": (None, _float),
        **_SOLVER_KEYS,
    },
    "cv": {"method": (None, _str), **_TUNE_KEYS, **_SOLVER_KEYS, **_SEED_KEY},
    "benchmark": {
        "settings": (None, _settings),
        "methods": (ALL_METHODS, _words),
        "n_replicates": (50, _int),
        **{k: v for k, v in _SIM_KEYS.items() if k not in ("structure", "correlation", "signal")},
        **_TUNE_KEYS,
        **_SOLVER_KEYS,
        **_SEED_KEY,
    },
    "evaluate": {
        "method": (None, _str),
        "n_splits": (20, _int),
        "test_fraction": (0.25, _float),
        **_TUNE_KEYS,
        **_SOLVER_KEYS,
        **_SEED_KEY,
    },
}
_ALL_KEYS = {k for keys in _COMMAND_KEYS.values() for k in keys}


def _read_config(path: str) -> dict:
    out = {}
    with open(path, "r") as fh:
        for row_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if "=" not in s:
                raise DataFormatError("expected key=value", path=path, row=row_no)
            key, val = s.split("=", 1)
            key = key.strip()
            if key not in _ALL_KEYS:
                raise DataFormatError(f"unknown key {key!r}", path=path, row=row_no)
            out[key] = val.strip()
    return out


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge flags over config-file entries over defaults."""
    keys = _COMMAND_KEYS[command]
    file_cfg = _read_config(args.config) if getattr(args, "config", None) else {}
    out = {}
    for key, (default, coerce) in keys.items():
        raw = getattr(args, key, None)
        if raw is None:
            raw = file_cfg.get(key)
        if raw is None:
            out[key] = default
            continue
        try:
            out[key] = coerce(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ValidationError(f"invalid value for {key}: {raw!r} ({exc})")
    return out


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _banner(cfg: dict) -> list:
    """Effective-config header lines with a short configuration hash."""
    items = [(k, _fmt(v)) for k, v in sorted(cfg.items()) if v is not None]
    canon = "\n".join(f"{k}={v}" for k, v in items)
    digest = hashlib.sha256(canon.encode()).hexdigest()[:12]
    seed = cfg.get("seed", "-")
    lines = [f"integraft {__version__} seed={seed} config={digest}"]
    lines += [f"{k}={v}" for k, v in items]
    return lines


def _echo(lines: list):
    for line in lines:
        print(f"# {line}")


def _write_table(path: str, df, header_lines: list):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        df.to_csv(fh, index=False)


def _write_coef(path: str, coef_original: np.ndarray, header_lines: list):
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("covariate,study,coef\n")
        rows, cols = np.nonzero(coef_original)
        for j, m in zip(rows, cols):
            fh.write(f"{j + 1},{m + 1},{float(coef_original[j, m])!r}\n")


def _read_sparse(path: str, value_names=("coef", "beta_true")) -> dict:
    """Read a sparse coefficient file: covariate,study,value (1-based)."""
    out = {}
    with open(path, "r") as fh:
        header = None
        for row_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = [f.strip() for f in s.split(",")]
            if header is None:
                header = fields
                if len(fields) != 3 or fields[:2] != ["covariate", "study"] or fields[2] not in value_names:
                    raise DataFormatError(
                        "header must be 'covariate,study,coef' or "
                        "'covariate,study,beta_true'",
                        path=path,
                        row=row_no,
                    )
                continue
            try:
                j, m, v = int(fields[0]), int(fields[1]), float(fields[2])
            except (ValueError, IndexError):
                raise DataFormatError("expected int,int,float", path=path, row=row_no)
            if j < 1 or m < 1:
                raise DataFormatError("indices are 1-based", path=path, row=row_no)
            out[(j - 1, m - 1)] = v
    if header is None:
        raise DataFormatError("empty file: missing header", path=path)
    return out


def _sparse_to_matrix(entries: dict, p: int, n_studies: int) -> np.ndarray:
    mat = np.zeros((p, n_studies))
    for (j, m), v in entries.items():
        mat[j, m] = v
    return mat


def _grid_from_cfg(cfg: dict) -> TuneGrid:
    return TuneGrid(
        n_lambda=cfg["n_lambda"],
        n_lambda_two=cfg["n_lambda_two"],
        lambda_min_ratio=cfg["lambda_min_ratio"],
        a_values=cfg["a_values"],
        ratios=cfg["ratios"],
        n_folds=cfg["n_folds"],
    )


def _options_from_cfg(cfg: dict) -> SolverOptions:
    return SolverOptions(tol=cfg["tol"], max_sweeps=cfg["max_sweeps"])


def _spec_summary(spec) -> str:
    parts = [spec.method, f"base={spec.base}"]
    for name in ("lam", "lam_inner", "lam_outer", "lam_group", "lam_indiv", "a"):
        val = getattr(spec, name)
        if val is not None:
            parts.append(f"{name}={val:.6g}")
    return " ".join(parts)


def _run_simulate(args) -> int:
    cfg = _resolve(args, "simulate")
    lines = _banner(cfg)
    _echo(lines)
    sim_cfg = SimConfig(**{k: cfg[k] for k in _SIM_KEYS})
    ms, truth = gen_replicate(sim_cfg, cfg["seed"], cfg["replicate"])
    paths = write_replicate(args.out, ms, truth, header_lines=lines)
    for path in paths:
        print(f"wrote {path}")
    return 0


def _run_fit(args) -> int:
    cfg = _resolve(args, "fit")
    if cfg["method"] is None or cfg["lam"] is None:
        raise ValidationError("fit requires --method and --lam")
    if cfg["method"] not in METHOD_CODES:
        raise ValidationError(
            f"fit accepts the penalized codes {METHOD_CODES}; "
            "meta and pooled are tuned fits, use the cv command"
        )
    if not args.data:
        raise ValidationError("fit requires --data")
    lines = _banner(cfg)
    _echo(lines)
    ms = load_studies(args.data)
    spec = make_spec(cfg["method"], cfg["lam"], a=cfg["a"], ratio=cfg["ratio"])
    res = fit(standardize(ms), spec, options=_options_from_cfg(cfg))
    print(f"spec: {_spec_summary(spec)}")
    print(
        f"converged={res.converged} sweeps={res.n_sweeps} "
        f"objective={res.objective_trace[-1]:.6g} kkt={res.kkt_residual:.3g}"
    )
    sizes = " ".join(str(len(s)) for s in res.selected.per_study)
    print(f"selected: overall={len(res.selected.overall)} per-study={sizes}")
    if args.out:
        _write_coef(f"{args.out}_coef.csv", res.coef_original, lines)
        print(f"wrote {args.out}_coef.csv")
    else:
        rows, cols = np.nonzero(res.coef_original)
        for j, m in zip(rows, cols):
            print(f"x{j + 1} study{m + 1} {res.coef_original[j, m]:.6g}")
    return 0


def _run_cv(args) -> int:
    cfg = _resolve(args, "cv")
    if cfg["method"] is None:
        raise ValidationError("cv requires --method")
    if not args.data:
        raise ValidationError("cv requires --data")
    lines = _banner(cfg)
    _echo(lines)
    ms = load_studies(args.data)
    mf = fit_method(
        ms,
        cfg["method"],
        grid=_grid_from_cfg(cfg),
        seed=cfg["seed"],
        options=_options_from_cfg(cfg),
    )
    for spec in mf.specs:
        print(f"chosen: {_spec_summary(spec)}")
    sizes = " ".join(str(len(s)) for s in mf.selected.per_study)
    print(f"selected: overall={len(mf.selected.overall)} per-study={sizes}")
    if args.out:
        _write_coef(f"{args.out}_coef.csv", mf.coef_original, lines)
        _write_table(f"{args.out}_cv.csv", mf.cv_table, lines)
        print(f"wrote {args.out}_coef.csv")
        print(f"wrote {args.out}_cv.csv")
    return 0


def _parse_setting(descriptor: str, cfg: dict) -> SimConfig:
    parts = descriptor.split(":")
    if len(parts) != 3:
        raise ValidationError(
            f"setting {descriptor!r} must be structure:correlation:signal, "
            "for example homogeneous:banded2:low"
        )
    structure, correlation, signal = parts
    return SimConfig(
        n_studies=cfg["n_studies"],
        n_per_study=cfg["n_per_study"],
        p=cfg["p"],
        correlation=correlation,
        structure=structure,
        signal=signal,
        n_important=cfg["n_important"],
        n_shared=cfg["n_shared"],
        target_censoring=cfg["target_censoring"],
        intercept=cfg["intercept"],
        shared_values=cfg["shared_values"],
    )


def _run_benchmark(args) -> int:
    cfg = _resolve(args, "benchmark")
    if not cfg["settings"]:
        raise ValidationError(
            "benchmark requires --settings (semicolon-separated descriptors)"
        )
    lines = _banner(cfg)
    _echo(lines)
    configs = [_parse_setting(s, cfg) for s in cfg["settings"]]
    res = run_benchmark(
        configs,
        methods=cfg["methods"],
        n_replicates=cfg["n_replicates"],
        seed=cfg["seed"],
        grid=_grid_from_cfg(cfg),
        options=_options_from_cfg(cfg),
    )
    print(res.summary.to_string(index=False))
    if args.out:
        _write_table(f"{args.out}_summary.csv", res.summary, lines)
        _write_table(f"{args.out}_raw.csv", res.raw, lines)
        _write_table(f"{args.out}_failures.csv", res.failures, lines)
        for suffix in ("summary", "raw", "failures"):
            print(f"wrote {args.out}_{suffix}.csv")
    if res.n_failures:
        print(f"benchmark finished with {res.n_failures} failed cells", file=sys.stderr)
        for _, row in res.failures.head(5).iterrows():
            print(
                f"  {row['setting']} rep {row['replicate']} {row['method']}: "
                f"{row['error']}: {row['message']}",
                file=sys.stderr,
            )
        return 3
    return 0


def _run_evaluate(args) -> int:
    if args.coef or args.truth:
        if not (args.coef and args.truth):
            raise ValidationError("selection mode requires both --coef and --truth")
        fitted = _read_sparse(args.coef)
        truth = _read_sparse(args.truth)
        keys = list(fitted) + list(truth)
        p = max(j for j, _ in keys) + 1
        n_studies = max(m for _, m in keys) + 1
        sm = selection_metrics(
            _sparse_to_matrix(fitted, p, n_studies),
            _sparse_to_matrix(truth, p, n_studies),
        )
        print(f"tp={sm.tp} size={sm.size} fp={sm.fp} true_size={sm.true_size}")
        return 0
    cfg = _resolve(args, "evaluate")
    if not args.data or cfg["method"] is None:
        raise ValidationError(
            "evaluate needs either --coef/--truth or --data/--method"
        )
    lines = _banner(cfg)
    _echo(lines)
    ms = load_studies(args.data)
    table = repeated_split_eval(
        ms,
        cfg["method"],
        n_splits=cfg["n_splits"],
        test_fraction=cfg["test_fraction"],
        seed=cfg["seed"],
        grid=_grid_from_cfg(cfg),
        options=_options_from_cfg(cfg),
    )
    by_study = table.groupby("study")["logrank"].mean()
    for study, val in by_study.items():
        print(f"study {study}: mean logrank {val:.4g}")
    print(f"overall mean logrank {table['logrank'].mean():.4g}")
    if args.out:
        _write_table(f"{args.out}_splits.csv", table, lines)
        print(f"wrote {args.out}_splits.csv")
    return 0


def _run_defaults(args) -> int:
    print(f"# integraft {__version__} defaults")
    seen = set()
    for command in ("simulate", "cv", "fit", "benchmark", "evaluate"):
        fresh = [
            (k, d)
            for k, (d, _) in _COMMAND_KEYS[command].items()
            if k not in seen and d is not None
        ]
        if not fresh:
            continue
        print(f"# {command}")
        for key, default in fresh:
            print(f"{key}={_fmt(default)}")
            seen.add(key)
    return 0


def _add_common(sub, data: bool = False, out_required: bool = False):
    sub.add_argument("--config", help="flat key=value config file")
    if data:
        sub.add_argument("--data", nargs="+", metavar="CSV",
                         help="one study CSV per study, schema time,status,x1..xp")
    sub.add_argument("--out", required=out_required,
                     help="output path prefix" if not out_required else
                     "output path prefix (required)")


def _config_flags(sub, command: str, skip=()):
    for key in _COMMAND_KEYS[command]:
        if key in skip:
            continue
        flag = "--" + key.replace("_", "-")
        sub.add_argument(flag, dest=key, metavar="V", default=None)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="integraft",
        description="Integrative penalized analysis of multi-study survival data",
    )
    parser.add_argument("--version", action="version", version=f"integraft {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("simulate", help="write one simulated replicate")
    _add_common(sp, out_required=True)
    _config_flags(sp, "simulate")
    sp.set_defaults(run=_run_simulate)

    sp = subs.add_parser("fit", help="fit one model at fixed parameters")
    _add_common(sp, data=True)
    _config_flags(sp, "fit")
    sp.set_defaults(run=_run_fit)

    sp = subs.add_parser("cv", help="cross-validate and fit one method")
    _add_common(sp, data=True)
    _config_flags(sp, "cv")
    sp.set_defaults(run=_run_cv)

    sp = subs.add_parser("benchmark", help="simulation benchmark")
    _add_common(sp)
    _config_flags(sp, "benchmark")
    sp.set_defaults(run=_run_benchmark)

    sp = subs.add_parser("evaluate", help="selection metrics or prediction protocol")
    _add_common(sp, data=True)
    sp.add_argument("--coef", help="fitted coefficients (covariate,study,coef)")
    sp.add_argument("--truth", help="true coefficients (covariate,study,beta_true)")
    _config_flags(sp, "evaluate")
    sp.set_defaults(run=_run_evaluate)

    sp = subs.add_parser("defaults", help="print configurable defaults")
    sp.set_defaults(run=_run_defaults)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContractError, SolverError, CalibrationError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
