"""Command-line interface.

Subcommands: simulate, estimate, merge, evaluate, sweep, compare, crossval.
Settings come from a flat ``key = value`` config file (``--config``) and can be
overridden by a flag of the same name; ``LONGNET_OUTDIR`` sets the default
output directory.  Every run writes into one directory containing a manifest
and the produced artifacts; the process exits nonzero naming the failed stage.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .estimator import PgdConfig, load_factors, save_factors, save_trace
from .events import Partition, load_partition, save_edges, save_partition
from .merging import (MergeConfig, best_ordered_partition, default_nu, normalize_w,
                      select_k, write_segments_csv)
from .pipeline import (PipelineConfig, PipelineError, compare_methods, crossval,
                       run_pipeline, sweep_L, write_sweep_csv)
from .synthetic import (SyntheticConfig, estimation_error, expand_truth, generate_truth,
                        load_truth, sample_edges, save_truth)

_EDGE_SEED_OFFSET = 100003  # keep in sync with pipeline


def _parse_ranks(text: str) -> tuple[int, int, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"ranks must be 'r' or 'r1,r2,r3', got {text!r}")
    return tuple(parts)


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",")]


def load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            values[key.strip().replace("-", "_")] = val.strip()
    return values


_SHARED_KEYS = {
    "input": str,
    "outdir": str,
    "seed": int,
    "lambda0": float,
    "ranks": _parse_ranks,
    "epsilon": float,
    "interval_count": str,  # integer or "auto"
    "n": int,
    "horizon": float,
    "k0": int,
    "diag_s": float,
    "max_length_ratio": float,
    "gamma": float,
    "step_c": float,
    "max_iters": int,
    "tol": float,
    "c_s": float,
    "c1": float,
    "c2": float,
    "c3": float,
    "nu": float,
    "k_max": int,
    "reps": int,
    "folds": int,
    "jobs": int,
    "interval_grid": _parse_int_list,
    "factors": str,
    "partition": str,
    "truth": str,
}

_DEFAULTS = {
    "seed": 0,
    "lambda0": 1.0,
    "ranks": (3, 3, 3),
    "epsilon": 0.1,
    "interval_count": "auto",
    "k0": 3,
    "diag_s": 0.5,
    "max_length_ratio": 3.0,
    "step_c": 0.1,
    "max_iters": 500,
    "tol": 1e-8,
    "reps": 20,
    "folds": 5,
    "jobs": 1,
}


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat key = value settings file")
    for key, parser in _SHARED_KEYS.items():
        flag = "--" + key.replace("_", "-")
        sub.add_argument(flag, dest=key, type=parser if parser is not str else str,
                         default=None, help=argparse.SUPPRESS)


def _merge_settings(args: argparse.Namespace) -> dict:
    values = dict(_DEFAULTS)
    if args.config:
        raw = load_config_file(args.config)
        for key, text in raw.items():
            if key not in _SHARED_KEYS:
                raise ValueError(f"unknown config key {key!r}")
            parser = _SHARED_KEYS[key]
            values[key] = parser(text) if parser is not str else text
    for key in _SHARED_KEYS:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given
    if "outdir" not in values or values.get("outdir") is None:
        values["outdir"] = os.environ.get("LONGNET_OUTDIR", "longnet-out")
    return values


def _pgd_config(v: dict) -> PgdConfig:
    return PgdConfig(lambda0=v["lambda0"], gamma=v.get("gamma"), step_c=v["step_c"],
                     max_iters=v["max_iters"], tol=v["tol"], c_s=v.get("c_s"),
                     c1=v.get("c1"), c2=v.get("c2"), c3=v.get("c3"))


def _merge_config(v: dict) -> MergeConfig:
    return MergeConfig(nu=v.get("nu"), k_max=v.get("k_max"), epsilon=v["epsilon"])


def _synthetic_config(v: dict) -> SyntheticConfig:
    for key in ("n", "horizon"):
        if v.get(key) is None:
            raise ValueError(f"synthetic mode requires '{key}'")
    return SyntheticConfig(n=v["n"], horizon=v["horizon"], ranks=v["ranks"], k0=v["k0"],
                           diag_s=v["diag_s"], lambda0=v["lambda0"], seed=v["seed"],
                           max_length_ratio=v["max_length_ratio"])


def _pipeline_config(v: dict) -> PipelineConfig:
    interval = v["interval_count"]
    interval = None if interval in (None, "auto") else int(interval)
    synthetic = None if v.get("input") else _synthetic_config(v)
    return PipelineConfig(input=v.get("input"), synthetic=synthetic, ranks=v["ranks"],
                          lambda0=v["lambda0"], interval_count=interval,
                          epsilon=v["epsilon"], pgd=_pgd_config(v), merge=_merge_config(v),
                          outdir=v["outdir"], seed=v["seed"])


def _ensure_outdir(v: dict) -> str:
    outdir = v["outdir"]
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _write_manifest(v: dict, outdir: str, command: str) -> None:
    with open(os.path.join(outdir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"command = {command}\n")
        for key in sorted(v):
            val = v[key]
            if val is None:
                continue
            if isinstance(val, (tuple, list)):
                val = ",".join(str(x) for x in val)
            fh.write(f"{key} = {val}\n")


def _cmd_simulate(v: dict) -> int:
    outdir = _ensure_outdir(v)
    cfg = _synthetic_config(v)
    gt = generate_truth(cfg)
    edges = sample_edges(gt, cfg.lambda0, cfg.seed + _EDGE_SEED_OFFSET)
    save_truth(gt, outdir)
    save_edges(edges, os.path.join(outdir, "edges.txt"))
    _write_manifest(v, outdir, "simulate")
    print(f"simulated {len(edges)} edges over [0, {cfg.horizon}) into {outdir}")
    return 0


def _report_fit(outdir: str, tag: str, partition: Partition, fit) -> None:
    save_partition(partition, os.path.join(outdir, f"partition_{tag}.txt"))
    save_factors(fit.factors, os.path.join(outdir, f"factors_{tag}.txt"))
    save_trace(fit.objective_trace, os.path.join(outdir, f"trace_{tag}.csv"))


def _cmd_estimate(v: dict) -> int:
    outdir = _ensure_outdir(v)
    report = run_pipeline(_pipeline_config(v))
    _report_fit(outdir, "delta", report.delta, report.fit_delta)
    print(f"initial fit: L={report.interval_count}, "
          f"{report.fit_delta.iters_run} iterations")
    if report.merged:
        _report_fit(outdir, "eta", report.eta, report.fit_eta)
        print(f"merged fit: K={report.k_hat}, endpoints "
              f"{np.array2string(report.eta.breakpoints, precision=4)}")
    else:
        print(f"merging skipped: horizon {report.horizon} below gate "
              f"threshold {report.gate_threshold:.4g}")
    for key, val in report.errors.items():
        print(f"{key} = {val:.6g}")
    _write_manifest(v, outdir, "estimate")
    return 0


def _cmd_merge(v: dict) -> int:
    outdir = _ensure_outdir(v)
    if not v.get("factors"):
        raise ValueError("merge requires --factors (a fitted factor file)")
    factors = load_factors(v["factors"])
    if v.get("horizon") is None:
        raise ValueError("merge requires --horizon")
    horizon = v["horizon"]
    big = factors.w.shape[0]
    w_tilde = normalize_w(factors.w)
    merge_cfg = _merge_config(v)
    if merge_cfg.nu is None:
        if v.get("n") is None:
            raise ValueError("merge requires --nu or --n to derive the penalty")
        merge_cfg = replace(merge_cfg, nu=default_nu(v["n"], horizon, big, v["epsilon"]))
    k_hat = select_k(w_tilde, merge_cfg)
    result = best_ordered_partition(w_tilde, k_hat, horizon / big, horizon)
    write_segments_csv(result, w_tilde, os.path.join(outdir, "segments.csv"))
    save_partition(Partition(horizon, result.endpoints),
                   os.path.join(outdir, "partition_eta.txt"))
    print(f"K = {k_hat}, endpoints {np.array2string(result.endpoints, precision=4)}")
    _write_manifest(v, outdir, "merge")
    return 0


def _cmd_evaluate(v: dict) -> int:
    if not v.get("factors") or not v.get("truth") or not v.get("partition"):
        raise ValueError("evaluate requires --factors, --truth and --partition")
    from .tensor import tucker_assemble

    factors = load_factors(v["factors"])
    gt = load_truth(v["truth"])
    partition = load_partition(v["partition"])
    err = estimation_error(tucker_assemble(factors), expand_truth(gt, partition))
    print(f"estimation_error = {err:.6g}")
    return 0


def _cmd_sweep(v: dict) -> int:
    outdir = _ensure_outdir(v)
    grid = v.get("interval_grid")
    if not grid:
        raise ValueError("sweep requires --interval-grid, e.g. 6,12,24,48,96")
    rows = sweep_L(_pipeline_config(v), grid, replications=v["reps"], jobs=v["jobs"])
    path = os.path.join(outdir, "sweep.csv")
    write_sweep_csv(rows, path)
    for row in rows:
        print(f"{row['method']:>3} L={row['interval_count']:<5d} "
              f"mean={row['mean_error']:.6g} std={row['std_error']:.6g}")
    _write_manifest(v, outdir, "sweep")
    return 0


def _cmd_compare(v: dict) -> int:
    outdir = _ensure_outdir(v)
    table = compare_methods(_pipeline_config(v), replications=v["reps"], jobs=v["jobs"])
    path = os.path.join(outdir, "compare.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,mean,std\n")
        for key in sorted(table):
            if key in ("replications", "per_rep"):
                continue
            fh.write(f"{key},{table[key]['mean']!r},{table[key]['std']!r}\n")
    for key in sorted(table):
        if key in ("replications", "per_rep"):
            continue
        print(f"{key:>14}: {table[key]['mean']:.6g} ({table[key]['std']:.3g})")
    _write_manifest(v, outdir, "compare")
    return 0


def _cmd_crossval(v: dict) -> int:
    outdir = _ensure_outdir(v)
    result = crossval(_pipeline_config(v), folds=v["folds"])
    with open(os.path.join(outdir, "crossval.csv"), "w", encoding="utf-8") as fh:
        fh.write("method,fold,error\n")
        for method in ("es", "am"):
            for k, err in enumerate(result[method]["per_fold"], start=1):
                fh.write(f"{method.upper()},{k},{err!r}\n")
            fh.write(f"{method.upper()},mean,{result[method]['mean']!r}\n")
    print(f"ES mean masked error: {result['es']['mean']:.6g}")
    print(f"AM mean masked error: {result['am']['mean']:.6g}")
    _write_manifest(v, outdir, "crossval")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "merge": _cmd_merge,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "crossval": _cmd_crossval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longnet",
                                     description="Longitudinal network intensity estimation "
                                                 "with adaptive interval merging")
    subs = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sub = subs.add_parser(name)
        _add_common_flags(sub)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = _merge_settings(args)
        return _COMMANDS[args.command](values)
    except PipelineError as exc:
        print(f"error in stage '{exc.stage}': {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
