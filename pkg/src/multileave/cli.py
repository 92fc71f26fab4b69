"""Experiment runner and report emitter.

Every data-producing subcommand writes a CSV plus a manifest
(``<out>.manifest.json``) capturing the fully resolved parameters; ``rerun``
replays a manifest and reproduces the CSV byte for byte.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import socket
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .credit import CreditFunction
from .multileaving import Method
from .simulation import (
    DEFAULT_ALPHAS,
    BiasSummary,
    MethodSpec,
    PopulationConfig,
    SimConfig,
    alpha_sensitivity,
    measure_bias_distribution,
    simulate_accuracy,
    sweep_length,
    sweep_rankers,
    synthesize_population,
)
from .stats import bootstrap_pvalue_curve, crossing_point, write_pvalue_curves_csv

SUMMARY_HEADER = [
    "method",
    "credit",
    "n",
    "l",
    "alpha",
    "runs",
    "seed",
    "accuracy",
    "insensitivity",
    "bias_mean",
    "bias_std",
]
PER_RUN_HEADER = [
    "method",
    "credit",
    "n",
    "l",
    "alpha",
    "run",
    "accuracy",
    "insensitivity",
    "bias_mean",
    "bias_std",
    "seed",
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(
    out: Path, subcommand: str, resolved: dict, outputs: dict[str, str], started: float, extra=None
) -> Path:
    manifest = {
        "v": 1,
        "subcommand": subcommand,
        "args": resolved,
        "outputs": outputs,
        "csv_sha256": _sha256(Path(outputs["csv"])),
        "toolkit_version": __version__,
        "duration_s": time.monotonic() - started,
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    if extra:
        manifest["summary"] = extra
    manifest_path = Path(str(out) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _base_config(resolved: dict) -> SimConfig:
    return SimConfig(
        numeval=resolved["numeval"],
        numclick=resolved["numclick"],
        click_bias_pct=resolved["click_bias"],
        candidate_count=resolved["candidates"],
        alpha=resolved["alpha"],
        runs=resolved["runs"],
        rng_seed=resolved["seed"],
        collect_stats=resolved.get("collect_stats", True),
        identical_inputs=resolved.get("identical_inputs", False),
        threads=resolved["threads"],
    )


def _parse_methods(spec: str) -> list[MethodSpec]:
    labels = [part for part in (p.strip() for p in spec.split(",")) if part]
    if not labels:
        raise UsageError("at least one method is required")
    try:
        return [MethodSpec.parse(label) for label in labels]
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary_rows(points) -> list[list]:
    rows = []
    for p in points:
        r = p.result
        rows.append(
            [
                p.label,
                p.config.credit.value,
                p.config.n,
                p.config.l,
                p.config.alpha,
                p.config.runs,
                p.config.rng_seed,
                r.accuracy,
                r.insensitivity,
                r.bias_mean,
                r.bias_std,
            ]
        )
    return rows


def _per_run_rows(points) -> list[list]:
    rows = []
    for p in points:
        for rec in p.result.per_run:
            rows.append(
                [
                    p.label,
                    p.config.credit.value,
                    p.config.n,
                    p.config.l,
                    p.config.alpha,
                    rec.run,
                    rec.accuracy,
                    rec.insensitivity,
                    rec.bias_mean,
                    rec.bias_std,
                    rec.seed,
                ]
            )
    return rows


def _emit_sweep(points, resolved: dict, out: Path) -> dict[str, str]:
    _write_csv(out, SUMMARY_HEADER, _summary_rows(points))
    outputs = {"csv": str(out)}
    if resolved.get("per_run"):
        per_run = Path(str(out).removesuffix(".csv") + ".runs.csv")
        _write_csv(per_run, PER_RUN_HEADER, _per_run_rows(points))
        outputs["per_run_csv"] = str(per_run)
    return outputs


# --- executors (shared by first runs and manifest reruns) ----------------------


def _exec_sweep_rankers(resolved: dict, out: Path):
    if resolved["n_min"] < 2:
        raise UsageError("--n-min must be at least 2")
    if resolved["n_max"] < resolved["n_min"]:
        raise UsageError("--n-max must not be below --n-min")
    base = _base_config(resolved)
    points = sweep_rankers(
        base,
        n_values=range(resolved["n_min"], resolved["n_max"] + 1),
        length=resolved["length"],
        methods=_parse_methods(resolved["methods"]),
    )
    return _emit_sweep(points, resolved, out), None


def _exec_sweep_length(resolved: dict, out: Path):
    if resolved["length_step"] < 1:
        raise UsageError("--length-step must be positive")
    if resolved["length_max"] < resolved["length_min"]:
        raise UsageError("--length-max must not be below --length-min")
    base = _base_config(resolved)
    points = sweep_length(
        base,
        l_values=range(resolved["length_min"], resolved["length_max"] + 1, resolved["length_step"]),
        n=resolved["rankers"],
        methods=_parse_methods(resolved["methods"]),
    )
    return _emit_sweep(points, resolved, out), None


def _exec_insensitivity(resolved: dict, out: Path):
    base = _base_config(resolved)
    methods = _parse_methods(resolved["methods"])
    rows = []
    if resolved["axis"] in ("both", "rankers"):
        points = sweep_rankers(
            base, n_values=range(2, resolved["n_max"] + 1), length=resolved["length"], methods=methods
        )
        rows += [["rankers"] + row for row in _summary_rows(points)]
    if resolved["axis"] in ("both", "length"):
        points = sweep_length(
            base,
            l_values=range(
                resolved["length_min"], resolved["length_max"] + 1, resolved["length_step"]
            ),
            n=resolved["rankers"],
            methods=methods,
        )
        rows += [["length"] + row for row in _summary_rows(points)]
    _write_csv(out, ["axis"] + SUMMARY_HEADER, rows)
    return {"csv": str(out)}, None


def _exec_bias(resolved: dict, out: Path):
    config = replace(
        _base_config(resolved), n=resolved["rankers"], l=resolved["length"], method=Method.GOM
    )
    samples = measure_bias_distribution(config, generations=resolved["generations"])
    summary = BiasSummary.from_samples(samples)
    _write_csv(out, ["generation", "bias"], [[g, float(b)] for g, b in enumerate(samples)])
    summary_payload = {
        "mean": summary.mean,
        "std": summary.std,
        "median": summary.median,
        "bell_shaped": summary.bell_shaped,
        "std_over_mean": summary.std / summary.mean if summary.mean else None,
    }
    summary_path = Path(str(out) + ".summary.json")
    summary_path.write_text(json.dumps(summary_payload, indent=2, sort_keys=True) + "\n")
    return {"csv": str(out), "summary": str(summary_path)}, summary_payload


def _exec_alpha_study(resolved: dict, out: Path):
    base = replace(
        _base_config(resolved), n=resolved["rankers"], l=resolved["length"], method=Method.GOM
    )
    alphas = resolved["alphas"]
    rows = []
    for alpha, result, bias in alpha_sensitivity(
        base, alphas=alphas, bias_generations=resolved["generations"]
    ):
        rows.append(
            [alpha, result.accuracy, result.insensitivity, bias.mean, bias.std]
        )
    _write_csv(out, ["alpha", "accuracy", "insensitivity", "bias_mean", "bias_std"], rows)
    return {"csv": str(out)}, None


def _exec_pvalue_compare(resolved: dict, out: Path):
    population = PopulationConfig(
        users=resolved["users"],
        algorithms=resolved["algorithms"],
        effect_step=resolved["effect"],
        user_sigma=resolved["user_sigma"],
        noise_sigma=resolved["noise_sigma"],
        activity_log_mean=resolved["activity_log_mean"],
        activity_log_sigma=resolved["activity_log_sigma"],
        group_bias=resolved["group_bias"],
        rng_seed=resolved["seed"],
    )
    paired, unpaired = synthesize_population(population)
    grid = resolved["grid"]
    common = dict(
        subsample_size=resolved["subsample"],
        resamples=resolved["resamples"],
        rng_seed=resolved["seed"],
    )
    curves = {
        "paired-multileaving": bootstrap_pvalue_curve(paired, grid, **common),
        "unpaired-ab": bootstrap_pvalue_curve(unpaired, grid, **common),
    }
    write_pvalue_curves_csv(curves, out)
    extra = {
        "synthetic_population": True,
        "crossing_N": {name: crossing_point(curve) for name, curve in curves.items()},
    }
    return {"csv": str(out)}, extra


_EXECUTORS = {
    "sweep-rankers": _exec_sweep_rankers,
    "sweep-length": _exec_sweep_length,
    "insensitivity": _exec_insensitivity,
    "bias": _exec_bias,
    "alpha-study": _exec_alpha_study,
    "pvalue-compare": _exec_pvalue_compare,
}


def _run_data_command(subcommand: str, resolved: dict, out: Path) -> int:
    started = time.monotonic()
    outputs, extra = _EXECUTORS[subcommand](resolved, out)
    manifest = _write_manifest(out, subcommand, resolved, outputs, started, extra)
    print(f"wrote {outputs['csv']} (manifest: {manifest})")
    return 0


def _cmd_rerun(ns) -> int:
    manifest = json.loads(Path(ns.manifest).read_text())
    subcommand = manifest.get("subcommand")
    if subcommand not in _EXECUTORS:
        raise UsageError(f"manifest subcommand {subcommand!r} is not replayable")
    out = Path(ns.out) if ns.out else Path(manifest["outputs"]["csv"])
    return _run_data_command(subcommand, manifest["args"], out)


def _cmd_serve(ns) -> int:
    import uvicorn

    from .server import create_app
    from .service import ComparisonService

    log_path = Path(ns.log_path)
    try:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "a"):
            pass
    except OSError as exc:
        print(f"error: log path {log_path} is not writable: {exc}", file=sys.stderr)
        return 2
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((ns.host, ns.port))
        probe.close()
    except OSError as exc:
        print(f"error: cannot listen on {ns.host}:{ns.port}: {exc}", file=sys.stderr)
        return 2
    service = ComparisonService(
        log_path,
        default_method=Method.parse(ns.method),
        default_credit=CreditFunction.parse(ns.credit),
        session_ttl_s=ns.ttl,
        base_seed=ns.seed,
        fsync=ns.fsync,
    )
    app = create_app(service, token=ns.token)
    try:
        uvicorn.run(app, host=ns.host, port=ns.port, log_level="warning")
    finally:
        service.close()
    return 0


# --- argument wiring ------------------------------------------------------------


def _add_common_sim_flags(p: argparse.ArgumentParser, default_out: str):
    p.add_argument("--seed", type=int, default=0, help="root RNG seed")
    p.add_argument("--runs", type=int, default=100, help="independent repetitions to average")
    p.add_argument("--numeval", type=int, default=100)
    p.add_argument("--numclick", type=int, default=100)
    p.add_argument("--click-bias", type=int, default=80, dest="click_bias",
                   help="click window as a percentage of the preferred ranking")
    p.add_argument("--candidates", type=int, default=10, help="greedy candidate pool size")
    p.add_argument("--alpha", type=float, default=0.0, help="bias weight in the greedy objective")
    p.add_argument("--threads", type=int, default=os.cpu_count())
    p.add_argument("--out", default=default_out, help="CSV output path")
    p.add_argument("--per-run", action="store_true", dest="per_run",
                   help="also write one row per run")
    p.add_argument("--no-stats", action="store_false", dest="collect_stats",
                   help="skip insensitivity/bias collection (accuracy only)")


def _resolved_from_ns(ns, keys) -> dict:
    return {key: getattr(ns, key) for key in keys}


_SIM_KEYS = [
    "seed",
    "runs",
    "numeval",
    "numclick",
    "click_bias",
    "candidates",
    "alpha",
    "threads",
    "per_run",
    "collect_stats",
]


def build_parser() -> _Parser:
    parser = _Parser(prog="multileave", description=__doc__)
    parser.add_argument("--version", action="version", version=f"multileave {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("sweep-rankers", help="accuracy versus the number of rankers")
    _add_common_sim_flags(p, "sweep_rankers.csv")
    p.add_argument("--methods", default="tdm,gom-i,gom-p")
    p.add_argument("--n-min", type=int, default=2, dest="n_min")
    p.add_argument("--n-max", type=int, default=20, dest="n_max")
    p.add_argument("--length", type=int, default=10)

    p = sub.add_parser("sweep-length", help="accuracy versus the ranking length")
    _add_common_sim_flags(p, "sweep_length.csv")
    p.add_argument("--methods", default="tdm,gom-i,gom-p")
    p.add_argument("--length-min", type=int, default=5, dest="length_min")
    p.add_argument("--length-max", type=int, default=195, dest="length_max")
    p.add_argument("--length-step", type=int, default=10, dest="length_step")
    p.add_argument("--rankers", type=int, default=3)

    p = sub.add_parser("insensitivity", help="normalized insensitivity sweeps")
    _add_common_sim_flags(p, "insensitivity.csv")
    p.add_argument("--methods", default="gom-i,gom-p")
    p.add_argument("--axis", choices=("both", "rankers", "length"), default="both")
    p.add_argument("--n-max", type=int, default=20, dest="n_max")
    p.add_argument("--length", type=int, default=10)
    p.add_argument("--length-min", type=int, default=5, dest="length_min")
    p.add_argument("--length-max", type=int, default=195, dest="length_max")
    p.add_argument("--length-step", type=int, default=10, dest="length_step")
    p.add_argument("--rankers", type=int, default=3)
    p.add_argument("--identical-inputs", action="store_true", dest="identical_inputs",
                   help="degenerate mode: all rankers submit the same ranking")

    p = sub.add_parser("bias", help="bias distribution of generated rankings")
    _add_common_sim_flags(p, "bias.csv")
    p.add_argument("--generations", type=int, default=10_000)
    p.add_argument("--rankers", type=int, default=5)
    p.add_argument("--length", type=int, default=10)
    p.add_argument("--identical-inputs", action="store_true", dest="identical_inputs")

    p = sub.add_parser("alpha-study", help="sensitivity of results to the bias weight")
    _add_common_sim_flags(p, "alpha_study.csv")
    p.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHAS))
    p.add_argument("--generations", type=int, default=10_000,
                   help="bias-distribution generations per alpha")
    p.add_argument("--rankers", type=int, default=5)
    p.add_argument("--length", type=int, default=10)

    p = sub.add_parser(
        "pvalue-compare",
        help="paired multileaving versus unpaired A/B p-value convergence (synthetic users)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--users", type=int, default=500)
    p.add_argument("--algorithms", type=int, default=3)
    p.add_argument("--effect", type=float, default=0.6)
    p.add_argument("--user-sigma", type=float, default=0.75, dest="user_sigma")
    p.add_argument("--noise-sigma", type=float, default=0.9, dest="noise_sigma")
    p.add_argument("--activity-log-mean", type=float, default=3.0, dest="activity_log_mean")
    p.add_argument("--activity-log-sigma", type=float, default=0.8, dest="activity_log_sigma")
    p.add_argument("--group-bias", type=float, default=0.0, dest="group_bias")
    p.add_argument("--grid", default="4,6,10,16,25,40,65,100,160,250,400")
    p.add_argument("--subsample", type=int, default=50)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--out", default="pvalue_compare.csv")

    p = sub.add_parser("serve", help="run the HTTP comparison service")
    p.add_argument("--host", default=os.environ.get("MULTILEAVE_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(os.environ.get("MULTILEAVE_PORT", "8300")))
    p.add_argument("--log-path", default=os.environ.get("MULTILEAVE_LOG_PATH", "multileave-events.jsonl"),
                   dest="log_path")
    p.add_argument("--method", default=os.environ.get("MULTILEAVE_METHOD", "gom"))
    p.add_argument("--credit", default=os.environ.get("MULTILEAVE_CREDIT", "personalization"))
    p.add_argument("--ttl", type=float, default=float(os.environ.get("MULTILEAVE_TTL", "86400")))
    p.add_argument("--token", default=os.environ.get("MULTILEAVE_TOKEN"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fsync", action="store_true")

    p = sub.add_parser("rerun", help="replay a manifest and regenerate its CSV")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write the CSV somewhere else")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.subcommand == "serve":
            return _cmd_serve(ns)
        if ns.subcommand == "rerun":
            return _cmd_rerun(ns)
        resolved = _resolved_from_ns(ns, _SIM_KEYS) if ns.subcommand != "pvalue-compare" else {}
        if ns.subcommand == "sweep-rankers":
            resolved.update(_resolved_from_ns(ns, ["methods", "n_min", "n_max", "length"]))
        elif ns.subcommand == "sweep-length":
            resolved.update(
                _resolved_from_ns(
                    ns, ["methods", "length_min", "length_max", "length_step", "rankers"]
                )
            )
        elif ns.subcommand == "insensitivity":
            resolved.update(
                _resolved_from_ns(
                    ns,
                    [
                        "methods",
                        "axis",
                        "n_max",
                        "length",
                        "length_min",
                        "length_max",
                        "length_step",
                        "rankers",
                        "identical_inputs",
                    ],
                )
            )
        elif ns.subcommand == "bias":
            resolved.update(
                _resolved_from_ns(ns, ["generations", "rankers", "length", "identical_inputs"])
            )
        elif ns.subcommand == "alpha-study":
            try:
                alphas = [float(a) for a in ns.alphas.split(",") if a.strip()]
            except ValueError:
                raise UsageError("--alphas must be a comma-separated list of numbers")
            if not alphas:
                raise UsageError("--alphas must not be empty")
            resolved.update(_resolved_from_ns(ns, ["generations", "rankers", "length"]))
            resolved["alphas"] = alphas
        elif ns.subcommand == "pvalue-compare":
            try:
                grid = [int(v) for v in ns.grid.split(",") if v.strip()]
            except ValueError:
                raise UsageError("--grid must be a comma-separated list of integers")
            if not grid:
                raise UsageError("--grid must not be empty")
            resolved = _resolved_from_ns(
                ns,
                [
                    "seed",
                    "users",
                    "algorithms",
                    "effect",
                    "user_sigma",
                    "noise_sigma",
                    "activity_log_mean",
                    "activity_log_sigma",
                    "group_bias",
                    "subsample",
                    "resamples",
                ],
            )
            resolved["grid"] = grid
        return _run_data_command(ns.subcommand, resolved, Path(ns.out))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
