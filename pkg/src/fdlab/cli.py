"""Command-line driver for batch experiments and verification suites.

Exit codes: 0 success, 1 an asserted check failed, 2 configuration error,
3 numerical blowup.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import tomli

from . import __version__
from .errors import ConfigError, DidNotConverge, FdlabError, NumericalBlowup
from .flow import IntegratorConfig, fmt, id_loss, integrate_fine_tuning, lp_flow, ood_loss, run_lpft
from .harness import VerificationConfig, lp_limit, verify_all
from .problem import InstanceConfig, build_instance, check_dims
from .reports import ResultId, summary_table

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
METHODS = ("FT", "LP", "LPFT")
SWEEP_COLUMNS = ("sweep_value", "seed", "method", "l_id", "l_ood_min", "l_ood_terminal")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    instance: InstanceConfig = InstanceConfig()
    methods: tuple = METHODS
    integrator: IntegratorConfig = IntegratorConfig()
    verify: VerificationConfig = VerificationConfig()
    sweep: SweepSpec | None = None
    output_dir: str = "fdlab_out"
    master_seed: int = 0
    n_instances: int = 1

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["instance"].pop("seed")
        d["instance"].pop("index")
        d["verify"].pop("seed")
        if self.sweep is None:
            d.pop("sweep")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()


def _build(cls, data, section):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {unknown}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def _check_instance(inst: InstanceConfig):
    try:
        check_dims(inst.d, inst.k, inst.m, inst.n)
    except FdlabError as exc:
        raise ConfigError(str(exc)) from exc
    if not 0 <= inst.eps < 0.5:
        raise ConfigError(f"need 0 <= eps < 0.5, got eps={inst.eps}")


def parse_config(data: dict, env=None) -> ExperimentConfig:
    """Validate a parsed TOML document. ``FDLAB_SEED`` in ``env`` overrides ``master_seed``."""
    env = os.environ if env is None else env
    data = dict(data)
    top = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    seed = int(env.get("FDLAB_SEED", data.get("master_seed", 0)))
    if not 0 <= seed < 2**64:
        raise ConfigError("master_seed must be a 64-bit unsigned integer")

    inst_data = dict(data.get("instance", {}))
    for key in ("seed", "index"):
        if key in inst_data:
            raise ConfigError(f"[instance] {key} is not configurable; use master_seed")
    instance = replace(_build(InstanceConfig, inst_data, "instance"), seed=seed)
    if instance.ood_diag:
        instance = replace(instance, ood_diag=tuple(float(x) for x in instance.ood_diag))
    _check_instance(instance)

    methods = tuple(data.get("methods", METHODS))
    if not methods:
        raise ConfigError("methods must be nonempty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")

    integrator = _build(IntegratorConfig, data.get("integrator", {}), "integrator")
    verify_data = dict(data.get("verify", {}))
    if "seed" in verify_data:
        raise ConfigError("[verify] seed is not configurable; use master_seed")
    verify = replace(_build(VerificationConfig, verify_data, "verify"), seed=seed)
    suites = verify.suites
    if "all" in suites:
        suites = tuple(r.value for r in ResultId)
    try:
        suites = tuple(ResultId(s).value for s in suites)
    except ValueError as exc:
        raise ConfigError(f"[verify] suites: {exc}") from exc
    verify = replace(verify, suites=suites)

    sweep = None
    if "sweep" in data:
        sweep = _build(SweepSpec, data["sweep"], "sweep")
        names = {f.name for f in fields(InstanceConfig)} - {"seed", "index"}
        if sweep.parameter not in names:
            raise ConfigError(f"sweep parameter {sweep.parameter!r} is not an [instance] field")
        if not sweep.values:
            raise ConfigError("sweep values must be nonempty")
        for value in sweep.values:
            _check_instance(replace(instance, **{sweep.parameter: value}))

    n_instances = int(data.get("n_instances", 1))
    if n_instances < 1:
        raise ConfigError("n_instances must be at least 1")
    return ExperimentConfig(instance=instance, methods=methods, integrator=integrator,
                            verify=verify, sweep=sweep,
                            output_dir=str(data.get("output_dir", "fdlab_out")),
                            master_seed=seed, n_instances=n_instances)


def load_config(path, env=None) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data, env)


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if v is None:
        raise ValueError("TOML has no null")
    return repr(v)


def default_toml() -> str:
    """Commented TOML listing every configurable key at its default."""
    cfg = ExperimentConfig()
    d = cfg.to_dict()
    lines = ["# fdlab experiment configuration (all keys optional, defaults shown)",
             "# FDLAB_SEED in the environment overrides master_seed", ""]
    for key in ("master_seed", "n_instances", "methods", "output_dir"):
        lines.append(f"{key} = {_toml_value(d[key])}")
    notes = {
        "integrator": "# initial_step defaults to 1e-3 / sigma_max(X)^2 when omitted",
        "verify": "# suites: result ids to check during `run`, or [\"all\"]",
    }
    for section in ("instance", "integrator", "verify"):
        lines += ["", f"[{section}]"]
        if section in notes:
            lines.append(notes[section])
        for k, v in d[section].items():
            if v is None:
                lines.append(f"# {k} =")
            else:
                lines.append(f"{k} = {_toml_value(v)}")
    lines += ["", "# [sweep]", "# parameter = \"eps\"", "# values = [0.2, 0.1, 0.05, 0.02, 0.01]"]
    return "\n".join(lines) + "\n"


# -- execution -------------------------------------------------------------

def run_one(instance_config: InstanceConfig, method, integrator: IntegratorConfig):
    """Build one instance and run one method on it. Pure; safe to call in a worker process."""
    start = time.perf_counter()
    inst = build_instance(instance_config)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DidNotConverge)
        if method == "FT":
            traj = integrate_fine_tuning(inst, integrator)
        elif method == "LPFT":
            traj = run_lpft(inst, integrator)
        else:
            traj = lp_flow(inst, integrator)
    if method == "LP":
        # terminal values are taken at the flow's limit, the least-squares head
        v_inf, l_id, l_ood_term = lp_limit(inst)
        l_ood_min = min(traj.min_metric("l_ood"), l_ood_term)
    else:
        _, v_t, b_t = traj.terminal
        l_id = id_loss(v_t, b_t, inst)
        l_ood_term = ood_loss(v_t, b_t, inst)
        l_ood_min = traj.min_metric("l_ood")
    return {"csv": traj.to_csv(), "l_id": l_id, "l_ood_min": l_ood_min,
            "l_ood_terminal": l_ood_term, "converged": traj.converged,
            "warnings": [str(w.message) for w in caught], "seconds": time.perf_counter() - start}


def _execute(tasks, jobs):
    """Run ``(key, args)`` tasks, in a process pool when ``jobs > 1``; results keep task order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [(key, run_one(*args)) for key, args in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [(key, pool.submit(run_one, *args)) for key, args in tasks]
        return [(key, f.result()) for key, f in futures]


class _Collector:
    """Single writer for every output file; keeps the manifest index."""

    def __init__(self, root: Path):
        self.root = root
        self.files = {}
        root.mkdir(parents=True, exist_ok=True)

    def write(self, rel, text):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        if rel in self.files:
            raise RuntimeError(f"{rel} written twice")
        self.files[rel] = hashlib.sha256(text.encode()).hexdigest()


def _summary_markdown(title, rows, reports):
    lines = [f"# {title}", "", "| method | instances | mean L_id | mean L_ood (terminal) | "
             "mean min_t L_ood | converged |", "|---|---|---|---|---|---|"]
    for method in METHODS:
        sel = [r for r in rows if r["method"] == method]
        if not sel:
            continue
        n = len(sel)
        lines.append(
            f"| {method} | {n} | {fmt(sum(r['l_id'] for r in sel) / n)} | "
            f"{fmt(sum(r['l_ood_terminal'] for r in sel) / n)} | "
            f"{fmt(sum(r['l_ood_min'] for r in sel) / n)} | "
            f"{sum(r['converged'] for r in sel)}/{n} |")
    if reports:
        lines += ["", "## Verification", "", summary_table(reports).rstrip("\n")]
    return "\n".join(lines) + "\n"


def _default_jobs(n_tasks):
    return max(1, min(n_tasks, os.cpu_count() or 1))


def _run_block(config, instance_template, collector, prefix, jobs, timings):
    tasks = [((i, m), (replace(instance_template, index=i), m, config.integrator))
             for i in range(config.n_instances) for m in config.methods]
    rows = []
    for (i, method), res in _execute(tasks, jobs or _default_jobs(len(tasks))):
        rel = f"{prefix}runs/{method}_instance{i:04d}.csv"
        collector.write(rel, res["csv"])
        timings[rel] = res["seconds"]
        rows.append({"seed": i, "method": method, **{k: res[k] for k in
                     ("l_id", "l_ood_min", "l_ood_terminal", "converged")}})
        for msg in res["warnings"]:
            print(f"warning: {method} instance {i}: {msg}", file=sys.stderr)
    return rows


def _write_manifest(config, collector, timings):
    manifest = {
        "config_hash": config.config_hash(),
        "tool_version": __version__,
        "files": [{"path": p, "sha256": h} for p, h in sorted(collector.files.items())],
        "timings_seconds": {k: round(v, 6) for k, v in sorted(timings.items())},
    }
    collector.write("manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def run_experiment(config: ExperimentConfig, out_dir=None, jobs=None) -> int:
    collector = _Collector(Path(out_dir or config.output_dir))
    timings = {}
    rows = _run_block(config, config.instance, collector, "", jobs, timings)
    reports = []
    if config.verify.suites:
        start = time.perf_counter()
        reports = verify_all(config.verify, config.integrator)
        timings["verify"] = time.perf_counter() - start
        for r in reports:
            collector.write(f"reports/{r.result_id.value}.json", r.to_json())
            print(r.summary_line())
    collector.write("summary.md", _summary_markdown("fdlab run summary", rows, reports))
    _write_manifest(config, collector, timings)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([fmt(r["sweep_value"]), r["seed"], r["method"], fmt(r["l_id"]),
                         fmt(r["l_ood_min"]), fmt(r["l_ood_terminal"])])
    return buf.getvalue()


def read_sweep_csv(text):
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({"sweep_value": float(r["sweep_value"]), "seed": int(r["seed"]),
                     "method": r["method"], "l_id": float(r["l_id"]),
                     "l_ood_min": float(r["l_ood_min"]),
                     "l_ood_terminal": float(r["l_ood_terminal"])})
    return rows


def ratio_from_sweep_rows(rows):
    """Mean ``L_ood(LP) / min_t L_ood(FT)`` per sweep value, in sweep order."""
    values = list(dict.fromkeys(r["sweep_value"] for r in rows))
    lp = {(r["sweep_value"], r["seed"]): r["l_ood_terminal"] for r in rows if r["method"] == "LP"}
    ft = {(r["sweep_value"], r["seed"]): r["l_ood_min"] for r in rows if r["method"] == "FT"}
    out = []
    for v in values:
        keys = [key for key in lp if key[0] == v and key in ft]
        out.append(sum(lp[key] / ft[key] for key in keys) / len(keys))
    return values, out


def run_sweep(config: ExperimentConfig, out_dir=None, jobs=None) -> int:
    if config.sweep is None:
        raise ConfigError("sweep needs a [sweep] block with parameter and values")
    collector = _Collector(Path(out_dir or config.output_dir))
    timings = {}
    all_rows = []
    param = config.sweep.parameter
    for value in config.sweep.values:
        prefix = f"sweep/{param}={value:g}/" if isinstance(value, float) else f"sweep/{param}={value}/"
        template = replace(config.instance, **{param: value})
        rows = _run_block(config, template, collector, prefix, jobs, timings)
        collector.write(prefix + "summary.md",
                        _summary_markdown(f"{param} = {value}", rows, []))
        all_rows += [{"sweep_value": value, **r} for r in rows]
    collector.write("sweep_summary.csv", sweep_csv(all_rows))
    _write_manifest(config, collector, timings)
    return EXIT_OK


def run_verify(suites, seed, out_dir=None) -> int:
    if "all" in suites:
        suites = [r.value for r in ResultId]
    try:
        suites = tuple(ResultId(s).value for s in suites)
    except ValueError as exc:
        raise ConfigError(f"unknown suite: {exc}") from exc
    reports = verify_all(VerificationConfig(seed=seed, suites=suites))
    if out_dir:
        collector = _Collector(Path(out_dir))
        for r in reports:
            collector.write(f"reports/{r.result_id.value}.json", r.to_json())
        collector.write("summary.md", summary_table(reports))
    for r in reports:
        print(r.summary_line())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def _parser():
    p = argparse.ArgumentParser(prog="fdlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fdlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run methods on seeded instances and write outputs")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=None)
    r.add_argument("--out", default=None)
    s = sub.add_parser("sweep", help="run the [sweep] block and write sweep_summary.csv")
    s.add_argument("config")
    s.add_argument("--jobs", type=int, default=None)
    s.add_argument("--out", default=None)
    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", action="append", default=None,
                   help="result id or 'all' (repeatable)")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", default=None)
    sub.add_parser("print-defaults", help="print a TOML config with every default")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "print-defaults":
            sys.stdout.write(default_toml())
            return EXIT_OK
        if args.command == "verify":
            seed = args.seed if args.seed is not None else int(os.environ.get("FDLAB_SEED", 0))
            return run_verify(args.suite or ["all"], seed, args.out)
        if getattr(args, "jobs", None) is not None and args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        config = load_config(args.config)
        if args.command == "run":
            return run_experiment(config, args.out, args.jobs)
        return run_sweep(config, args.out, args.jobs)
    except NumericalBlowup as exc:
        print(f"error: numerical blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (ConfigError, FdlabError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
