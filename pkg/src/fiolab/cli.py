"""Command-line driver: ``fiolab run|list|describe``."""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .experiments import EXPERIMENTS, ExperimentKind, digest

GLOBAL_KEYS = {"seed", "modes", "order", "jobs", "hbar_ladder", "experiments"}
# settings that change how a run executes but not its results
EXECUTION_KEYS = {"jobs"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field (and line when known)."""


@dataclass
class ExperimentConfig:
    id: str
    kind: str
    params: dict


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


def parse_ladder(text: str) -> list[int]:
    """``"4:64"`` (inclusive range) or ``"4,8,16"``."""
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"--hbar-ladder: cannot parse {text!r}") from exc


def _check_value(kind: ExperimentKind, name: str, value: Any, where: str) -> Any:
    spec = kind.params[name]
    t = spec.type
    if t is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if t is int and isinstance(value, bool) or not isinstance(value, t):
        raise ConfigError(f"{where}: expected {t.__name__}, got {type(value).__name__}")
    if (name.startswith("tol") or name == "slope_min") and not value > 0:
        raise ConfigError(f"{where}: tolerance must be positive")
    if name == "hbar_ladder":
        if not value or not all(isinstance(L, int) and L >= 1 for L in value):
            raise ConfigError(f"{where}: ladder levels must be positive integers")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ConfigError(f"{where}: ladder levels must increase (hbar = 1/L strictly decreasing)")
    if name in ("modes", "cases", "pairs") and value < 1:
        raise ConfigError(f"{where}: must be positive")
    return value


def load_config(path: str | Path | None, overrides: dict | None = None) -> list[ExperimentConfig]:
    """Parse and validate a YAML experiment file; ``overrides`` (from flags) win over file values."""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if path is None:
        return []
    text = Path(path).read_text()
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else "?"
        raise ConfigError(f"{path}:{line}: YAML syntax error: {exc.problem}") from exc
    lines = _line_map(node) if node is not None else {}

    def where(*p) -> str:
        for k in range(len(p), -1, -1):
            if p[:k] in lines:
                return f"{path}:{lines[p[:k]]}: {'.'.join(str(s) for s in p)}"
        return ".".join(str(s) for s in p)

    if data is None:
        return []
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    for key in data:
        if key not in GLOBAL_KEYS:
            raise ConfigError(f"{where(key)}: unknown top-level field")
    globals_ = {k: v for k, v in data.items() if k != "experiments"}
    exps = data.get("experiments") or []
    if not isinstance(exps, list):
        raise ConfigError(f"{where('experiments')}: must be a list")
    out, seen = [], set()
    for i, e in enumerate(exps):
        if not isinstance(e, dict):
            raise ConfigError(f"{where('experiments', i)}: entry must be a mapping")
        for key in e:
            if key not in ("id", "kind", "params"):
                raise ConfigError(f"{where('experiments', i, key)}: unknown field")
        kind_name = e.get("kind")
        if kind_name not in EXPERIMENTS:
            raise ConfigError(f"{where('experiments', i, 'kind')}: unknown experiment kind {kind_name!r}")
        kind = EXPERIMENTS[kind_name]
        eid = str(e.get("id", f"{kind_name}_{i}"))
        if eid in seen:
            raise ConfigError(f"{where('experiments', i, 'id')}: duplicate id {eid!r}")
        seen.add(eid)
        params = {n: s.default for n, s in kind.params.items()}
        for src, label in ((globals_, None), (e.get("params") or {}, "params"), (overrides, "flag")):
            for name, value in src.items():
                if name not in kind.params:
                    if label == "params":
                        raise ConfigError(f"{where('experiments', i, 'params', name)}: unknown parameter for {kind_name}")
                    continue
                loc = f"--{name.replace('_', '-')}" if label == "flag" else \
                    where(*(("experiments", i, "params", name) if label else (name,)))
                params[name] = _check_value(kind, name, value, loc)
        out.append(ExperimentConfig(eid, kind_name, params))
    return out


def _run_one(cfg: ExperimentConfig) -> tuple[str, list[dict], list[float]]:
    records = EXPERIMENTS[cfg.kind].runner(cfg.params)
    return cfg.id, [r.as_dict() for r in records], [r.runtime for r in records]


def run_experiments(configs: Sequence[ExperimentConfig], jobs: int = 1) -> dict:
    """Run all experiments and assemble the report; results are merged in config order."""
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]
    experiments, timing = [], {}
    for cfg, (eid, recs, runtimes) in zip(configs, results):
        n_fail = sum(not r["passed"] for r in recs)
        experiments.append({"id": eid, "kind": cfg.kind, "params_digest": digest({k: v for k, v in cfg.params.items() if k not in EXECUTION_KEYS}),
                            "records": recs, "summary": {"checks": len(recs), "failed": n_fail}})
        timing[eid] = {r["name"]: round(t, 3) for r, t in zip(recs, runtimes)}
    total = sum(e["summary"]["checks"] for e in experiments)
    failed = sum(e["summary"]["failed"] for e in experiments)
    return {
        "environment": {"fiolab": __version__, "numpy": np.__version__, "python": platform.python_version(),
                        "experiments": {c.id: {"modes": c.params.get("modes"),
                                               "hbar_ladder": c.params.get("hbar_ladder")} for c in configs}},
        "experiments": experiments,
        "summary": {"experiments": len(experiments), "checks": total, "failed": failed, "passed": failed == 0},
        # wall-clock data lives only here so that the rest of the report is reproducible
        "timing": {"generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                   "runtime_seconds": timing},
    }


def write_report(report: dict, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "report.json"]
    paths[0].write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for exp in report["experiments"]:
        p = out / f"{exp['id']}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "passed", "provenance", "inputs_digest", "measured", "expected"])
            for r in exp["records"]:
                w.writerow([r["name"], r["passed"], r["provenance"], r["inputs_digest"],
                            json.dumps(r["measured"], sort_keys=True), json.dumps(r["expected"], sort_keys=True)])
        paths.append(p)
    return paths


def _summary_lines(report: dict) -> list[str]:
    lines = []
    for exp in report["experiments"]:
        s = exp["summary"]
        status = "PASS" if s["failed"] == 0 else "FAIL"
        lines.append(f"{status}  {exp['id']} ({exp['kind']}): {s['checks'] - s['failed']}/{s['checks']} checks")
        for r in exp["records"]:
            if not r["passed"]:
                lines.append(f"      failed: {r['name']} {json.dumps(r['measured'], sort_keys=True)[:160]}")
    s = report["summary"]
    lines.append(f"total: {s['checks'] - s['failed']}/{s['checks']} checks passed")
    return lines


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fiolab", description="Verification suites for circle FIOs and their index.")
    sub = ap.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run the experiments of a config file")
    run.add_argument("--config", required=True, help="YAML experiment file")
    run.add_argument("--out", default="fiolab-out", help="report directory")
    run.add_argument("--seed", type=int)
    run.add_argument("--modes", type=int, help="mode cut K")
    run.add_argument("--hbar-ladder", help="ladder levels L, e.g. 4:64 or 4,8,16")
    run.add_argument("--order", type=int, help="hbar order N")
    run.add_argument("--jobs", type=int, default=1, help="parallel experiments")
    sub.add_parser("list", help="list experiment kinds")
    desc = sub.add_parser("describe", help="show parameters of an experiment kind")
    desc.add_argument("experiment")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verb == "list":
        for k in EXPERIMENTS.values():
            print(f"{k.name:16s} {k.description}")
            print(f"{'':16s} checks: {k.checks}")
        return 0
    if args.verb == "describe":
        kind = EXPERIMENTS.get(args.experiment)
        if kind is None:
            print(f"unknown experiment kind {args.experiment!r}; see `fiolab list`", file=sys.stderr)
            return 2
        print(f"{kind.name}: {kind.description}\nchecks: {kind.checks}\nparameters:")
        for n, s in kind.params.items():
            print(f"  {n} ({s.type.__name__}, default {json.dumps(s.default)}){': ' + s.help if s.help else ''}")
        return 0
    try:
        overrides = {"seed": args.seed, "modes": args.modes, "order": args.order, "jobs": args.jobs,
                     "hbar_ladder": parse_ladder(args.hbar_ladder) if args.hbar_ladder else None}
        configs = load_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report = run_experiments(configs, args.jobs)
    paths = write_report(report, Path(args.out))
    print("\n".join(_summary_lines(report)))
    print(f"report: {paths[0]}")
    return 0 if report["summary"]["passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
