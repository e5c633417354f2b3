"""Command-line entry point: presets, experiment config files, CSV export.

Config files are INI-style::

    [experiment]
    scenario = paper-1pct          # preset name, or "custom"
    replicas = 200
    strategies = random, cdo, bcdo, bcdo:huber, bcdo:tukey:weighted
    output = results

    [scenario]
    contamination = 0.02           # overrides on top of the preset
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import re
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .harness import AggregateResult, StrategySpec, aggregate, run_replicas
from .strategies import ConfigError
from .stream import ScenarioConfig

CSV_HEADER = ["scenario", "strategy", "estimator", "weighted", "step",
              "mean_rmse", "std_rmse", "n_replicas", "n_padded"]

DEFAULT_STRATEGIES = ("random", "norm", "cdo", "bcdo", "bcdo:huber", "bcdo:tukey")
DEFAULT_REPLICAS = 1000


@dataclass(frozen=True)
class Preset:
    overrides: Dict[str, object]
    strategies: Tuple[str, ...] = DEFAULT_STRATEGIES
    description: str = ""


PRESETS: Dict[str, Preset] = {
    "paper-clean": Preset({"contamination": 0.0}, description="no outliers"),
    "paper-0275": Preset({"contamination": 0.00275}, description="0.275% outliers"),
    "paper-1pct": Preset({"contamination": 0.01}, description="1% outliers"),
    "paper-5pct": Preset({"contamination": 0.05}, description="5% outliers"),
    "paper-1pct-dirty-init": Preset({"contamination": 0.01, "contaminated_init": True},
                                    description="1% outliers, contaminated initial design"),
    "paper-5pct-dirty-init": Preset({"contamination": 0.05, "contaminated_init": True},
                                    description="5% outliers, contaminated initial design"),
    "paper-upvw-1pct": Preset({"contamination": 0.01},
                              strategies=("bcdo:huber", "bcdo:huber:weighted",
                                          "bcdo:tukey", "bcdo:tukey:weighted"),
                              description="1% outliers, plain vs weighted prediction variance"),
}


def preset_config(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    return ScenarioConfig(**{**PRESETS[name].overrides, **overrides})


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    scenario: ScenarioConfig
    strategies: Tuple[StrategySpec, ...]
    replicas: int = DEFAULT_REPLICAS
    output: str = "results"
    dump_traces: bool = False
    dump_curves: bool = False
    diagnostics: bool = False
    stop_tol: Optional[float] = None

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.stop_tol is not None and not self.stop_tol > 0:
            raise ConfigError("stop_tol must be positive")


_EXPERIMENT_KEYS = {"scenario", "replicas", "strategies", "output", "dump_traces",
                    "dump_curves", "diagnostics", "stop_tol", "name"}
_FIELD_TYPES = {
    name: (int if name == "initial_design_size" else type(getattr(ScenarioConfig(), name)))
    for name in ScenarioConfig.field_names()
}


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    lines, section = {}, ""
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m:
            lines.setdefault((section, m.group(1).strip().lower()), i)
    return lines


def _parse_bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _convert(typ, v: str):
    if typ is bool:
        return _parse_bool(v)
    if typ is int:
        f = float(v)
        if f != int(f):
            raise ValueError(f"not an integer: {v!r}")
        return int(f)
    return typ(v)


def parse_config(text: str) -> ExperimentSpec:
    """Parse and validate an experiment config; unknown keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   strict=True, empty_lines_in_values=False)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: key outside of a [section]") from exc
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    where = _key_lines(text)

    def err(section, key, msg):
        line = where.get((section, key))
        prefix = f"line {line}: " if line else ""
        return ConfigError(f"{prefix}[{section}] {key}: {msg}")

    for section in cp.sections():
        if section not in ("experiment", "scenario"):
            raise ConfigError(f"unknown section [{section}]")
    exp = cp["experiment"] if cp.has_section("experiment") else {}
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise err("experiment", key, "unknown key")
    if "scenario" not in exp or not exp["scenario"].strip():
        raise ConfigError("missing scenario")
    scen_name = exp["scenario"].strip()

    overrides = {}
    if cp.has_section("scenario"):
        for key, raw in cp["scenario"].items():
            if key not in _FIELD_TYPES:
                raise err("scenario", key, "unknown key")
            try:
                overrides[key] = _convert(_FIELD_TYPES[key], raw)
            except ValueError as exc:
                raise err("scenario", key, str(exc)) from exc

    if scen_name == "custom":
        base, strategies = {}, DEFAULT_STRATEGIES
    elif scen_name in PRESETS:
        base, strategies = dict(PRESETS[scen_name].overrides), PRESETS[scen_name].strategies
    else:
        raise err("experiment", "scenario",
                  f"unknown preset {scen_name!r}; valid presets: custom, {', '.join(PRESETS)}")
    try:
        scenario = ScenarioConfig(**{**base, **overrides})
    except ValueError as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc

    kw = {}
    try:
        if "strategies" in exp:
            strategies = tuple(s for s in re.split(r"[,\s]+", exp["strategies"]) if s)
        kw["strategies"] = tuple(StrategySpec.parse(s) for s in strategies)
        if "replicas" in exp:
            kw["replicas"] = _convert(int, exp["replicas"])
        for key in ("dump_traces", "dump_curves", "diagnostics"):
            if key in exp:
                kw[key] = _parse_bool(exp[key])
        if exp.get("stop_tol", "").strip():
            kw["stop_tol"] = float(exp["stop_tol"])
        if "output" in exp:
            kw["output"] = exp["output"].strip()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    name = exp.get("name", "").strip() or scen_name
    return ExperimentSpec(name=name, scenario=scenario, **kw)


def serialize_config(spec: ExperimentSpec) -> str:
    """Self-contained config text; ``parse_config`` of it returns ``spec``."""
    out = ["[experiment]", f"name = {spec.name}", "scenario = custom",
           f"replicas = {spec.replicas}",
           "strategies = " + ", ".join(str(s) for s in spec.strategies),
           f"output = {spec.output}",
           f"dump_traces = {str(spec.dump_traces).lower()}",
           f"dump_curves = {str(spec.dump_curves).lower()}",
           f"diagnostics = {str(spec.diagnostics).lower()}"]
    if spec.stop_tol is not None:
        out.append(f"stop_tol = {spec.stop_tol!r}")
    out += ["", "[scenario]"]
    for key, val in spec.scenario.to_dict().items():
        out.append(f"{key} = {str(val).lower() if isinstance(val, bool) else repr(val)}")
    return "\n".join(out) + "\n"


def _fmt(x: float) -> str:
    return "%.17g" % x


def _row_key(res: AggregateResult):
    s = res.strategy
    return (s.kind, s.loss, s.weighted)


def export_csv(results: Sequence[AggregateResult], path) -> None:
    if not results:
        raise ValueError("nothing to export")
    rows = []
    for res in sorted(results, key=_row_key):
        s = res.strategy
        for step in range(res.mean.shape[0]):
            rows.append([res.scenario, s.kind, s.loss, int(s.weighted), step,
                         _fmt(res.mean[step]), _fmt(res.std[step]), res.n_replicas,
                         int(res.n_padded[step])])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(rows)


def read_csv(path) -> List[AggregateResult]:
    groups: Dict[tuple, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for r in reader:
            key = (r["scenario"], r["strategy"], r["estimator"], r["weighted"] == "1")
            groups.setdefault(key, []).append(r)
    out = []
    for (scen, kind, loss, weighted), rows in groups.items():
        rows.sort(key=lambda r: int(r["step"]))
        out.append(AggregateResult(
            scenario=scen,
            strategy=StrategySpec(kind, loss, weighted),
            mean=np.array([float(r["mean_rmse"]) for r in rows]),
            std=np.array([float(r["std_rmse"]) for r in rows]),
            n_replicas=int(rows[0]["n_replicas"]),
            n_padded=np.array([int(r["n_padded"]) for r in rows]),
        ))
    return out


def _write_curves(path, spec: ExperimentSpec, runs) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "strategy", "estimator", "weighted", "step", "rmse"])
        for r, per in enumerate(runs):
            for s, res in zip(spec.strategies, per):
                for step, v in enumerate(res.rmse_curve):
                    w.writerow([r, s.kind, s.loss, int(s.weighted), step, _fmt(v)])


def _write_traces(directory: Path, spec: ExperimentSpec, runs) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for r, per in enumerate(runs):
        for s, res in zip(spec.strategies, per):
            with open(directory / f"replica{r:05d}_{s.label}.txt", "w") as fh:
                fh.write("step\tstream_index\tstatistic\tthresholds\taccepted\n")
                for step, idx, stat, thr, acc in res.trace or ():
                    fh.write(f"{step}\t{idx}\t{_fmt(stat)}\t{','.join(_fmt(t) for t in thr)}\t{int(acc)}\n")


def execute(spec: ExperimentSpec, out_dir=None, workers: Optional[int] = None) -> Path:
    """Run every strategy of ``spec`` and write the CSV outputs; returns the CSV path."""
    out = Path(out_dir if out_dir is not None else spec.output)
    out.mkdir(parents=True, exist_ok=True)
    diagnostics = spec.diagnostics or spec.stop_tol is not None
    runs = run_replicas(spec.scenario, spec.strategies, spec.replicas, workers,
                        diagnostics=diagnostics, trace=spec.dump_traces, stop_tol=spec.stop_tol)
    length = spec.scenario.budget + 1
    results = [aggregate(spec.name, s, [per[i].rmse_curve for per in runs], length)
               for i, s in enumerate(spec.strategies)]
    path = out / f"{spec.name}.csv"
    export_csv(results, path)
    if spec.dump_curves:
        _write_curves(out / f"{spec.name}_curves.csv", spec, runs)
    if spec.dump_traces:
        _write_traces(out / f"{spec.name}_traces", spec, runs)
    return path


def run_command(spec: ExperimentSpec, out_dir=None, workers: Optional[int] = None) -> int:
    try:
        t0 = time.time()
        path = execute(spec, out_dir, workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any failure mid-run maps to exit code 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path} ({spec.replicas} replicas, {time.time() - t0:.1f}s)")
    return 0


def load_spec(source: str) -> ExperimentSpec:
    """A config file path, or a bare preset name."""
    if os.path.exists(source):
        return parse_config(Path(source).read_text())
    if source in PRESETS:
        return parse_config(f"[experiment]\nscenario = {source}\n")
    raise ConfigError(f"no such config file or preset {source!r}; valid presets: {', '.join(PRESETS)}")


def _cmd_presets(_args) -> int:
    for name, preset in PRESETS.items():
        cfg = ScenarioConfig(**preset.overrides)
        print(f"{name}: {preset.description}")
        print(f"    p={cfg.p} budget={cfg.budget} warm_up={cfg.warm_up} alpha={cfg.alpha} "
              f"cutoff={cfg.cutoff} contamination={cfg.contamination} "
              f"contaminated_init={str(cfg.contaminated_init).lower()} "
              f"initial_design_size={cfg.initial_design_size}")
        print(f"    strategies: {', '.join(preset.strategies)}")
    return 0


def _cmd_run(args) -> int:
    try:
        spec = load_spec(args.config)
        changes = {}
        if args.replicas is not None:
            changes["replicas"] = args.replicas
        if args.dump_traces:
            changes["dump_traces"] = True
        if args.stop_tol is not None:
            changes["stop_tol"] = args.stop_tol
        if args.seed is not None:
            changes["scenario"] = replace(spec.scenario, seed=args.seed)
        spec = replace(spec, **changes)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run_command(spec, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="streamal", description="Robust online active learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config (or a preset name)")
    run.add_argument("config")
    run.add_argument("--replicas", type=int)
    run.add_argument("--out", help="output directory (default: the config's output)")
    run.add_argument("--dump-traces", action="store_true")
    run.add_argument("--stop-tol", type=float)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=_cmd_run)
    pr = sub.add_parser("presets", help="list scenario presets")
    pr.set_defaults(func=_cmd_presets)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
