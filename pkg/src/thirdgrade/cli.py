"""Command line entry point: run experiments from YAML configs and verify artifacts.

Usage::

    thirdgrade run CONFIG [--jobs N] [--no-timestamps]
    thirdgrade verify ARTIFACT_DIR
    thirdgrade print-schema

Exit codes: 0 success, 1 failed assertion or tampered artifacts, 2 invalid
config or missing/corrupt artifacts, 3 integration failure (partial
artifacts are written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import __version__
from .dynamics import (
    LEDGER_COLUMNS,
    EnergyLedger,
    ExponentialProfile,
    ForcingSchedule,
    IntegrationFailure,
    PhysicalParams,
    PowerProfile,
)
from .experiments import (
    Check,
    PullbackRun,
    all_passed,
    concentration_checks,
    diameter_checks,
    energy_audit_test,
    exponential_stability_batch,
    forcing_hypothesis_check,
    invariant_measure_sampler,
    ledger_violations,
    linear_decay_oracle,
    pullback_absorption_test,
    run_pullback,
    tail_estimate_test,
)
from .fields import ConfigurationError, Grid, VelocityField, random_velocity
from .stochastics import generate_path

EXIT_OK, EXIT_ASSERTION, EXIT_CONFIG, EXIT_INTEGRATION = 0, 1, 2, 3
OUTPUT_DIR_ENV = "THIRDGRADE_OUTPUT_DIR"
MANIFEST_NAME = "manifest.json"
MANIFEST_FORMAT = "thirdgrade-manifest"
CHECK_COLUMNS = ("name", "value", "threshold", "comparator", "passed")


# ---------------------------------------------------------------------------
# schema and config


def schema_text() -> str:
    return resources.files("thirdgrade").joinpath("config_schema.yaml").read_text()


def load_schema() -> dict:
    return yaml.safe_load(schema_text())


def _is_leaf(node) -> bool:
    return isinstance(node, dict) and "type" in node and "default" in node


def _coerce(value, spec: dict, key: str):
    kind = spec["type"]
    try:
        if kind == "int":
            if isinstance(value, bool) or not float(value).is_integer():
                raise ValueError
            value = int(value)
        elif kind == "float":
            if isinstance(value, bool):
                raise ValueError
            value = float(value)
        elif kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
        elif kind == "str":
            if not isinstance(value, str):
                raise ValueError
        elif kind == "list[float]":
            if not isinstance(value, (list, tuple)) or any(isinstance(v, bool) for v in value):
                raise ValueError
            value = [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected {kind}, got {value!r}") from None
    if "choices" in spec and value not in spec["choices"]:
        raise ConfigurationError(f"{key}: {value!r} not in {spec['choices']}")
    return value


def resolve_config(raw: dict, schema: dict | None = None, prefix: str = "") -> dict:
    """Merge ``raw`` with schema defaults, type-check and reject unknown keys."""
    schema = load_schema() if schema is None else schema
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{prefix or 'config'}: expected a mapping")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(prefix + k for k in unknown)}")
    out = {}
    for key, spec in schema.items():
        name = prefix + key
        if _is_leaf(spec):
            out[key] = _coerce(raw.get(key, copy.deepcopy(spec["default"])), spec, name)
        else:
            out[key] = resolve_config(raw.get(key, {}), spec, name + ".")
    return out


@dataclass
class RunConfig:
    """Validated run configuration."""

    experiment: str
    grid: Grid
    params: PhysicalParams
    forcing: ForcingSchedule
    seed: int
    dt: float
    options: dict
    output_dir: Path
    resolved: dict = field(repr=False, default_factory=dict)

    @property
    def section(self) -> dict:
        return self.options[self.experiment]


def build_forcing(spec: dict, grid: Grid) -> ForcingSchedule:
    if spec["kind"] == "zero":
        return ForcingSchedule.zero()
    x1, x2 = grid.coordinates()
    L = grid.box_length
    if spec["shape"] == "shear":
        values = np.stack([np.sin(2 * np.pi * x2 / L), np.cos(2 * np.pi * x1 / L)])
    else:
        w = spec["width"]
        if not 0 < w < L / 8:
            raise ConfigurationError("forcing.width must lie in (0, L/8)")
        c = L / 2
        psi = np.exp(-((x1 - c) ** 2 + (x2 - c) ** 2) / (2 * w * w))
        # perpendicular gradient (d2 psi, -d1 psi), scaled to unit peak speed
        values = np.stack([-(x2 - c) / w**2 * psi, (x1 - c) / w**2 * psi])
        values /= np.sqrt((values**2).sum(axis=0)).max()
    values = spec["amplitude"] * values
    label = f"{spec['kind']}:{spec['shape']}"
    if spec["kind"] == "constant_field":
        return ForcingSchedule.constant(grid, values, delta=spec["delta"], label=label)
    if spec["profile"] == "power":
        amp = PowerProfile(spec["power"])
    else:
        amp = ExponentialProfile(spec["rate"])
    return ForcingSchedule.time_varying(grid, values, amp, delta=spec["delta"], label=label)


def config_from_mapping(raw: dict) -> RunConfig:
    resolved = resolve_config(raw)
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        resolved["output_dir"] = env_dir
    g = resolved["grid"]
    grid = Grid(g["n_modes"], g["box_length"])
    p = resolved["params"]
    params = PhysicalParams(p["nu"], p["alpha"], p["beta"], p["sigma"], p["linear"])
    forcing = build_forcing(resolved["forcing"], grid)
    if forcing.kind != "zero":
        forcing.check_delta(params.sigma)
    dt = resolved["noise"]["dt"]
    if not dt > 0:
        raise ConfigurationError("noise.dt > 0 violated")
    return RunConfig(resolved["experiment"], grid, params, forcing, resolved["noise"]["seed"], dt,
                     resolved, Path(resolved["output_dir"]), resolved)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config is not valid YAML: {exc}") from exc
    return config_from_mapping(raw or {})


# ---------------------------------------------------------------------------
# experiment orchestration


@dataclass
class ExperimentOutput:
    checks: list
    tables: dict = field(default_factory=dict)        # name -> (columns, rows)
    ledgers: dict = field(default_factory=dict)       # name -> EnergyLedger
    figures: dict = field(default_factory=dict)       # file name -> callable(path)
    meta: dict = field(default_factory=dict)


def _seeds(seed: int, count: int, stream: int) -> list:
    ss = np.random.SeedSequence([seed, stream])
    return [int(s) for s in ss.generate_state(count, np.uint32)]


def _initial_fields(cfg: RunConfig, count: int, stream: int) -> list:
    init = cfg.options["initial"]
    rng = np.random.default_rng([cfg.seed, stream])
    return [random_velocity(cfg.grid, rng, k_cut=init["k_cut"], slope=init["slope"],
                            l2_norm=init["l2_norm"]) for _ in range(count)]


def _run_audit(cfg: RunConfig, mapper) -> ExperimentOutput:
    opt = cfg.section
    z0 = _initial_fields(cfg, 1, 1)[0]
    fine = generate_path(_seeds(cfg.seed, 1, 2)[0], 0.0, opt["horizon"], cfg.dt / 2)
    rep = energy_audit_test(z0, fine, cfg.params, cfg.forcing, 0.0, opt["horizon"],
                            calibration_window=opt["calibration_window"], safety=opt["safety"],
                            halving_range=(opt["halving_low"], opt["halving_high"]), mapper=mapper)
    from .plotting import audit_figure

    return ExperimentOutput(
        rep.checks, {"audit_summary": rep.table()},
        {"ledger_dt": rep.coarse, "ledger_dt_half": rep.fine},
        {"audit.png": lambda p: audit_figure(rep, p)},
        {"audit_constant": rep.constant},
    )


def _run_stability(cfg: RunConfig, mapper) -> ExperimentOutput:
    opt = cfg.section
    if cfg.forcing.kind != "zero":
        raise ConfigurationError("stability experiment requires forcing.kind = zero")
    n = opt["n_seeds"]
    paths = [generate_path(s, 0.0, opt["horizon"], cfg.dt) for s in _seeds(cfg.seed, n, 2)]
    fields_ = _initial_fields(cfg, 2 * n, 1)
    pairs = [(fields_[2 * i], fields_[2 * i + 1]) for i in range(n)]
    reports = exponential_stability_batch(cfg.params, paths, pairs, opt["horizon"], cfg.grid,
                                          record_every=opt["record_every"], mapper=mapper)
    threshold = -opt["rate_factor"] * cfg.params.sigma**2 / 4
    slopes = np.array([r.slope for r in reports])
    frac = float(np.mean(slopes <= threshold))
    checks = [Check.compare("seed_pass_fraction", frac, opt["pass_fraction"], ">=")]
    rows = [[i, r.slope, r.entry_time, int(r.converged_early)] for i, r in enumerate(reports)]
    tables = {"stability_seeds": (["seed_index", "slope", "entry_time", "converged_early"], rows)}
    if opt["linear_oracle"]:
        lin = PhysicalParams(cfg.params.nu, 0.0, 0.0, cfg.params.sigma, linear=True)
        x1, x2 = cfg.grid.coordinates()
        kx = 2 * np.pi / cfg.grid.box_length
        d0 = VelocityField.from_physical(cfg.grid, np.stack([np.sin(kx * x2), 0 * x2]))
        stride = max(1, int(round(cfg.dt * opt["record_every"] / opt["oracle_dt"])))
        path = generate_path(_seeds(cfg.seed, 1, 3)[0], 0.0, opt["horizon"], opt["oracle_dt"])
        sim = exponential_stability_batch(lin, [path], [(d0, VelocityField.zeros(cfg.grid))],
                                          opt["horizon"], cfg.grid, record_every=stride)[0]
        exact = linear_decay_oracle(lin, path, d0, opt["horizon"], record_every=stride)
        err = abs(sim.slope / exact.slope - 1.0)
        checks.append(Check.compare("linear_oracle_relative_error", err, opt["oracle_tolerance"], "<="))
        tables["linear_oracle"] = (["simulated_slope", "exact_slope", "relative_error"],
                                   [[sim.slope, exact.slope, err]])
    from .plotting import stability_figure

    return ExperimentOutput(checks, tables, figures={
        "stability.png": lambda p: stability_figure(reports, cfg.params.sigma, threshold, p)})


def _pullback_run(cfg: RunConfig, mapper) -> PullbackRun:
    opt = cfg.options["pullback"]
    depths = sorted(opt["depths"])
    past = depths[-1] + 40.0 / cfg.params.sigma**2
    past = math.ceil(past / cfg.dt) * cfg.dt
    path = generate_path(_seeds(cfg.seed, 1, 2)[0], -past, 0.0, cfg.dt)
    ensemble = np.stack([f.coeffs for f in _initial_fields(cfg, opt["ensemble_size"], 1)])
    run = PullbackRun(opt["anchor_time"], depths, ensemble, cfg.grid, path,
                      cfg.options["initial"]["l2_norm"])
    return run_pullback(run, cfg.params, cfg.forcing, mapper=mapper)


def _run_pullback(cfg: RunConfig, mapper) -> ExperimentOutput:
    run = _pullback_run(cfg, mapper)
    absorption = pullback_absorption_test(run, cfg.params, cfg.forcing)
    diam = diameter_checks(run, cfg.params, cfg.forcing, cfg.section["final_ratio"])
    _raise_on_failures(run)
    from .plotting import pullback_figure

    return ExperimentOutput(
        absorption.checks + diam.checks,
        {"pullback_absorption": absorption.table(), "pullback_diameter": diam.table()},
        figures={"pullback.png": lambda p: pullback_figure(absorption, diam, p)},
        meta={"absorbing_radius": absorption.radius.value, "entry_time": absorption.entry_time},
    )


def _raise_on_failures(run: PullbackRun):
    if run.failures:
        depth, msg = next(iter(sorted(run.failures.items())))
        raise IntegrationFailure(f"pull depth {depth}: {msg}")


def _run_tail(cfg: RunConfig, mapper) -> ExperimentOutput:
    opt = cfg.section
    run = _pullback_run(cfg, mapper)
    _raise_on_failures(run)
    radii = [r * cfg.grid.box_length for r in opt["radii"]]
    rep = tail_estimate_test(run, cfg.params, cfg.forcing, radii, opt["epsilon"])
    from .plotting import tail_figure

    return ExperimentOutput(rep.checks, {"tail_masses": rep.table()},
                            figures={"tail.png": lambda p: tail_figure(rep, p)})


def _run_invariant(cfg: RunConfig, mapper) -> ExperimentOutput:
    opt = cfg.section
    y0 = _initial_fields(cfg, 1, 1)[0]
    stride = 10
    summary = invariant_measure_sampler(cfg.params, cfg.forcing, opt["n_paths"], opt["horizon"],
                                        grid=cfg.grid, y0=y0, dt=cfg.dt, seed=cfg.seed,
                                        checkpoints=opt["checkpoints"], record_every=stride,
                                        mapper=mapper)
    if cfg.forcing.kind == "zero":
        checks = concentration_checks(summary, opt["threshold"])
    else:
        checks = [summary.batch_consistency(),
                  Check.compare("excluded_paths", summary.excluded, 0, "==")]
    from .plotting import invariant_figure

    return ExperimentOutput(checks, {"invariant_measure": summary.table()},
                            figures={"invariant.png": lambda p: invariant_figure(summary, p)},
                            meta={"late_mean": summary.late_mean, "late_var": summary.late_var})


def _run_hypothesis(cfg: RunConfig, mapper) -> ExperimentOutput:
    del mapper
    opt = cfg.section
    rep = forcing_hypothesis_check(cfg.forcing, cfg.params.sigma, cfg.grid, window=opt["window"],
                                   depth=opt["depth"])
    from .plotting import hypothesis_figure

    return ExperimentOutput(rep.checks, {"forcing_growth": rep.table()},
                            figures={"hypothesis.png": lambda p: hypothesis_figure(rep, p)})


RUNNERS: dict[str, Callable] = {
    "audit": _run_audit,
    "stability": _run_stability,
    "pullback": _run_pullback,
    "tail": _run_tail,
    "invariant": _run_invariant,
    "hypothesis": _run_hypothesis,
}


# ---------------------------------------------------------------------------
# artifact writing


def build_tag() -> str:
    """Version plus a digest of the package sources (same build, same tag)."""
    h = hashlib.sha256()
    root = resources.files("thirdgrade")
    for name in sorted(p.name for p in root.iterdir() if p.name.endswith((".py", ".yaml"))):
        h.update(name.encode())
        h.update(root.joinpath(name).read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _header_lines(cfg: RunConfig, timestamps: bool, extra: dict) -> list:
    lines = [
        f"thirdgrade report build={build_tag()}",
        f"experiment={cfg.experiment}",
        "domain=periodic box [0, L)^2 (stands in for a bounded domain with no-slip walls)",
        f"grid={json.dumps(cfg.resolved['grid'], sort_keys=True)}",
        f"params={json.dumps(cfg.resolved['params'], sort_keys=True)}",
        f"forcing={json.dumps(cfg.resolved['forcing'], sort_keys=True)}",
        f"noise={json.dumps(cfg.resolved['noise'], sort_keys=True)}",
        "dt_policy=path step dt, halved within a path interval while above the stability bound",
        f"options={json.dumps(cfg.resolved.get(cfg.experiment, {}), sort_keys=True)}",
    ]
    for k in sorted(extra):
        lines.append(f"{k}={_fmt(extra[k])}")
    if timestamps:
        from datetime import datetime, timezone

        lines.append(f"timestamp={datetime.now(timezone.utc).isoformat()}")
    return lines


def _csv_text(header: list, columns, rows) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_artifacts(cfg: RunConfig, output: ExperimentOutput, *, timestamps: bool, status: str,
                    exit_code: int) -> Path:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    header = _header_lines(cfg, timestamps, output.meta)
    artifacts = []

    def emit(name: str, kind: str, columns, rows):
        path = out / name
        path.write_text(_csv_text(header, columns, rows))
        artifacts.append({"file": name, "kind": kind, "n_rows": len(rows), "sha256": _digest(path)})

    emit("checks.csv", "checks", CHECK_COLUMNS,
         [[c.name, c.value, c.threshold, c.comparator, c.passed] for c in output.checks])
    for name, (cols, rows) in sorted(output.tables.items()):
        emit(f"{name}.csv", "table", cols, rows)
    for name, led in sorted(output.ledgers.items()):
        emit(f"{name}.csv", "ledger", LEDGER_COLUMNS, led.rows.tolist())
    if cfg.options["report"]["figures"]:
        for name, draw in sorted(output.figures.items()):
            path = draw(out / name)
            artifacts.append({"file": path.name, "kind": "figure", "sha256": _digest(path)})
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "build": build_tag(),
        "experiment": cfg.experiment,
        "status": status,
        "exit_code": exit_code,
        "config": {k: v for k, v in cfg.resolved.items() if k != "output_dir"},
        "audit_constant": output.meta.get("audit_constant"),
        "artifacts": artifacts,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out


def run(config_path, *, jobs: int = 1, timestamps: bool | None = None) -> int:
    """Execute the experiment named in ``config_path``; returns the exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    stamp = cfg.options["report"]["timestamps"] if timestamps is None else timestamps
    pool = ThreadPoolExecutor(jobs) if jobs > 1 else None
    mapper = pool.map if pool else map
    try:
        output = RUNNERS[cfg.experiment](cfg, mapper)
    except ConfigurationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationFailure as exc:
        print(f"integration failure: {exc}", file=sys.stderr)
        partial_out = ExperimentOutput([Check.compare("integration_completed", 0, 1, "==")],
                                       meta={"failure": str(exc).replace("\n", " ")})
        write_artifacts(cfg, partial_out, timestamps=stamp, status="integration_failure",
                        exit_code=EXIT_INTEGRATION)
        return EXIT_INTEGRATION
    finally:
        if pool:
            pool.shutdown()
    ok = all_passed(output.checks)
    code = EXIT_OK if ok else EXIT_ASSERTION
    write_artifacts(cfg, output, timestamps=stamp, status="passed" if ok else "failed", exit_code=code)
    for c in output.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {_fmt(c.value)} {c.comparator} {_fmt(c.threshold)}")
    print(f"artifacts written to {cfg.output_dir}")
    return code


# ---------------------------------------------------------------------------
# verification


class _Corrupt(Exception):
    pass


def _read_csv(path: Path, columns) -> tuple[dict, list]:
    header = {}
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise _Corrupt(f"{path.name}: unreadable ({exc})") from exc
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            header[key] = value
        else:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or (columns is not None and tuple(rows[0]) != tuple(columns)):
        raise _Corrupt(f"{path.name}: missing or unexpected column header")
    width = len(rows[0])
    data = rows[1:]
    if any(len(r) != width for r in data):
        raise _Corrupt(f"{path.name}: ragged rows")
    return header, data


def verify(artifact_dir) -> int:
    """Re-check a run directory without re-simulating; returns the exit code."""
    out = Path(artifact_dir)
    try:
        manifest = json.loads((out / MANIFEST_NAME).read_text())
        if manifest.get("format") != MANIFEST_FORMAT:
            raise ValueError("not a thirdgrade manifest")
        artifacts = manifest["artifacts"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"corrupt or missing manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = []
    try:
        parsed = {}
        for art in artifacts:
            path = out / art["file"]
            if not path.is_file():
                raise _Corrupt(f"{art['file']}: missing")
            if art["kind"] == "figure":
                continue
            cols = {"checks": CHECK_COLUMNS, "ledger": LEDGER_COLUMNS}.get(art["kind"])
            _, rows = _read_csv(path, cols)
            if len(rows) != art["n_rows"]:
                raise _Corrupt(f"{art['file']}: {len(rows)} rows, manifest records {art['n_rows']}")
            parsed[art["file"]] = (art, rows)
        for name, (art, rows) in parsed.items():
            if art["kind"] == "checks":
                for r in rows:
                    try:
                        c = Check(r[0], float(r[1]), float(r[2]), r[3], r[4] == "true")
                        ok = c.recheck()
                    except (ValueError, KeyError) as exc:
                        raise _Corrupt(f"{name}: unparsable check row {r}") from exc
                    if ok != c.passed or not ok:
                        problems.append(f"check {c.name} fails on recheck")
            elif art["kind"] == "ledger":
                try:
                    led = EnergyLedger(np.array(rows, dtype=float))
                except ValueError as exc:
                    raise _Corrupt(f"{name}: non-numeric ledger entries") from exc
                constant = manifest.get("audit_constant")
                if constant is None:
                    raise _Corrupt(f"{name}: audit constant missing from manifest")
                bad = ledger_violations(led, float(constant))
                if bad:
                    problems.append(f"{name}: {bad} ledger rows exceed the audit bound")
                if not np.all(np.isfinite(led.rows)) or np.any(np.diff(led.column("t")) <= 0):
                    problems.append(f"{name}: ledger times not increasing or non-finite entries")
    except _Corrupt as exc:
        print(f"corrupt artifacts: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for art in artifacts:
        if _digest(out / art["file"]) != art["sha256"]:
            problems.append(f"{art['file']}: content differs from the manifest digest")
    if manifest.get("status") != "passed":
        problems.append(f"run status is {manifest.get('status')}")
    for p in problems:
        print(f"FAIL {p}", file=sys.stderr)
    if problems:
        return EXIT_ASSERTION
    print(f"verified {len(artifacts)} artifacts in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thirdgrade", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the experiment described by a YAML config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1, help="worker threads for independent jobs")
    p_run.add_argument("--no-timestamps", action="store_true",
                       help="never write timestamps into CSV headers (the default)")
    p_verify = sub.add_parser("verify", help="re-check an artifact directory")
    p_verify.add_argument("artifact_dir")
    sub.add_parser("print-schema", help="print the config schema reference")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        if args.jobs < 1:
            print("invalid config: --jobs must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        return run(args.config, jobs=args.jobs, timestamps=False if args.no_timestamps else None)
    if args.command == "verify":
        return verify(args.artifact_dir)
    sys.stdout.write(schema_text())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
