"""Command line front end.

Subcommands: simulate | filter-zakai | filter-ks | reweight | verify | report.
Exit codes: 0 pass/success, 1 fail, 2 inconclusive, 64 usage or input error.

All outputs are plain CSV/JSON files carrying the SHA-256 hash of the
resolved configuration; rerunning any command with the same configuration
and seed reproduces the files byte for byte (the one exception is the
``runtime_s`` field of verification reports).  The default output root is
``$JDFILTER_OUTPUT_ROOT`` or ``./runs``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from .ks import InnovationRecord, reweight_ks_to_zakai, run_ks
from .measures import (MassDegeneracy, ParticleMeasure, load_particles,
                       save_particles)
from .model import (PRESET_NAMES, ModelSpec, constant_one, gaussian_bell,
                    model_from_config, preset, validate_model)
from .pathsim import (CHANNEL_CORE, CHANNEL_TAIL, TimeGrid,
                      extract_observation_events, load_path, save_path,
                      simulate_decoupled, simulate_system)
from .verify import (VerificationReport, check_duality, check_joint_law,
                     check_martingale, check_pathwise_uniqueness)
from .zakai import FilterRun, run_zakai

__all__ = ["main", "entry", "RunConfig", "save_run", "load_run"]

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 64

_VERDICT_CODES = {"pass": EXIT_PASS, "fail": EXIT_FAIL,
                  "inconclusive": EXIT_INCONCLUSIVE}


class UsageError(Exception):
    """Bad flags, config, or input files; maps to exit code 64."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default is exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration


def _schema() -> dict:
    with resources.files("jdfilter").joinpath("config_schema.json").open() as fh:
        return json.load(fh)


class RunConfig:
    """Resolved configuration: defaults, then config file, then flags.

    The hash covers everything except the output location, so moving outputs
    around does not change their identity.
    """

    def __init__(self, data: dict):
        try:
            jsonschema.validate(data, _schema())
        except jsonschema.ValidationError as err:
            raise UsageError(f"invalid configuration: {err.message}") from err
        if "scenario" not in data and "model" not in data:
            raise UsageError("configuration needs either a scenario name or "
                             f"an inline model; scenarios: {', '.join(PRESET_NAMES)}")
        self.data = data

    @classmethod
    def resolve(cls, args, **flag_overrides) -> "RunConfig":
        data: dict = {}
        cfg_path = getattr(args, "config", None)
        if cfg_path:
            try:
                with open(cfg_path, encoding="utf-8") as fh:
                    data = json.load(fh)
            except FileNotFoundError as err:
                raise UsageError(f"config file not found: {cfg_path}") from err
            except json.JSONDecodeError as err:
                raise UsageError(f"config file is not valid JSON: {err}") from err
        if getattr(args, "scenario", None):
            data["scenario"] = args.scenario
            data.pop("model", None)
        if getattr(args, "seed", None) is not None:
            data["seed"] = args.seed
        for key, value in flag_overrides.items():
            if value is None:
                continue
            head, _, tail = key.partition(".")
            if tail:
                data.setdefault(head, {})[tail] = value
            else:
                data[head] = value
        data.setdefault("seed", 0)
        return cls(data)

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    def spec(self) -> ModelSpec:
        if "model" in self.data:
            try:
                return model_from_config(self.data["model"])
            except (KeyError, ValueError) as err:
                raise UsageError(f"bad inline model: {err}") from err
        name = self.data["scenario"]
        try:
            return preset(name)
        except KeyError as err:
            raise UsageError(
                f"unknown scenario {name!r}; choose from {', '.join(PRESET_NAMES)}"
            ) from err

    def grid(self, spec: ModelSpec, default_steps: int = 400) -> TimeGrid:
        g = self.data.get("grid", {})
        return TimeGrid(float(g.get("horizon", spec.horizon)),
                        int(g.get("steps", default_steps)))

    def get(self, key: str, default=None):
        cur = self.data
        for part in key.split("."):
            if not isinstance(cur, dict) or part not in cur:
                return default
            cur = cur[part]
        return cur

    @property
    def config_hash(self) -> str:
        hashed = {k: v for k, v in self.data.items() if k != "output"}
        blob = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _out_dir(args, config: RunConfig, leaf: str) -> str:
    explicit = getattr(args, "output", None) or config.get("output")
    if explicit:
        return explicit
    root = os.environ.get("JDFILTER_OUTPUT_ROOT", "runs")
    name = config.get("scenario") or config.get("model.name", "custom")
    return os.path.join(root, f"{leaf}-{name}-s{config.seed}")


# ---------------------------------------------------------------------------
# filter run serialization


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def save_run(run: FilterRun, out_dir, config_hash: str = "",
             source: dict | None = None) -> None:
    """``run.csv`` per node, ``run.meta.json``, and one particle CSV per
    stored state under ``states/``."""
    os.makedirs(os.path.join(out_dir, "states"), exist_ok=True)
    n = run.mean.shape[1]
    header = {"kind": run.kind, "config_hash": config_hash}
    cols = (["t", "mass", "ess"] + [f"mean{i}" for i in range(n)]
            + [f"var{i}" for i in range(n)])
    with open(os.path.join(out_dir, "run.csv"), "w", encoding="utf-8") as fh:
        fh.write(f"# {json.dumps(header, sort_keys=True)}\n")
        fh.write(",".join(cols) + "\n")
        for k in range(run.grid.steps + 1):
            row = [k * run.grid.dt, run.mass[k], run.ess[k],
                   *run.mean[k], *run.var[k]]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    for node, state in zip(run.node_indices, run.states):
        save_particles(state, os.path.join(out_dir, "states", f"node_{node:06d}.csv"),
                       meta={"node": int(node), "config_hash": config_hash})

    meta = {
        "kind": run.kind,
        "grid": {"horizon": run.grid.horizon, "steps": run.grid.steps},
        "particle_count": run.particle_count,
        "seed": run.seed,
        "node_indices": [int(i) for i in run.node_indices],
        "diagnostics": run.diagnostics,
        "config_hash": config_hash,
    }
    if source:
        meta["source"] = source
    innov = run.aggregates.get("innovations")
    if innov is not None:
        meta["innovations"] = {
            "dw_innov": innov.dw_innov.tolist(),
            "prior_gain": innov.prior_gain.tolist(),
            "comp_mean": innov.comp_mean.tolist(),
            "event_factor": innov.event_factor.tolist(),
            "event_count": innov.event_count.tolist(),
        }
    if "log_chi_increments" in run.aggregates:
        meta["log_chi_increments"] = run.aggregates["log_chi_increments"].tolist()
    with open(os.path.join(out_dir, "run.meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, default=_json_default)
        fh.write("\n")


def load_run(out_dir) -> FilterRun:
    meta_path = os.path.join(out_dir, "run.meta.json")
    if not os.path.exists(meta_path):
        raise UsageError(f"not a filter run directory (no run.meta.json): {out_dir}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    grid = TimeGrid(meta["grid"]["horizon"], meta["grid"]["steps"])
    table = np.loadtxt(os.path.join(out_dir, "run.csv"), delimiter=",",
                       skiprows=2, ndmin=2)
    n = (table.shape[1] - 3) // 2
    nodes = np.asarray(meta["node_indices"], dtype=int)
    states = []
    for node in nodes:
        mu, _ = load_particles(
            os.path.join(out_dir, "states", f"node_{node:06d}.csv"))
        states.append(mu)
    aggregates: dict = {}
    if "innovations" in meta:
        inn = meta["innovations"]
        aggregates["innovations"] = InnovationRecord(
            grid=grid,
            dw_innov=np.asarray(inn["dw_innov"], dtype=float),
            prior_gain=np.asarray(inn["prior_gain"], dtype=float),
            comp_mean=np.asarray(inn["comp_mean"], dtype=float),
            event_factor=np.asarray(inn["event_factor"], dtype=float),
            event_count=np.asarray(inn["event_count"], dtype=np.int64))
    if "log_chi_increments" in meta:
        aggregates["log_chi_increments"] = np.asarray(
            meta["log_chi_increments"], dtype=float)
    return FilterRun(
        kind=meta["kind"], grid=grid, particle_count=int(meta["particle_count"]),
        seed=int(meta["seed"]), node_indices=nodes, states=states,
        mass=table[:, 1], ess=table[:, 2],
        mean=table[:, 3:3 + n], var=table[:, 3 + n:3 + 2 * n],
        aggregates=aggregates, diagnostics=dict(meta.get("diagnostics", {})),
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    config = RunConfig.resolve(
        args, **{"grid.steps": args.steps, "grid.horizon": args.horizon,
                 "measure": args.measure})
    spec = config.spec()
    report = validate_model(spec)
    if not report.passed:
        print(report.summary(), file=sys.stderr)
        return EXIT_FAIL
    grid = config.grid(spec)
    simulate = (simulate_decoupled if config.get("measure") == "reference"
                else simulate_system)
    path = simulate(spec, grid, config.seed)
    out = _out_dir(args, config, "simulate")
    save_path(path, out, config_hash=config.config_hash)
    ev = path.noise.events
    core = int(np.sum((ev.channel == CHANNEL_CORE) & ev.accepted))
    print(f"simulate: {spec.name} ({path.measure_tag}), {grid.steps} steps to "
          f"t={grid.horizon:g}, seed {config.seed}")
    print(f"  events: {core} core + {int(np.sum(ev.channel == CHANNEL_TAIL))} tail; "
          f"X_T = {np.array2string(path.x[-1], precision=4)}")
    print(f"  wrote {out}/path.csv, path.meta.json  (config {config.config_hash[:12]})")
    return EXIT_PASS


def _run_filter(args, kind: str) -> int:
    store_flag = args.store
    if store_flag is not None and store_flag not in ("auto", "all"):
        try:
            store_flag = [int(x) for x in store_flag.split(",")]
        except ValueError as err:
            raise UsageError(f"bad --store value {args.store!r}: expected "
                             "'auto', 'all' or a comma list of node indices") from err
    config = RunConfig.resolve(
        args, **{"particle_count": args.particles,
                 "resample.policy": args.resample_policy,
                 "resample.threshold": args.resample_threshold,
                 "store": store_flag})
    spec = config.spec()
    try:
        path = load_path(args.path)
    except FileNotFoundError as err:
        raise UsageError(f"cannot read simulated path at {args.path}: {err}") from err
    obs = extract_observation_events(path)
    particles = int(config.get("particle_count", 1000))
    policy = config.get("resample.policy", "ess")
    threshold = float(config.get("resample.threshold", 0.5))
    store = config.get("store", "auto")
    runner = run_zakai if kind == "zakai" else run_ks
    run = runner(spec, obs, particles, config.seed, resample_policy=policy,
                 resample_threshold=threshold, store=store)
    out = _out_dir(args, config, f"filter-{kind}")
    save_run(run, out, config_hash=config.config_hash,
             source={"path_seed": path.seed, "measure_tag": path.measure_tag})
    print(f"filter-{kind}: {spec.name}, N={particles}, seed {config.seed}, "
          f"{obs.grid.steps} steps, resample={policy}")
    print(f"  mass_T={run.mass[-1]:.6g}  ess_T={run.ess[-1]:.1f}  "
          f"mean_T={np.array2string(run.mean[-1], precision=4)}")
    print(f"  wrote {out}/run.csv, run.meta.json, "
          f"{len(run.states)} state files  (config {config.config_hash[:12]})")
    return EXIT_PASS


def _cmd_reweight(args) -> int:
    config = RunConfig.resolve(args)
    spec = config.spec()
    ks_run = load_run(args.run)
    try:
        path = load_path(args.path)
    except FileNotFoundError as err:
        raise UsageError(f"cannot read simulated path at {args.path}: {err}") from err
    obs = extract_observation_events(path)
    try:
        out_run = reweight_ks_to_zakai(spec, ks_run, obs)
    except ValueError as err:
        raise UsageError(str(err)) from err
    out = _out_dir(args, config, "reweight")
    save_run(out_run, out, config_hash=config.config_hash,
             source={"run": os.path.basename(os.path.normpath(args.run)),
                     "path_seed": path.seed})
    print(f"reweight: chi_T={out_run.mass[-1]:.6g} over {out_run.grid.steps} steps")
    print(f"  wrote {out}/run.csv, run.meta.json  (config {config.config_hash[:12]})")
    return EXIT_PASS


def _default_pairs(spec: ModelSpec):
    box = np.asarray(spec.probe_box, dtype=float)
    center = box.mean(axis=1)
    width = float((box[:, 1] - box[:, 0]).mean()) / 4.0
    one = constant_one(spec.dim_signal)
    wide = gaussian_bell(center, width)
    narrow = gaussian_bell(center + width / 2.0, width / 2.0)
    return [(one, one), (wide, wide), (one, narrow)]


def _cmd_verify(args) -> int:
    config = RunConfig.resolve(args)
    spec = config.spec()
    seed = config.seed
    v = lambda key, flag, cast=int: (
        cast(flag) if flag is not None else
        (cast(config.get(f"verify.{key}")) if config.get(f"verify.{key}") is not None
         else None))

    if args.check == "duality":
        times = ([float(x) for x in args.times.split(",")] if args.times
                 else config.get("verify.times", [0.25, 0.5, 1.0]))
        kw = {}
        if v("dual_samples", args.dual_samples) is not None:
            kw["dual_samples"] = v("dual_samples", args.dual_samples)
        if v("outer_runs", args.outer_runs) is not None:
            kw["outer_runs"] = v("outer_runs", args.outer_runs)
        if v("particle_count", args.particles) is not None:
            kw["particle_count"] = v("particle_count", args.particles)
        if args.steps is not None:
            kw["steps"] = args.steps
        report = check_duality(spec, _default_pairs(spec), times, seed=seed, **kw)
    elif args.check == "martingale":
        kw = {}
        if v("path_count", args.paths) is not None:
            kw["path_count"] = v("path_count", args.paths)
        if v("grid_steps", args.steps) is not None:
            kw["grid_steps"] = v("grid_steps", args.steps)
        if v("mass_runs", args.mass_runs) is not None:
            kw["mass_runs"] = v("mass_runs", args.mass_runs)
        if v("mass_particles", args.mass_particles) is not None:
            kw["mass_particles"] = v("mass_particles", args.mass_particles)
        report = check_martingale(spec, seed=seed, **kw)
    elif args.check == "pathwise":
        ladder = ([int(x) for x in args.ladder.split(",")] if args.ladder
                  else config.get("verify.ladder", [100, 400, 1600, 6400]))
        kw = {}
        if v("grid_steps", args.steps) is not None:
            kw["grid_steps"] = v("grid_steps", args.steps)
        if v("reps", args.reps) is not None:
            kw["reps"] = v("reps", args.reps)
        report = check_pathwise_uniqueness(spec, ladder, seed=seed, **kw)
    else:
        kw = {}
        if v("replicates", args.replicates) is not None:
            kw["replicates"] = v("replicates", args.replicates)
        if v("particle_count", args.particles) is not None:
            kw["particle_count"] = v("particle_count", args.particles)
        if v("grid_steps", args.steps) is not None:
            kw["grid_steps"] = v("grid_steps", args.steps)
        if v("level", args.level, float) is not None:
            kw["level"] = v("level", args.level, float)
        report = check_joint_law(spec, seed=seed, **kw)

    report.details["config_hash"] = config.config_hash
    report.details["scenario"] = spec.name
    out = _out_dir(args, config, f"verify-{args.check}")
    os.makedirs(out, exist_ok=True)
    dest = os.path.join(out, f"report-{args.check}.json")
    report.save(dest)
    print(report.summary())
    print(f"  wrote {dest}  (config {config.config_hash[:12]})")
    return _VERDICT_CODES[report.verdict]


def _cmd_report(args) -> int:
    root = args.directory
    if not os.path.isdir(root):
        raise UsageError(f"not a directory: {root}")
    reports, runs = [], []
    for dirpath, _, files in sorted(os.walk(root)):
        for f in sorted(files):
            full = os.path.join(dirpath, f)
            if f.startswith("report-") and f.endswith(".json"):
                reports.append((os.path.relpath(full, root),
                                VerificationReport.load(full)))
            elif f == "run.meta.json":
                runs.append((os.path.relpath(dirpath, root),
                             load_run(dirpath)))
    if not reports and not runs:
        raise UsageError(
            f"nothing to report under {root}; expected verification reports "
            "(report-*.json) or filter runs (run.meta.json)")

    lines = ["# Run summary", ""]
    csv_rows = [("source", "item", "verdict_or_kind", "estimate", "target")]
    # exit code of the worst verdict; fail outranks inconclusive
    rank = {"pass": 0, "inconclusive": 1, "fail": 2}
    worst = "pass"
    if reports:
        lines += ["## Verification", "",
                  "| report | check | verdict | estimate | target | tol |",
                  "|---|---|---|---|---|---|"]
        for rel, rep in reports:
            if rank[rep.verdict] > rank[worst]:
                worst = rep.verdict
            for row in rep.rows:
                tgt = "" if row["target"] is None else f"{row['target']:.6g}"
                lines.append(f"| {rel} | {row['name']} | {row['verdict']} | "
                             f"{row['estimate']:.6g} | {tgt} | "
                             f"{row['tolerance']:.3g} |")
                csv_rows.append((rel, row["name"], row["verdict"],
                                 f"{row['estimate']:.17g}", tgt))
        lines.append("")
    if runs:
        lines += ["## Filter runs", "",
                  "| run | kind | particles | steps | mass_T | ess_T |",
                  "|---|---|---|---|---|---|"]
        for rel, run in runs:
            lines.append(f"| {rel} | {run.kind} | {run.particle_count} | "
                         f"{run.grid.steps} | {run.mass[-1]:.6g} | "
                         f"{run.ess[-1]:.1f} |")
            csv_rows.append((rel, "run", run.kind, f"{run.mass[-1]:.17g}", ""))
        lines.append("")

    with open(os.path.join(root, "summary.md"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
    with open(os.path.join(root, "summary.csv"), "w", encoding="utf-8") as fh:
        for row in csv_rows:
            fh.write(",".join(row) + "\n")
    print("\n".join(lines))
    print(f"wrote {root}/summary.md, summary.csv")
    return _VERDICT_CODES[worst]


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (schema-validated)")
    p.add_argument("--scenario", help=f"model preset: {', '.join(PRESET_NAMES)}")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--output", help="output directory (default derived)")


def build_parser() -> _Parser:
    p = _Parser(prog="jdfilter",
                description="Particle filters for jump-diffusion "
                            "signal-observation systems, with verification.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one signal-observation path")
    _add_common(s)
    s.add_argument("--steps", type=int, help="grid steps (default 400)")
    s.add_argument("--horizon", type=float, help="time horizon (default model's)")
    s.add_argument("--measure", choices=["physical", "reference"],
                   help="dynamics to simulate (default physical)")
    s.set_defaults(func=_cmd_simulate)

    for kind in ("zakai", "ks"):
        f = sub.add_parser(f"filter-{kind}",
                           help=("unnormalised" if kind == "zakai" else
                                 "normalised") + " particle filter on a path")
        _add_common(f)
        f.add_argument("--path", required=True,
                       help="directory written by `simulate`")
        f.add_argument("--particles", type=int, help="particle count (default 1000)")
        f.add_argument("--resample-policy", choices=["ess", "always", "never"])
        f.add_argument("--resample-threshold", type=float)
        f.add_argument("--store", help="'auto', 'all', or comma list of nodes")
        f.set_defaults(func=lambda a, k=kind: _run_filter(a, k))

    r = sub.add_parser("reweight",
                       help="scale a normalised run into an unnormalised one")
    _add_common(r)
    r.add_argument("--run", required=True, help="directory written by filter-ks")
    r.add_argument("--path", required=True, help="directory written by `simulate`")
    r.set_defaults(func=_cmd_reweight)

    vf = sub.add_parser("verify", help="run a verification check")
    vsub = vf.add_subparsers(dest="check", required=True, parser_class=_Parser)
    vd = vsub.add_parser("duality", help="second-moment duality")
    _add_common(vd)
    vd.add_argument("--times", help="comma list of check times")
    vd.add_argument("--dual-samples", type=int)
    vd.add_argument("--outer-runs", type=int)
    vd.add_argument("--particles", type=int)
    vd.add_argument("--steps", type=int)
    vm = vsub.add_parser("martingale", help="likelihood and mass martingales")
    _add_common(vm)
    vm.add_argument("--paths", type=int)
    vm.add_argument("--steps", type=int)
    vm.add_argument("--mass-runs", type=int)
    vm.add_argument("--mass-particles", type=int)
    vp = vsub.add_parser("pathwise", help="shared-noise uniqueness ladder")
    _add_common(vp)
    vp.add_argument("--ladder", help="comma list of particle counts")
    vp.add_argument("--steps", type=int)
    vp.add_argument("--reps", type=int)
    vj = vsub.add_parser("jointlaw", help="independent-stack law comparison")
    _add_common(vj)
    vj.add_argument("--replicates", type=int)
    vj.add_argument("--particles", type=int)
    vj.add_argument("--steps", type=int)
    vj.add_argument("--level", type=float)
    for vp_ in (vd, vm, vp, vj):
        vp_.set_defaults(func=_cmd_verify)

    rp = sub.add_parser("report", help="summarise runs and reports in a directory")
    rp.add_argument("directory")
    rp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return int(err.code) if err.code else 0
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as err:
        print(f"jdfilter: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except MassDegeneracy as err:
        print(f"jdfilter: filter degenerated: {err}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, FileNotFoundError) as err:
        print(f"jdfilter: error: {err}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
