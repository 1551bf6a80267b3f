"""Command-line interface.

Subcommands: gen (sample a ground truth and ensemble to files), run (one
solver run), sweep (a preset experiment), rip (isometry-constant report as
JSON), quadnet (quadratic-network training), plot (re-render charts from a
sweep directory).  Exit codes: 0 success, 1 validation error, 2 numerical
abort.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import quadnet as qn
from . import sensing, solvers, xlab
from .quadnet import QuadConfig, RescaleError
from .ripcheck import estimate_rip
from .solvers import DivergenceError, SolverConfig

CONFIG_SCHEMA_VERSION = 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _strict(cls, mapping: dict, where: str):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(mapping) - names
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")
    return cls(**mapping)


def _load_config(path: str, kind: str) -> dict:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    version = raw.pop("schema_version", None)
    if version != CONFIG_SCHEMA_VERSION:
        raise ValueError(f"config schema_version must be {CONFIG_SCHEMA_VERSION}")
    got = raw.pop("kind", None)
    if got != kind:
        raise ValueError(f"config kind {got!r} does not match subcommand {kind!r}")
    return raw


def _ground_truth(args_or_cfg: dict):
    d = args_or_cfg["d"]
    r = args_or_cfg["r"]
    mode = args_or_cfg.get("gt_mode", "experiment")
    kappa = args_or_cfg.get("kappa")
    seed = args_or_cfg.get("seed", 0)
    return sensing.sample_ground_truth(d, r, kappa=kappa, mode=mode, seed=seed)


def _cmd_gen(args) -> int:
    gt = sensing.sample_ground_truth(args.d, args.r, kappa=args.kappa,
                                     mode=args.gt_mode, seed=args.seed)
    ens = sensing.sample_gaussian_ensemble(gt, args.m, seed=args.seed,
                                           noise_sigma=args.noise_sigma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sensing.save_ground_truth(gt, out / "ground_truth.bin")
    sensing.save_ensemble(ens, out / "ensemble.bin")
    print(json.dumps({"ground_truth": str(out / "ground_truth.bin"),
                      "ensemble": str(out / "ensemble.bin"),
                      "kappa": gt.kappa}, sort_keys=True))
    return 0


def _run_config_from_args(args) -> dict:
    if args.config:
        return _load_config(args.config, "run")
    solver = {"init_scale": args.init_scale, "step_size": args.step_size,
              "n_steps": args.steps, "init_basis": args.init_basis,
              "mode": args.mode, "record_every": args.record_every}
    if args.batch is not None:
        solver["batch"] = args.batch
    if args.stop_train_error is not None:
        solver["stop_train_error"] = args.stop_train_error
    return {"d": args.d, "r": args.r, "m": args.m, "gt_mode": args.gt_mode,
            "kappa": args.kappa, "algorithm": args.algorithm, "solver": solver}


def _cmd_run(args) -> int:
    cfg_map = _run_config_from_args(args)
    cfg_map.setdefault("seed", 0)
    if args.seed is not None:
        cfg_map["seed"] = args.seed
    algorithm = cfg_map.pop("algorithm", "gd")
    solver_map = dict(cfg_map.pop("solver"))
    solver_map["seed"] = cfg_map["seed"]
    cfg = _strict(SolverConfig, solver_map, "solver config")
    gt = _ground_truth(cfg_map)
    ens = None
    if cfg.mode == "empirical" or algorithm in ("sgd", "pgd"):
        ens = sensing.sample_gaussian_ensemble(gt, cfg_map["m"], seed=cfg_map["seed"])
    if algorithm == "gd":
        traj = solvers.run_gd(gt, ens, cfg)
    elif algorithm == "sgd":
        traj = solvers.run_sgd(gt, ens, cfg)
    elif algorithm == "pgd":
        traj = solvers.run_pgd(gt, ens, cfg)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solvers.write_trajectory_csv(traj, out / "trajectory.csv")
    print(json.dumps({"csv": str(out / "trajectory.csv"),
                      "final_train_error": traj.final.train_error,
                      "final_test_error": traj.final.test_error,
                      "stopped_at": traj.stopped_at}, sort_keys=True))
    return 0


def _cmd_sweep(args) -> int:
    specs = xlab.preset_specs(args.preset, desk_scale=args.desk_scale,
                              seed_base=args.seed, repeats=args.repeats)
    out = Path(args.out)
    for spec in specs:
        target = out / spec.name if len(specs) > 1 else out
        table = xlab.run_experiment(spec, target, workers=args.workers)
        print(json.dumps({"experiment": spec.name, "output": str(target),
                          "configs": [row.label for row in table.rows]},
                         sort_keys=True))
    return 0


def _cmd_rip(args) -> int:
    gt = sensing.sample_ground_truth(args.d, args.r, mode="experiment",
                                     seed=args.seed)
    ens = sensing.sample_gaussian_ensemble(gt, args.m, seed=args.seed)
    report = estimate_rip(ens, args.r, args.probes, seed=args.seed,
                          probe_mode=args.probe_mode)
    print(report.to_json())
    return 0


def _cmd_quadnet(args) -> int:
    if args.config:
        cfg_map = _load_config(args.config, "quadnet")
    else:
        quad = {"init_scale": args.init_scale, "step_size": args.step_size,
                "n_steps": args.steps, "record_every": args.record_every,
                "tau_mode": args.tau_mode}
        if args.rcut is not None:
            quad["rcut"] = args.rcut
        cfg_map = {"d": args.d, "r": args.r, "n": args.n,
                   "gt_mode": args.gt_mode, "kappa": args.kappa,
                   "algorithm": args.algorithm, "quad": quad}
    cfg_map.setdefault("seed", 0)
    if args.seed is not None:
        cfg_map["seed"] = args.seed
    algorithm = cfg_map.pop("algorithm", "rescaled")
    quad_map = dict(cfg_map.pop("quad"))
    quad_map["seed"] = cfg_map["seed"]
    cfg = _strict(QuadConfig, quad_map, "quad config")
    gt = _ground_truth(cfg_map)
    data = qn.gen_quad_data(gt, cfg_map["n"], seed=cfg_map["seed"])
    if algorithm == "rescaled":
        traj = qn.run_algorithm1(gt, data, cfg)
    elif algorithm == "sgd":
        traj = qn.run_quad_sgd(gt, data, cfg)
    else:
        raise ValueError(f"unknown quadnet algorithm {algorithm!r}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solvers.write_trajectory_csv(traj, out / "trajectory.csv")
    print(json.dumps({"csv": str(out / "trajectory.csv"),
                      "final_train_error": traj.final.train_error,
                      "final_test_error": traj.final.test_error}, sort_keys=True))
    return 0


def _cmd_plot(args) -> int:
    table, default_skip = xlab.load_summary_from_dir(args.dir)
    skip = args.skip_initial if args.skip_initial is not None else default_skip
    xlab.emit_summary_charts(table, args.dir, skip_initial=skip)
    print(json.dumps({"charts": [f"{table.name}_test.svg", f"{table.name}_train.svg"],
                      "output": str(args.dir)}, sort_keys=True))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="factorsense",
                     description="factorized matrix sensing lab")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen", help="sample a ground truth and ensemble to files")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--gt-mode", choices=("spec", "experiment"), default="experiment")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="one solver run")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--d", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--gt-mode", choices=("spec", "experiment"), default="experiment")
    p.add_argument("--algorithm", choices=("gd", "sgd", "pgd"), default="gd")
    p.add_argument("--init-scale", type=float, default=1e-3)
    p.add_argument("--step-size", type=float, default=0.0025)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--init-basis", choices=("identity", "haar"), default="identity")
    p.add_argument("--mode", choices=("empirical", "population"), default="empirical")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--stop-train-error", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a preset experiment")
    p.add_argument("--preset", choices=xlab.PRESETS, required=True)
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("rip", help="estimate the restricted-isometry constant")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--probes", type=int, required=True)
    p.add_argument("--probe-mode", choices=("symmetric", "asymmetric"),
                   default="symmetric")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_rip)

    p = sub.add_parser("quadnet", help="train the quadratic-activation network")
    p.add_argument("--config", help="JSON quadnet config")
    p.add_argument("--d", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--gt-mode", choices=("spec", "experiment"), default="experiment")
    p.add_argument("--algorithm", choices=("rescaled", "sgd"), default="rescaled")
    p.add_argument("--init-scale", type=float, default=1e-3)
    p.add_argument("--step-size", type=float, default=0.0025)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--rcut", type=float, default=None)
    p.add_argument("--tau-mode", choices=("exact", "estimated"), default="exact")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_quadnet)

    p = sub.add_parser("plot", help="re-render charts from a sweep directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--skip-initial", type=int, default=None)
    p.set_defaults(func=_cmd_plot)

    return parser


def cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:   # --help
        return int(exc.code or 0)
    if getattr(args, "command", None) is None:
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (DivergenceError, RescaleError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError, OSError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
