"""Command-line entry point: training, evaluation, search, audits, reports.

Every subcommand resolves its settings from flags plus an optional JSON
manifest (flags win), validates them before any compute, and writes its
artifacts under --out, the CONVEXQ_OUT environment variable, or the current
directory, in that order. All randomness is controlled by --seed, so a
repeated invocation reproduces its outputs byte for byte.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from .convexity import audit_convexity
from .envs.fvrs import FvrsConfig, obs_fn_by_label, oracle_ignore_rocks
from .envs.tiger import TigerConfig, oracle_perfect, oracle_policy, oracle_uninformative
from .evaluation import cross_evaluate, mc_return
from .harness import (Campaign, RunResult, best_config, evaluate_best,
                      read_results, result_row, robustness_from_rows,
                      run_search, search_rows, write_results)
from .networks import load_checkpoint, save_checkpoint
from .training import (Trainer, TrainConfig, fvrs_train_config,
                       tiger_train_config)

OUT_ROOT_VAR = "CONVEXQ_OUT"

SUMMARY_COLUMNS = ("method", "eval_env", "n", "mean", "std", "se", "median",
                   "q1", "q3", "wlow", "whigh", "max")

_CONFIG_KEYS = {f.name for f in fields(TrainConfig)}
_TRAIN_META_KEYS = {"env", "method", "seed", "p_obs", "obs_fn"}


def _out_dir(arg):
    path = arg or os.environ.get(OUT_ROOT_VAR) or "."
    os.makedirs(path, exist_ok=True)
    return path


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ValueError(f"malformed manifest {path}: {err}") from None


def _dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _env_config(env, p_obs, obs_fn):
    if env == "tiger":
        return TigerConfig(p_obs=p_obs)
    if env == "fvrs":
        return FvrsConfig(obs_fn=obs_fn_by_label(obs_fn, 4))
    raise ValueError(f"unknown environment {env!r}")


def _checkpoint_for(args):
    net = load_checkpoint(args.checkpoint)
    want = 1 if args.env == "tiger" else 14
    if net.input_dim != want:
        raise ValueError(f"checkpoint input dim {net.input_dim} does not "
                         f"match environment {args.env!r} (expects {want})")
    return net


# -- subcommands -------------------------------------------------------------------


def _cmd_train(args):
    doc = _load_json(args.manifest) if args.manifest else {}
    unknown = set(doc) - _CONFIG_KEYS - _TRAIN_META_KEYS
    if unknown:
        raise ValueError(f"unknown manifest keys: {sorted(unknown)}")
    env = args.env or doc.get("env", "tiger")
    method = args.method or doc.get("method", "none")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    p_obs = args.p_obs if args.p_obs is not None else float(doc.get("p_obs", 1.0))
    obs_fn = args.obs_fn or doc.get("obs_fn", "default")
    overrides = {k: doc[k] for k in doc if k in _CONFIG_KEYS}
    if args.c is not None:
        overrides["c"] = args.c

    env_config = _env_config(env, p_obs, obs_fn)
    make = tiger_train_config if env == "tiger" else fvrs_train_config
    config = make(**overrides)
    trainer = Trainer(env_config, config, method, seed)
    net, log = trainer.run()

    out = _out_dir(args.out)
    save_checkpoint(net, os.path.join(out, "net.json"))
    log.save(os.path.join(out, "trainlog.csv"))
    _dump_json({"env": env_config.label(), "method": method, "seed": seed,
                "config": asdict(config)}, os.path.join(out, "config.json"))
    print(f"trained {method} on {env_config.label()} seed {seed}: "
          f"{trainer.updates} updates over {trainer.frames} frames -> {out}")
    return 0


def _cmd_eval(args):
    net = _checkpoint_for(args)
    env_config = _env_config(args.env, args.p_obs, args.obs_fn)
    summary = mc_return(net, env_config, args.n_mc, rng=args.seed)
    doc = {"env": env_config.label(), "n_mc": args.n_mc, "seed": args.seed,
           **summary.to_dict()}
    _dump_json(doc, os.path.join(_out_dir(args.out), "eval.json"))
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_cross_eval(args):
    net = _checkpoint_for(args)
    env_config = _env_config(args.env, args.p_obs, args.obs_fn)
    crossed = cross_evaluate(net, env_config, args.n_mc, args.seed)
    rows = [result_row(0, args.method, env_config.label(), label, args.seed,
                       args.n_mc, summary)
            for label, summary in crossed.items()]
    write_results(rows, os.path.join(_out_dir(args.out), "cross_eval.csv"))
    print(json.dumps({label: s.to_dict() for label, s in crossed.items()},
                     indent=2, sort_keys=True))
    return 0


def _campaign_from(args):
    data = _load_json(args.manifest) if args.manifest else {}
    flag_map = {"env": args.env, "seed": args.seed, "n_mc": args.n_mc,
                "p_obs": args.p_obs, "obs_label": args.obs_fn}
    data.update({k: v for k, v in flag_map.items() if v is not None})
    if args.method is not None:
        data["methods"] = (args.method,)
    try:
        return Campaign(**data)
    except TypeError as err:
        raise ValueError(f"malformed manifest: {err}") from None


def _cmd_search(args):
    campaign = _campaign_from(args)
    results = run_search(campaign, jobs=args.jobs)
    out = _out_dir(args.out)
    campaign.to_manifest(os.path.join(out, "campaign.json"))
    write_results(search_rows(campaign, results), os.path.join(out, "search.csv"))
    best = best_config(results)
    _dump_json({"run_id": best.run_id, "method": best.method,
                "seed": best.seed, "mean": best.summary.mean,
                "config": asdict(best.config)}, os.path.join(out, "best.json"))
    failed = sum(r.failed for r in results)
    print(f"search complete: {len(results)} runs ({failed} failed); best run "
          f"{best.run_id} ({best.method}) mean {best.summary.mean:.4f} -> {out}")
    return 0


def _cmd_best_eval(args):
    campaign = _campaign_from(args)
    doc = _load_json(args.best)
    missing = {"method", "config"} - set(doc)
    if missing:
        raise ValueError(f"best-config file lacks keys: {sorted(missing)}")
    try:
        config = TrainConfig(**doc["config"])
    except TypeError as err:
        raise ValueError(f"malformed best-config file: {err}") from None
    best = RunResult(int(doc.get("run_id", 0)), doc["method"],
                     int(doc.get("seed", 0)), config)
    results, rows = evaluate_best(best, campaign, args.seeds)
    out = _out_dir(args.out)
    write_results(rows, os.path.join(out, "results.csv"))
    for r in results:
        if not r.failed:
            save_checkpoint(r.net, os.path.join(out, f"net_{r.run_id:03d}.json"))
    failed = sum(r.failed for r in results)
    print(f"evaluated {best.method} over {len(results)} fresh seeds "
          f"({failed} failed), {len(rows)} result rows -> {out}")
    return 0


def _cmd_audit(args):
    net = _checkpoint_for(args)
    report = audit_convexity(net, args.env, grid_resolution=args.grid,
                             seed=args.seed)
    path = os.path.join(_out_dir(args.out), "audit.json")
    report.save(path)
    print(f"max point-convexity violation {report.max_violation:.6g} "
          f"over {report.n_triples} triples -> {path}")
    return 0


def _cmd_oracle(args):
    if args.env == "tiger":
        table = oracle_policy(args.gamma, args.p_obs)
        r_uo, q_uo = oracle_uninformative(args.gamma)
        r_po, q_po = oracle_perfect(args.gamma)
        doc = {
            "env": "tiger", "gamma": args.gamma, "p_obs": args.p_obs,
            "uninformative": {"return": r_uo, "q": q_uo},
            "perfect": {"return": r_po, "q": q_po},
            "value_at_reset": float(np.interp(0.5, table.grid, table.values)),
            "open_left_at_or_below": table.threshold_low,
            "open_right_at_or_above": table.threshold_high,
        }
    else:
        r_star, q = oracle_ignore_rocks(args.gamma, 4)
        doc = {"env": "fvrs", "gamma": args.gamma,
               "always_east_return": r_star, "ignore_rocks_q": q}
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_report(args):
    rows = []
    for path in args.results:
        rows.extend(read_results(path))
    if not rows:
        raise ValueError("no rows found in the given result files")
    groups = robustness_from_rows(rows)
    path = os.path.join(_out_dir(args.out), "summary.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for (method, eval_env), s in groups.items():
            w.writerow([method, eval_env, s.n]
                       + [repr(float(v)) for v in
                          (s.mean, s.std, s.se, s.median, s.q1, s.q3,
                           s.whisker_low, s.whisker_high, s.max)])
    print(f"{len(groups)} method/environment groups from {len(rows)} rows -> {path}")
    return 0


# -- argument parsing --------------------------------------------------------------


def _add_env_flags(sp, resolved=True):
    """Environment selection; `resolved=False` leaves defaults to the manifest."""
    sp.add_argument("--env", choices=("tiger", "fvrs"),
                    default="tiger" if resolved else None)
    sp.add_argument("--p-obs", dest="p_obs", type=float,
                    default=1.0 if resolved else None,
                    help="tiger observation accuracy")
    sp.add_argument("--obs-fn", dest="obs_fn",
                    default="default" if resolved else None,
                    help="rock-sampling observation function label")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="convexq",
        description="Train, evaluate, and audit convexity-informed Q-networks "
                    "on belief-space tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train one agent; write log + checkpoint")
    _add_env_flags(sp, resolved=False)
    sp.add_argument("--method", choices=("none", "point", "grad", "hess", "hard"),
                    default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--c", type=float, default=None,
                    help="convexity penalty weight (soft methods)")
    sp.add_argument("--manifest", default=None,
                    help="JSON settings file; flags override its keys")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("eval", help="Monte Carlo return of a checkpoint")
    sp.add_argument("--checkpoint", required=True)
    _add_env_flags(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-mc", dest="n_mc", type=int, default=1_000)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_eval)

    sp = sub.add_parser("cross-eval",
                        help="evaluate a checkpoint across shifted environments")
    sp.add_argument("--checkpoint", required=True)
    _add_env_flags(sp)
    sp.add_argument("--method", default="agent",
                    help="method label written into the result rows")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-mc", dest="n_mc", type=int, default=1_000)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_cross_eval)

    sp = sub.add_parser("search", help="random hyperparameter search campaign")
    _add_env_flags(sp, resolved=False)
    sp.add_argument("--method", default=None,
                    help="restrict the campaign to a single method")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--n-mc", dest="n_mc", type=int, default=None)
    sp.add_argument("--manifest", default=None,
                    help="campaign JSON; flags override its keys")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_search)

    sp = sub.add_parser("best-eval",
                        help="retrain a winning config on fresh seeds and "
                             "cross-evaluate each")
    _add_env_flags(sp, resolved=False)
    sp.add_argument("--method", default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--n-mc", dest="n_mc", type=int, default=None)
    sp.add_argument("--manifest", default=None,
                    help="campaign JSON; flags override its keys")
    sp.add_argument("--best", required=True,
                    help="best-config JSON written by `search`")
    sp.add_argument("--seeds", type=int, default=10,
                    help="number of fresh evaluation seeds")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_best_eval)

    sp = sub.add_parser("audit",
                        help="worst point-convexity violation + value curves")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--env", choices=("tiger", "fvrs"), default="tiger")
    sp.add_argument("--grid", type=int, default=21)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_audit)

    sp = sub.add_parser("oracle", help="closed-form and value-iteration references")
    sp.add_argument("env", choices=("tiger", "fvrs"))
    sp.add_argument("--gamma", type=float, default=0.9)
    sp.add_argument("--p-obs", dest="p_obs", type=float, default=1.0)
    sp.set_defaults(func=_cmd_oracle)

    sp = sub.add_parser("report",
                        help="summary CSV from stored result rows; no retraining")
    sp.add_argument("--results", nargs="+", required=True,
                    help="one or more result CSV files")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=_cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:   # argparse already printed its diagnostic
        return int(err.code or 0)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
