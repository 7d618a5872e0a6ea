"""Command-line entry point: ``uavtrack {train,eval,rollout,explain}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numeric failure.
Relative output directories are placed under ``$UAVTRACK_OUT`` when set.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from .baselines import OBSERVER, TARGET
from .config import ConfigError, EnvConfig, env_config_from_dict, load_config
from .env import OBSERVER_FEATURES, read_trace_csv, write_trace_csv
from .evaluation import (
    PolicyResolutionError,
    matrix_report,
    render_table,
    resolve_policy,
    run_episode,
    run_matchup,
    select_median,
    episode_seeds,
    write_matchup_csv,
    write_report_csv,
)
from .rl import CheckpointError, PpoConfig, TrainingDivergenceError, cotrain, load_checkpoint, write_curve_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
OUT_ROOT_ENV = "UAVTRACK_OUT"

log = logging.getLogger("uavtrack")


class UsageError(Exception):
    pass


def _default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _out_dir(path: str) -> str:
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, args, config, artifacts, started, extra=None) -> str:
    """Write ``manifest.json`` atomically, hashing every artifact."""
    manifest = {
        "command": command,
        "argv": getattr(args, "argv", sys.argv[1:]),
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func", "argv")},
        "config": config,
        "artifacts": {
            name: {"path": os.path.relpath(p, out_dir), "sha256": _sha256(p)}
            for name, p in sorted(artifacts.items())
        },
        "duration_s": round(time.time() - started, 3),
        **(extra or {}),
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _load_configs(args):
    data = {"env": {}, "ppo": {}}
    if getattr(args, "config", None):
        data = load_config(args.config)
    env = env_config_from_dict(data["env"])
    return env, data["ppo"]


# ----------------------------------------------------------------------
def cmd_train(args) -> int:
    started = time.time()
    env, ppo_data = _load_configs(args)
    try:
        ppo = PpoConfig.from_dict(
            ppo_data, total_steps=args.steps, checkpoint_every=args.checkpoint_every
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args.out)
    ckpt_dir = os.path.join(out, "checkpoints")

    def progress(row):
        log.info("batch %d  steps %d  observer return %.2f",
                 row["batch"], row["env_steps"], row["mean_return_observer"])

    try:
        result = cotrain(env, ppo, args.seed, out_dir=ckpt_dir, workers=args.workers, progress=progress)
    except TrainingDivergenceError as exc:
        last = getattr(exc, "last_checkpoint", None)
        print(f"error: training diverged ({exc}); last checkpoint: {last}", file=sys.stderr)
        return EXIT_NUMERIC
    curve = os.path.join(out, "curve.csv")
    write_curve_csv(result.curve, curve)
    artifacts = {"curve": curve, **result.checkpoints}
    write_manifest(out, "train", args, {"env": env.to_dict(), "ppo": ppo.to_dict()}, artifacts, started,
                   {"seed": args.seed})
    print(f"wrote {len(result.curve)} batches to {curve}")
    return EXIT_OK


def _resolve(spec, role, env):
    try:
        return resolve_policy(spec, role, env)
    except CheckpointError as exc:
        raise PolicyResolutionError(str(exc)) from exc


def _run_pairs(run_dirs, env):
    pairs = []
    for d in run_dirs:
        o = _resolve(f"checkpoint:{os.path.join(d, 'observer_actor.ckpt')}", OBSERVER, env)
        t = _resolve(f"checkpoint:{os.path.join(d, 'target_actor.ckpt')}", TARGET, env)
        pairs.append((o, t))
    return pairs


def cmd_eval(args) -> int:
    started = time.time()
    env, _ = _load_configs(args)
    out = _out_dir(args.out)
    artifacts = {}
    extra = {"seed": args.seed, "episodes": args.episodes}

    if args.select_median:
        if not args.runs:
            raise UsageError("--select-median needs --runs")
        idx = select_median(_run_pairs(args.runs, env), args.episodes, args.seed, env)
        path = os.path.join(out, "median.txt")
        with open(path, "w") as fh:
            fh.write(f"{args.runs[idx]}\n")
        artifacts["median"] = path
        extra["median_run"] = args.runs[idx]
        print(args.runs[idx])
    elif args.matrix:
        observers = {"pctrl": [_resolve("pctrl", OBSERVER, env)], "random": [_resolve("random", OBSERVER, env)]}
        targets = {"pctrl": [_resolve("pctrl", TARGET, env)], "random": [_resolve("random", TARGET, env)]}
        if args.runs:
            pairs = _run_pairs(args.runs, env)
            observers = {"cotrain": [p[0] for p in pairs], **observers}
            targets = {"cotrain": [p[1] for p in pairs], **targets}
        cells = matrix_report(observers, targets, args.episodes, args.seed, env, args.cutoff)
        report = os.path.join(out, "report.csv")
        write_report_csv(cells, report)
        table = os.path.join(out, "table.txt")
        text = (
            "Mean observer episode return (± 2 sigma across runs)\n" + render_table(cells, "return")
            + "\n\nPer-episode spread (± 2 sigma over episodes)\n" + render_table(cells, "episode")
            + "\n\nMean OSPA (± 2 sigma across runs)\n" + render_table(cells, "ospa") + "\n"
        )
        with open(table, "w") as fh:
            fh.write(text)
        artifacts.update(report=report, table=table)
        print(text, end="")
    else:
        if not (args.observer and args.target):
            raise UsageError("eval needs OBSERVER and TARGET policies (or --matrix / --select-median)")
        o = _resolve(args.observer, OBSERVER, env)
        t = _resolve(args.target, TARGET, env)
        res = run_matchup(o, t, args.episodes, args.seed, env, args.cutoff)
        path = os.path.join(out, "matchup.csv")
        write_matchup_csv(res, path)
        table = os.path.join(out, "table.txt")
        text = (
            f"observer={res.observer_id} target={res.target_id} episodes={args.episodes}\n"
            f"mean return {res.mean_return:.2f} ± {2 * np.std(res.returns):.2f} (2 sigma, episodes)\n"
            f"mean OSPA   {res.mean_ospa:.2f} (cutoff {args.cutoff:g} m)\n"
        )
        with open(table, "w") as fh:
            fh.write(text)
        artifacts.update(matchup=path, table=table)
        print(text, end="")
    write_manifest(out, "eval", args, {"env": env.to_dict()}, artifacts, started, extra)
    return EXIT_OK


def cmd_rollout(args) -> int:
    started = time.time()
    env, _ = _load_configs(args)
    out = _out_dir(args.out)
    o = _resolve(args.observer, OBSERVER, env)
    t = _resolve(args.target, TARGET, env)
    env_seed, obs_rng, tgt_rng = episode_seeds(args.seed, args.episode)
    ret, _, cause, tracking_env = run_episode(o, t, env_seed, obs_rng, tgt_rng, env, record=True)
    path = os.path.join(out, "trace.csv")
    write_trace_csv(tracking_env.trace, path)
    write_manifest(out, "rollout", args, {"env": env.to_dict()}, {"trace": path}, started,
                   {"seed": args.seed, "return": ret, "cause": cause})
    print(f"{len(tracking_env.trace)} steps, return {ret:.2f}, ended by {cause}: {path}")
    return EXIT_OK


def cmd_explain(args) -> int:
    from . import xai

    started = time.time()
    env, _ = _load_configs(args)
    out = _out_dir(args.out)
    try:
        actor = load_checkpoint(args.checkpoint, env_hash=env.digest())
    except CheckpointError as exc:
        raise UsageError(str(exc)) from exc
    if actor.sizes[0] != len(OBSERVER_FEATURES):
        raise UsageError("explain expects an observer actor checkpoint")
    artifacts, extra = {}, {}

    if args.mode == "saliency":
        if not args.trace:
            raise UsageError("saliency mode needs --trace")
        rows = read_trace_csv(args.trace)
        sal = xai.saliency(actor, xai.trace_observations(rows))
        path = os.path.join(out, "saliency.csv")
        xai.write_saliency_csv(sal, path, steps=[int(r["step"]) for r in rows])
        artifacts["saliency"] = path
        extra["steps"] = len(sal)
        print(f"saliency for {len(sal)} steps: {path}")
    else:
        if args.grid_n < 2:
            raise UsageError("--grid-n must be at least 2")
        grid = xai.GridSpec(n=args.grid_n, k=env.k)
        X, y = xai.sample_policy_grid(actor, grid)
        hold = xai.holdout_observations(grid, args.holdout_samples, seed=args.seed)
        y_hold = xai.policy_mean(actor, hold)
        tree = xai.fit_tree(X, y, args.max_depth, args.ccp_alpha, holdout=(hold, y_hold))
        r2 = float(tree.score(hold, y_hold))
        names = list(OBSERVER_FEATURES)
        rules = xai.extract_rules(tree, args.action_threshold, env.k)
        files = {
            "tree_dot": ("tree.dot", tree.to_dot(names)),
            "tree_json": ("tree.json", tree.to_json(names) + "\n"),
            "rules": ("rules.txt", xai.rules_text(rules)),
        }
        for key, (name, content) in files.items():
            path = os.path.join(out, name)
            with open(path, "w") as fh:
                fh.write(content)
            artifacts[key] = path
        fidelity = {
            "r2_holdout": r2,
            "grid_rows": int(X.shape[0]),
            "dataset_sha256": xai.dataset_hash(X, y),
            "n_leaves": tree.n_leaves_,
            "depth": tree.depth_,
            "ccp_alpha": float(tree.ccp_alpha),
            "holdout_rows": int(hold.shape[0]),
        }
        path = os.path.join(out, "fidelity.json")
        with open(path, "w") as fh:
            json.dump(fidelity, fh, indent=2, sort_keys=True)
            fh.write("\n")
        artifacts["fidelity"] = path
        extra.update(fidelity)
        print(f"tree with {tree.n_leaves_} leaves, holdout R^2 {r2:.4f}, {len(rules)} rules")
    write_manifest(out, "explain", args, {"env": env.to_dict()}, artifacts, started, extra)
    return EXIT_OK


# ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavtrack", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("--config", help="TOML file with an [env] (and optional [ppo]) table")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=default_out, help="output directory")

    p = sub.add_parser("train", help="co-train observer and target")
    common(p, "runs/train")
    p.add_argument("--steps", type=int, default=None, help="environment steps (default 800000)")
    p.add_argument("--workers", type=int, default=_default_workers())
    p.add_argument("--checkpoint-every", type=int, default=None, help="batches between checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate observer/target matchups")
    common(p, "runs/eval")
    p.add_argument("observer", nargs="?", help="random | pctrl | checkpoint:<path>")
    p.add_argument("target", nargs="?", help="random | pctrl | checkpoint:<path>")
    p.add_argument("-n", "--episodes", type=int, default=50)
    p.add_argument("--cutoff", type=float, default=500.0, help="OSPA cutoff in meters")
    p.add_argument("--matrix", action="store_true", help="cross-policy table over all baselines")
    p.add_argument("--runs", nargs="*", default=[], help="training output dirs with checkpoints/")
    p.add_argument("--select-median", action="store_true", help="pick the run with median return")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="record one episode trace")
    common(p, "runs/rollout")
    p.add_argument("observer")
    p.add_argument("target")
    p.add_argument("--episode", type=int, default=0, help="episode index within the seed")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("explain", help="saliency or decision-tree explanation")
    common(p, "runs/explain")
    p.add_argument("checkpoint", help="observer actor checkpoint")
    p.add_argument("--mode", choices=("saliency", "tree"), required=True)
    p.add_argument("--trace", help="episode trace CSV (saliency mode)")
    p.add_argument("--max-depth", type=int, default=8)
    p.add_argument("--ccp-alpha", type=float, default=None, help="fixed pruning coefficient")
    p.add_argument("--grid-n", type=int, default=21)
    p.add_argument("--holdout-samples", type=int, default=100_000)
    p.add_argument("--action-threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_explain)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # run dirs given to eval point at training outputs; accept either level
    if getattr(args, "runs", None):
        args.runs = [os.path.join(r, "checkpoints") if os.path.isdir(os.path.join(r, "checkpoints")) else r
                     for r in args.runs]
    try:
        return args.func(args)
    except (ConfigError, PolicyResolutionError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
