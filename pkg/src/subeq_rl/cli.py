"""Command-line entry point: ``props``, ``rollout``, ``train`` and ``bench``.

Exit codes: 0 success, 1 property or assertion failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import harness
from .checkpoint import CheckpointError, check_compatible, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .env import ENVIRONMENTS, curriculum_alpha, make_env, reset
from .nn import param_count
from .policy import PipelineConfig, compile_params, init_params, shnn_forward
from .trainer import episode_seeds, es_step, evaluate, run_episodes, worker_count

log = logging.getLogger("subeq_rl")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _dump(obj) -> str:
    return json.dumps(harness._jsonable(obj), sort_keys=True)


def opponent_params(env, pipeline: PipelineConfig, seed: int):
    """Fixed team-2 policy used by sumo training and rollouts."""
    if env.task != "team_sumo":
        return None
    return init_params(env, pipeline, seed=[int(seed), 2], team=2)


# ---------------------------------------------------------------- props


def cmd_props(config: RunConfig, suites, seed: int, out: str, scale: float = 1.0) -> int:
    names = list(harness.SUITES) if not suites else suites
    unknown = [n for n in names if n not in harness.SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {unknown}; choose from {sorted(harness.SUITES)}")
    _ensure_dir(out)
    failed = False
    for name in names:
        report = harness.SUITES[name](seed, scale)
        with open(os.path.join(out, f"{name}.json"), "w") as fh:
            fh.write(report.to_json())
        status = "pass" if report.passed else "FAIL"
        kind = " (witness)" if report.witness else ""
        print(f"{status} {name}{kind}: {report.trials} trials, error {report.max_abs_error:.3g} <= {report.tolerance:g}")
        if not report.passed and not report.witness:
            failed = True
    return EXIT_FAIL if failed else EXIT_OK


# ---------------------------------------------------------------- rollout


def cmd_rollout(config: RunConfig, checkpoint: str, episodes: int, deterministic: bool, seed: int, out: str) -> int:
    env = config.env_config()
    pipeline = config.pipeline
    reference = init_params(env, pipeline, seed=seed)
    if checkpoint == "random":
        params = reference
    else:
        try:
            params, _ = load_checkpoint(checkpoint)
            check_compatible(params, reference)
        except CheckpointError as exc:
            raise UsageError(str(exc)) from exc
    opponent = opponent_params(env, pipeline, seed)
    if out:
        _ensure_dir(os.path.dirname(os.path.abspath(out)))
    lines = []
    stats = []
    for k, episode_seed in enumerate(episode_seeds(seed, episodes)):
        world = reset(env, episode_seed)
        rng = np.random.default_rng([int(seed), 1, k])

        def record(state, actions, res, active, k=k):
            comps = res.info["components"]
            lines.append(
                _dump(
                    {
                        "episode": k,
                        "step": res.state.step,
                        "root_pos": res.state.pos,
                        "root_quat": res.state.quat,
                        "actions": actions,
                        "rewards": res.rewards,
                        "reward_components": comps if len(comps) > 1 else comps[0],
                        "done": res.done,
                    }
                )
            )

        returns, outcome, steps = run_episodes(env, params, world, pipeline, deterministic, rng, opponent, 1.0, record)
        stats.append({"return": float(returns[0]), "outcome": int(outcome), "steps": int(steps)})
    if out:
        with open(out, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    summary = {
        "episodes": episodes,
        "mean_return": float(np.mean([s["return"] for s in stats])) if stats else 0.0,
        "mean_steps": float(np.mean([s["steps"] for s in stats])) if stats else 0.0,
    }
    if env.task == "team_reach":
        summary["success_rate"] = float(np.mean([s["outcome"] for s in stats])) if stats else 0.0
    else:
        summary["win_rate_team1"] = float(np.mean([s["outcome"] == 1 for s in stats])) if stats else 0.0
        summary["win_rate_team2"] = float(np.mean([s["outcome"] == 2 for s in stats])) if stats else 0.0
    print(_dump(summary))
    return EXIT_OK


# ---------------------------------------------------------------- train


CKPT_RE = re.compile(r"ckpt_(\d+)\.json$")


def checkpoint_name(generation: int) -> str:
    return f"ckpt_{generation:05d}.json"


def latest_checkpoint(run_dir: str) -> tuple[int, str] | None:
    found = []
    for path in glob.glob(os.path.join(run_dir, "ckpt_*.json")):
        m = CKPT_RE.search(path)
        if m and os.path.exists(path[: -len(".json")] + ".bin"):
            found.append((int(m.group(1)), path))
    return max(found) if found else None


def _eval_metrics(params, env, config: RunConfig, seed: int, opponent) -> dict:
    return evaluate(params, env, config.eval_episodes, seed, config.pipeline, opponent)


def train_seed(config: RunConfig, seed: int, run_dir: str) -> dict:
    """ES training of one seed in ``run_dir``, resuming from its latest
    checkpoint. Returns the final metrics line."""
    env = config.env_config()
    es = config.es_for_seed(seed)
    pipeline = config.pipeline
    total = es.generations
    opponent = opponent_params(env, pipeline, seed)
    os.makedirs(run_dir, exist_ok=True)
    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    meta = {"env": config.env, "seed": int(seed), "config": config.to_dict()}

    resume = latest_checkpoint(run_dir)
    if resume is None:
        params = init_params(env, pipeline, seed=seed)
        start = 0
        save_checkpoint(os.path.join(run_dir, checkpoint_name(0)), params, {**meta, "generation": 0})
        open(metrics_path, "w").close()
    else:
        start, path = resume
        params, _ = load_checkpoint(path)
        _truncate_metrics(metrics_path, start)
        log.info("seed %d: resuming at generation %d", seed, start)
    if total == 0:
        return {}

    line = {}
    if start == 0 and not _has_generation(metrics_path, 0):
        line = {"generation": 0, "mean_return": None, "eval": _eval_metrics(params, env, config, seed, opponent)}
        _append(metrics_path, line)
    for g in range(start, total):
        alpha = curriculum_alpha(g, total) if env.task == "team_sumo" else 1.0
        params, fitness = es_step(params, env, es, g, pipeline, opponent, alpha)
        done = g + 1
        line = {"generation": done, "mean_return": fitness}
        if done % config.eval_every == 0 or done == total:
            line["eval"] = _eval_metrics(params, env, config, seed, opponent)
        # metrics first: a crash before the checkpoint only leaves lines that resume truncates
        _append(metrics_path, line)
        if done % config.checkpoint_every == 0 or done == total:
            save_checkpoint(os.path.join(run_dir, checkpoint_name(done)), params, {**meta, "generation": done})
        log.info("seed %d generation %d: mean fitness %.3f", seed, done, fitness)
    return line


def _append(path: str, line: dict) -> None:
    with open(path, "a") as fh:
        fh.write(_dump(line) + "\n")


def read_metrics(path: str) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _has_generation(path: str, generation: int) -> bool:
    return any(m["generation"] == generation for m in read_metrics(path)) if os.path.exists(path) else False


def _truncate_metrics(path: str, generation: int) -> None:
    """Drop metrics lines written after the checkpoint being resumed from."""
    kept = [m for m in read_metrics(path) if m["generation"] <= generation] if os.path.exists(path) else []
    with open(path, "w") as fh:
        fh.writelines(_dump(m) + "\n" for m in kept)


def _train_seed_job(args):
    config, seed, run_dir = args
    return train_seed(config, seed, run_dir)


def cmd_train(config: RunConfig, out: str, workers: int | None = None) -> int:
    """Train every seed of ``config`` under ``out/seed_<s>``; seeds run in
    separate processes when more than one worker is allowed."""
    _ensure_dir(out)
    jobs = [(config, s, os.path.join(out, f"seed_{s}")) for s in config.seeds]
    workers = min(worker_count() if workers is None else workers, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            finals = list(pool.map(_train_seed_job, jobs))
    else:
        finals = [_train_seed_job(j) for j in jobs]
    for (_, seed, _), final in zip(jobs, finals):
        print(_dump({"seed": seed, **final}))
    return EXIT_OK


# ---------------------------------------------------------------- bench


def bench_env(name: str, pipeline: PipelineConfig, calls: int = 1000, seed: int = 0) -> dict:
    """Parameter count and median single-world ``shnn_forward`` latency."""
    env = make_env(name)
    params = init_params(env, pipeline, seed=seed)
    ready = compile_params(params)
    world = reset(env, seed)
    for _ in range(10):
        shnn_forward(world, ready, pipeline)
    times = np.empty(calls)
    for k in range(calls):
        t0 = time.perf_counter()
        shnn_forward(world, ready, pipeline)
        times[k] = time.perf_counter() - t0
    return {"env": name, "params": param_count(params), "median_ms": float(np.median(times) * 1e3), "calls": calls}


def cmd_bench(config: RunConfig, calls: int = 1000) -> int:
    for name in sorted(ENVIRONMENTS):
        print(_dump(bench_env(name, config.pipeline, calls)))
    return EXIT_OK


# ---------------------------------------------------------------- entry


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise UsageError(f"output directory {path} is not writable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subeq-rl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="JSON run config (defaults apply to missing keys)")
        p.add_argument("--seed", type=int, default=None, help="base seed (train: replaces the config's seeds)")
        p.add_argument("--out", default=out_default)
        return p

    p = common(sub.add_parser("props", help="run property suites"), "props")
    p.add_argument("--suite", action="append", help="suite name (repeatable, comma lists allowed)")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every suite's trial count")

    p = common(sub.add_parser("rollout", help="write a trajectory stream"), "rollout.jsonl")
    p.add_argument("checkpoint", nargs="?", default="random", help="checkpoint manifest or 'random'")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")

    common(sub.add_parser("train", help="evolution-strategies training"), None)

    p = common(sub.add_parser("bench", help="parameter counts and forward latency"), None)
    p.add_argument("--calls", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("SUBEQ_RL_LOG", "WARNING"), format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        config = load_config(args.config)
        if args.command == "props":
            suites = [s for item in args.suite or [] for s in item.split(",") if s]
            return cmd_props(config, suites, args.seed or 0, args.out, args.scale)
        if args.command == "rollout":
            if args.episodes < 0:
                raise UsageError("--episodes must be non-negative")
            return cmd_rollout(config, args.checkpoint, args.episodes, args.deterministic, args.seed or 0, args.out)
        if args.command == "train":
            if args.seed is not None:
                config = dataclasses.replace(config, seeds=(args.seed,))
            return cmd_train(config, args.out or config.out_dir)
        return cmd_bench(config, args.calls)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
