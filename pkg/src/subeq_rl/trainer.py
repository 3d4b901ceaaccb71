"""Rollouts, antithetic evolution strategies, and evaluation metrics."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .env import EnvConfig, WorldState, reset_batch, step
from .nn import from_vector, to_vector
from .policy import PipelineConfig, compile_params, sample_action, shnn_forward

log = logging.getLogger(__name__)

# the critic does not influence returns, so ES leaves it alone
SEARCH_KEYS = ("mp", "W_u", "actor")
NOISE_CACHE_BYTES = 512 * 2**20


@dataclass(frozen=True)
class ESConfig:
    population: int = 64
    noise_std: float = 0.05
    learning_rate: float = 0.02
    generations: int = 200
    episodes_per_eval: int = 4
    seed: int = 0
    pairs_per_chunk: int = 32

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be a positive even number (antithetic pairs)")


@dataclass
class EpisodeStats:
    episode_return: float
    success: bool
    win: int | None
    steps: int


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SUBEQ_RL_THREADS", "1")))
    except ValueError:
        return 1


def episode_seeds(seed, count: int, *stream) -> list[tuple[int, ...]]:
    return [(int(seed), *stream, k) for k in range(count)]


def run_episodes(
    env: EnvConfig,
    params: dict,
    worlds: WorldState,
    pipeline: PipelineConfig,
    deterministic: bool = True,
    rng: np.random.Generator | None = None,
    opponent: dict | None = None,
    alpha: float = 1.0,
    on_step=None,
):
    """Step a batch of worlds to termination.

    Returns ``(returns (..., n_teams), outcome (...), steps (...))``; the outcome
    is the success flag (reach) or winning team (sumo, 0 = none).
    """
    batch = worlds.batch_shape
    active = np.ones(batch, dtype=bool)
    returns = np.zeros(batch + (env.n_teams,))
    steps = np.zeros(batch, dtype=np.int64)
    outcome = np.zeros(batch, dtype=np.int64)
    state = worlds
    params = compile_params(params)
    if env.task == "team_reach":
        teams = [(1, params)]
    else:
        teams = [(1, params), (2, compile_params(opponent) if opponent is not None else params)]
    for _ in range(env.max_steps):
        actions = [None] * env.n_agents
        for team, team_params in teams:
            outs, _ = shnn_forward(state, team_params, pipeline, team, with_value=False)
            for agent, out in zip(env.team_agents(team), outs):
                actions[agent] = sample_action(out, rng, deterministic)
        res = step(state, actions, alpha)
        returns += np.where(active[..., None], res.rewards, 0.0)
        steps += active
        key = "success" if env.task == "team_reach" else "winner"
        outcome = np.where(active & res.done, res.info[key], outcome)
        if on_step is not None:
            on_step(state, actions, res, active)
        active &= ~res.done
        state = res.state
        if not active.any():
            break
    return returns, outcome, steps


def _stats(env, returns, outcome, steps) -> list[EpisodeStats]:
    out = []
    for r, o, s in zip(returns, outcome, steps):
        if env.task == "team_reach":
            out.append(EpisodeStats(float(r[0]), bool(o), None, int(s)))
        else:
            out.append(EpisodeStats(float(r[0]), False, int(o) if o else None, int(s)))
    return out


def rollout(
    env: EnvConfig,
    params: dict,
    episodes: int,
    seed: int,
    deterministic: bool = True,
    pipeline: PipelineConfig = PipelineConfig(),
    opponent: dict | None = None,
    alpha: float = 1.0,
    chunk: int = 256,
) -> list[EpisodeStats]:
    """Run ``episodes`` full episodes; episode ``k`` resets from seed ``(seed, k)``.

    Episodes are simulated in fixed chunks, each with its own action-noise stream,
    so results do not depend on the worker count.
    """
    if episodes <= 0:
        return []
    seeds = episode_seeds(seed, episodes)
    starts = list(range(0, episodes, chunk))

    def run(start):
        worlds = reset_batch(env, seeds[start : start + chunk])
        rng = np.random.default_rng([int(seed), 1, start])
        return run_episodes(env, params, worlds, pipeline, deterministic, rng, opponent, alpha)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(run, starts))
    stats = []
    for returns, outcome, steps in results:
        stats += _stats(env, returns, outcome, steps)
    return stats


def evaluate(
    params: dict,
    env: EnvConfig,
    episodes: int = 1024,
    seed: int = 0,
    pipeline: PipelineConfig = PipelineConfig(),
    opponent: dict | None = None,
) -> dict:
    stats = rollout(env, params, episodes, seed, True, pipeline, opponent)
    n = max(len(stats), 1)
    metrics = {
        "episodes": len(stats),
        "mean_return": float(np.mean([s.episode_return for s in stats])) if stats else 0.0,
        "mean_steps": float(np.mean([s.steps for s in stats])) if stats else 0.0,
    }
    if env.task == "team_reach":
        metrics["success_rate"] = sum(s.success for s in stats) / n
    else:
        wins1 = sum(s.win == 1 for s in stats)
        wins2 = sum(s.win == 2 for s in stats)
        metrics["win_rate_team1"] = wins1 / n
        metrics["win_rate_team2"] = wins2 / n
        metrics["draw_rate"] = (len(stats) - wins1 - wins2) / n
    return metrics


# ---------------------------------------------------------------- evolution strategies


def centered_ranks(fitness: np.ndarray) -> np.ndarray:
    """Average ranks of the finite entries mapped to [-0.5, 0.5]; non-finite -> 0."""
    out = np.zeros(len(fitness))
    ok = np.isfinite(fitness)
    k = int(ok.sum())
    if k >= 2:
        out[ok] = (rankdata(fitness[ok]) - 1.0) / (k - 1) - 0.5
    return out


def _pair_noise(es: ESConfig, generation: int, pair: int, size: int) -> np.ndarray:
    return np.random.default_rng([es.seed, 2, generation, pair]).standard_normal(size)


@dataclass
class GenerationResult:
    theta: np.ndarray
    mean_fitness: float
    discarded: int
    fitness: np.ndarray


def es_generation(theta: np.ndarray, fitness_fn, es: ESConfig, generation: int) -> GenerationResult:
    """One antithetic ES update of the flat parameter vector ``theta``.

    ``fitness_fn(population, generation)`` maps a ``(P', n)`` stack of candidates
    to ``P'`` fitness values. Candidates are built chunk-wise so only
    ``2 * pairs_per_chunk`` vectors are alive at a time. The perturbations are
    kept for the update when they fit in ``NOISE_CACHE_BYTES``, otherwise they
    are regenerated from their seeds.
    """
    half = es.population // 2
    sigma = es.noise_std
    keep = half * theta.size * 8 <= NOISE_CACHE_BYTES
    plus = np.empty(half)
    minus = np.empty(half)
    cached = []
    for start in range(0, half, es.pairs_per_chunk):
        pairs = range(start, min(start + es.pairs_per_chunk, half))
        eps = np.stack([_pair_noise(es, generation, p, theta.size) for p in pairs])
        cand = np.concatenate([theta + sigma * eps, theta - sigma * eps])
        fit = np.asarray(fitness_fn(cand, generation), dtype=float)
        plus[pairs.start : pairs.stop] = fit[: len(pairs)]
        minus[pairs.start : pairs.stop] = fit[len(pairs) :]
        if keep:
            cached.append(eps)
        del cand
    fitness = np.concatenate([plus, minus])
    discarded = int((~np.isfinite(fitness)).sum())
    if discarded:
        log.warning("generation %d: discarded %d non-finite fitness values", generation, discarded)
    ranks = centered_ranks(fitness)
    weights = ranks[:half] - ranks[half:]
    if keep:
        grad = weights @ np.concatenate(cached)
    else:
        grad = np.zeros_like(theta)
        for p in np.flatnonzero(weights):
            grad += weights[p] * _pair_noise(es, generation, int(p), theta.size)
    new_theta = theta + es.learning_rate / (es.population * sigma) * grad
    finite = fitness[np.isfinite(fitness)]
    mean = float(finite.mean()) if finite.size else float("nan")
    return GenerationResult(new_theta, mean, discarded, fitness)


def split_search(params: dict) -> tuple[dict, dict]:
    search = {k: params[k] for k in SEARCH_KEYS}
    fixed = {k: v for k, v in params.items() if k not in SEARCH_KEYS}
    return search, fixed


def env_fitness(env, params, es: ESConfig, pipeline, opponent=None, alpha=1.0):
    """Fitness function over flat candidates: mean team-1 return on a shared set of
    episodes per generation (common random numbers)."""
    search, fixed = split_search(params)

    def fitness(cand: np.ndarray, generation: int) -> np.ndarray:
        tree = from_vector(cand, search)
        count = cand.shape[0]
        # the fixed part only needs broadcasting along the population axis
        full = {**tree, **_broadcast_tree(fixed, count)}
        seeds = episode_seeds(es.seed, es.episodes_per_eval, 3, generation)
        worlds = reset_batch(env, seeds)
        worlds = _tile_world(worlds, count)
        opp = None if opponent is None else _broadcast_tree(opponent, count)
        returns, _, _ = run_episodes(env, full, worlds, pipeline, True, None, opp, alpha)
        return returns[..., 0].mean(axis=-1)

    return fitness


def _broadcast_tree(tree: dict, count: int) -> dict:
    return {
        k: _broadcast_tree(v, count) if isinstance(v, dict) else np.broadcast_to(v, (count,) + v.shape)
        for k, v in tree.items()
    }


def _tile_world(world: WorldState, count: int) -> WorldState:
    from dataclasses import replace

    def tile(x):
        return np.broadcast_to(x, (count,) + x.shape).copy()

    return replace(world, pos=tile(world.pos), vel=tile(world.vel), angvel=tile(world.angvel), quat=tile(world.quat))


def es_step(
    params: dict,
    env: EnvConfig,
    es: ESConfig,
    generation: int,
    pipeline: PipelineConfig = PipelineConfig(),
    opponent: dict | None = None,
    alpha: float = 1.0,
):
    """One ES generation on the environment. Returns ``(params', mean_fitness)``."""
    search, fixed = split_search(params)
    result = es_generation(to_vector(search), env_fitness(env, params, es, pipeline, opponent, alpha), es, generation)
    return {**from_vector(result.theta, search), **fixed}, result.mean_fitness
