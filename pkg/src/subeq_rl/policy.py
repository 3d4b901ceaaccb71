"""Invariant actor and critic heads and the end-to-end forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .assign import EntityGraph, build_full_graph, build_reach_graph, build_sumo_graph
from .env import EnvConfig, WorldState, body_positions, observe, root_blocks
from .geom import GRAVITY
from .lrf import (
    CENTERING_MODES,
    FRAME_MODES,
    entity_centers,
    goal_frame,
    heading_frame,
    lrf_vector,
    op_orthonormalize,
    transform_observation,
)
from .nn import init_linear, init_mlp, mlp
from .subeq import (
    N_CHANNELS,
    N_ROOT_SCALARS,
    SYMMETRY_MODES,
    NetworkDims,
    compile_mp_params,
    embed_entity,
    entity_mp,
    init_mp_params,
)

MIN_STD = 1e-3

# Fixed observation normalization of the geometric channels (position per meter,
# velocity per m/s, angular velocity per rad/s). A positive constant per channel
# commutes with every rotation, so it leaves all symmetry properties intact while
# keeping the cubic growth of the Gram-based layers in check.
CHANNEL_SCALE = np.array([0.2, 0.5, 0.5])
POSITION_SCALE = CHANNEL_SCALE[0]
ASSIGNMENT_MODES = ("greedy", "full")


@dataclass(frozen=True)
class PipelineConfig:
    frame_mode: str = "learned_op"
    symmetry_mode: str = "sub_g"
    centering: str = "assignment_relative"
    assignment: str = "greedy"
    dims: NetworkDims = field(default_factory=NetworkDims)

    def __post_init__(self):
        for value, allowed, what in (
            (self.frame_mode, FRAME_MODES, "frame mode"),
            (self.symmetry_mode, SYMMETRY_MODES, "symmetry mode"),
            (self.centering, CENTERING_MODES, "centering mode"),
            (self.assignment, ASSIGNMENT_MODES, "assignment mode"),
        ):
            if value not in allowed:
                raise ValueError(f"unknown {what} {value!r}; choose from {allowed}")


@dataclass
class PolicyOutput:
    loc: np.ndarray
    scale: np.ndarray


def obs_degree(env: EnvConfig, assignment: str) -> int:
    """Number of neighbor root blocks in each agent's observation."""
    if assignment == "full":
        return env.n_entities - 1
    return 1 if env.task == "team_reach" else 2


def actor_input_width(env: EnvConfig, agent: int, config: PipelineConfig) -> int:
    k = env.morphology(agent).n_bodies
    block = 3 * N_CHANNELS + N_ROOT_SCALARS
    return (k + obs_degree(env, config.assignment)) * block + config.dims.hidden_dim


def init_params(env: EnvConfig, config: PipelineConfig = PipelineConfig(), seed=0, team: int = 1) -> dict:
    """Fresh parameter set for one team: shared message passing, ``W_u``, one
    actor per team agent and a critic over all entities."""
    rng = np.random.default_rng(seed)
    dims = config.dims
    agents = env.team_agents(team)
    return {
        "mp": init_mp_params(rng, dims, config.symmetry_mode),
        "W_u": init_linear(rng, N_CHANNELS, 1)["W"],
        "actor": {
            str(k): init_mlp(
                rng,
                [actor_input_width(env, a, config), dims.mlp_hidden, dims.mlp_hidden, 2 * env.morphology(a).n_actuators],
            )
            for k, a in enumerate(agents)
        },
        "critic": init_mlp(rng, [env.n_entities * dims.hidden_dim, dims.mlp_hidden, dims.mlp_hidden, 1]),
    }


def compile_params(params: dict) -> dict:
    """Copy of ``params`` with folded message-passing kernels for repeated forwards.

    The result computes the same function; it is meant for rollouts and must not
    be saved or searched over.
    """
    return {**params, "mp": compile_mp_params(params["mp"])}


def softplus(x):
    return np.logaddexp(0.0, x)


def scale_observation(obs):
    """Apply :data:`CHANNEL_SCALE` to every geometric block of an observation."""
    return replace(obs, own_geom=obs.own_geom * CHANNEL_SCALE, nbr_geom=obs.nbr_geom * CHANNEL_SCALE)


def actor_forward(obs_inv, h_i, actor_params: dict) -> PolicyOutput:
    x = np.concatenate([obs_inv.flat(), np.asarray(h_i, dtype=float)], axis=-1)
    out = mlp(actor_params, x)
    n = out.shape[-1] // 2
    return PolicyOutput(out[..., :n], softplus(out[..., n:]) + MIN_STD)


def critic_forward(node_scalars, critic_params: dict) -> np.ndarray:
    """Value from the node scalars concatenated in entity-index order."""
    h = np.asarray(node_scalars, dtype=float)
    x = h.reshape(h.shape[:-2] + (-1,))
    return mlp(critic_params, x)[..., 0]


def sample_action(out: PolicyOutput, rng: np.random.Generator | None = None, deterministic: bool = False) -> np.ndarray:
    if deterministic:
        return np.tanh(out.loc)
    if rng is None:
        raise ValueError("stochastic sampling needs an rng")
    return np.tanh(out.loc + out.scale * rng.standard_normal(out.loc.shape))


def build_graph(world: WorldState, assignment: str = "greedy") -> EntityGraph:
    cfg = world.config
    if assignment == "full":
        return build_full_graph(cfg.n_entities, world.batch_shape)
    if cfg.task == "team_reach":
        return build_reach_graph(world.pos, cfg.n, cfg.m)
    return build_sumo_graph(world.pos[..., : cfg.n, :], world.pos[..., cfg.n : cfg.n + cfg.m, :], world.pos[..., -1, :])


def _mp_center(world: WorldState, centering: str) -> np.ndarray:
    if centering == "none":
        return np.zeros(world.batch_shape + (1, 3))
    if centering == "dense_body_mean":
        bodies = np.concatenate([body_positions(world, e) for e in range(world.config.n_entities)], axis=-2)
        return bodies.mean(axis=-2, keepdims=True)
    return world.pos.mean(axis=-2, keepdims=True)


def _agent_frame(world, nodes, graph, agent, params, config) -> np.ndarray:
    mode = config.frame_mode
    if mode == "learned_op":
        return op_orthonormalize(lrf_vector(nodes.Z[..., agent, :, :], params["W_u"]))
    if mode == "heading_norm":
        return heading_frame(world.quat[..., agent, :])
    if mode == "goal_dir":
        goal = graph.nbr[..., agent, 0]
        goal = np.where(goal >= 0, goal, agent)
        goal = np.broadcast_to(goal, world.batch_shape)
        goal_pos = np.take_along_axis(world.pos, goal[..., None, None], axis=-2)[..., 0, :]
        return goal_frame(world.pos[..., agent, :], goal_pos)
    return np.broadcast_to(np.eye(3), world.batch_shape + (3, 3))


def shnn_forward(
    world: WorldState, params: dict, config: PipelineConfig = PipelineConfig(), team: int = 1, with_value: bool = True
):
    """Per-agent ``PolicyOutput`` for the agents of ``team`` and the team's value
    (``None`` when ``with_value`` is off).

    Leading batch dims of ``world`` are preserved; parameters may carry the same
    leading dims (one parameter set per world batch row).
    """
    cfg = world.config
    graph = build_graph(world, config.assignment)

    geom = root_blocks(world).copy()
    geom[..., :, 0] -= _mp_center(world, config.centering)
    geom *= CHANNEL_SCALE
    roots = world.pos * POSITION_SCALE
    scalars = np.broadcast_to(cfg.root_scalars(), world.batch_shape + (cfg.n_entities, N_ROOT_SCALARS))
    nodes = embed_entity(geom, scalars, roots[..., 2], params["mp"]["embed"])
    nodes = entity_mp(nodes, roots, graph, params["mp"], GRAVITY, config.symmetry_mode)

    centers = entity_centers(config.centering, world, graph)
    degree = obs_degree(cfg, config.assignment)
    outputs = []
    for k, agent in enumerate(cfg.team_agents(team)):
        frame = _agent_frame(world, nodes, graph, agent, params, config)
        nbr = np.broadcast_to(graph.nbr[..., agent, :degree], world.batch_shape + (degree,))
        obs = observe(world, agent, nbr)
        nbr_centers = np.take_along_axis(centers, np.maximum(nbr, 0)[..., None], axis=-2)
        obs_inv = scale_observation(transform_observation(frame, obs, centers[..., agent, :], nbr_centers))
        outputs.append(actor_forward(obs_inv, nodes.h[..., agent, :], params["actor"][str(k)]))
    value = critic_forward(nodes.h, params["critic"]) if with_value else None
    return outputs, value
