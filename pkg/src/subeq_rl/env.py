"""Team Reach and Team Sumo over simplified planar rigid-root dynamics.

Every agent is a rigid morphology: body offsets fixed in the root frame, moved
by a planar thrust and a yaw-rate command pooled from the actuator outputs.
All state arrays carry optional leading batch dimensions, so a stack of
independent episodes steps in one call.

Entity order: Team Reach puts N agents then M balls; Team Sumo puts team 1
(N agents), team 2 (M agents), then the center ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .assign import greedy_match_indices
from .geom import cross, quat_from_yaw, quat_multiply, quat_yaw, rotation_z_batch

TASKS = ("team_reach", "team_sumo")

ROOT_HEIGHT = 0.5
MIN_SEPARATION = 0.5
SPAWN_TRIES = 1000

DRAG = 0.9
MAX_SPEED = 2.0
MAX_YAW_RATE = 2.0
THRUST_GAIN = 10.0  # m/s^2 per unit thrust command
YAW_GAIN = 10.0  # rad/s^2 per unit yaw command

REACH_SUCCESS_BONUS = 10000.0
SUMO_WIN_BONUS = 1000.0

TYPE_TORSO, TYPE_LIMB, TYPE_BALL, TYPE_OTHER = range(4)


class ConfigurationTooDense(RuntimeError):
    pass


# ---------------------------------------------------------------- morphologies


@dataclass(frozen=True)
class Morphology:
    name: str
    offsets: np.ndarray = field(repr=False)  # (K, 3) body offsets in the root frame
    scalars: np.ndarray = field(repr=False)  # (K, 13)

    @property
    def n_bodies(self) -> int:
        return len(self.offsets)

    @property
    def n_actuators(self) -> int:
        return self.n_bodies - 1


def _body_scalars(kind: int, k: int) -> np.ndarray:
    s = np.zeros(13)
    if kind == TYPE_LIMB:
        # joint angles stay zero; ranges vary along the chain
        lo = -0.3 - 0.05 * (k % 4)
        s[3:9] = [lo, -lo, lo / 2, -lo / 2, 0.0, 0.0]
    s[9 + kind] = 1.0
    return s


def _morphology(name: str, offsets: list, kinds: list) -> Morphology:
    offsets = np.asarray(offsets, dtype=float)
    scalars = np.stack([_body_scalars(kind, k) for k, kind in enumerate(kinds)])
    offsets.setflags(write=False)
    scalars.setflags(write=False)
    return Morphology(name, offsets, scalars)


def _ant() -> Morphology:
    offsets, kinds = [[0.0, 0.0, 0.0]], [TYPE_TORSO]
    # unequal legs keep the heading observable from the body layout
    for leg, scale in enumerate([1.0, 0.85, 0.7, 0.55]):
        a = math.pi / 4 + leg * math.pi / 2
        c, s = math.cos(a), math.sin(a)
        offsets += [[0.3 * scale * c, 0.3 * scale * s, -0.1], [0.6 * scale * c, 0.6 * scale * s, -0.4]]
        kinds += [TYPE_LIMB, TYPE_LIMB]
    return _morphology("ant", offsets, kinds)


def _claw() -> Morphology:
    offsets, kinds = [[0.0, 0.0, 0.0]], [TYPE_TORSO]
    for side, scale in ((1.0, 1.0), (-1.0, 0.8)):
        a = side * math.pi / 3
        for seg in (1, 2, 3):
            r = 0.3 * seg * scale
            offsets.append([r * math.cos(a), r * math.sin(a), -0.1 * seg])
            kinds.append(TYPE_LIMB)
    return _morphology("claw", offsets, kinds)


def _centipede() -> Morphology:
    offsets, kinds = [[0.0, 0.0, 0.0]], [TYPE_TORSO]
    for seg in range(1, 5):
        offsets.append([-0.5 * seg, 0.0, 0.0])
        kinds.append(TYPE_OTHER)
    for seg in range(4):
        for side in (1.0, -1.0):
            offsets.append([-0.5 * seg + 0.1, side * 0.35, -0.4])
            kinds.append(TYPE_LIMB)
    return _morphology("centipede", offsets, kinds)


def _unimal(name: str, n_bodies: int, seed: int) -> Morphology:
    rng = np.random.default_rng(seed)
    offsets, kinds = [[0.0, 0.0, 0.0]], [TYPE_TORSO]
    for _ in range(n_bodies - 1):
        r, a = rng.uniform(0.2, 0.8), rng.uniform(0, 2 * math.pi)
        offsets.append([r * math.cos(a), r * math.sin(a), -rng.uniform(0.0, 0.45)])
        kinds.append(TYPE_LIMB)
    return _morphology(name, offsets, kinds)


MORPHOLOGIES: dict[str, Morphology] = {
    m.name: m
    for m in (_ant(), _claw(), _centipede(), _unimal("unimal_1", 8, 101), _unimal("unimal_2", 10, 202))
}

BALL_SCALARS = _body_scalars(TYPE_BALL, 0)


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class EnvConfig:
    task: str
    name: str
    n: int
    m: int
    radius: float
    morphologies: tuple[str, ...]  # one per agent
    d_occ: float = 0.5
    dt: float = 0.05
    max_steps: int = 1000

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "team_reach" and not self.n >= self.m >= 1:
            raise ValueError("team_reach needs N >= M >= 1")
        if self.task == "team_sumo":
            if self.n < 1 or self.m < 1:
                raise ValueError("team_sumo needs N, M >= 1")
            if self.radius <= 1:
                raise ValueError("team_sumo needs R > 1")
        if len(self.morphologies) != self.n_agents:
            raise ValueError("need one morphology per agent")
        for name in self.morphologies:
            if name not in MORPHOLOGIES:
                raise ValueError(f"unknown morphology {name!r}")

    @property
    def n_agents(self) -> int:
        return self.n if self.task == "team_reach" else self.n + self.m

    @property
    def n_entities(self) -> int:
        return self.n + self.m if self.task == "team_reach" else self.n + self.m + 1

    @property
    def n_teams(self) -> int:
        return 1 if self.task == "team_reach" else 2

    def team_agents(self, team: int) -> list[int]:
        if self.task == "team_reach":
            if team != 1:
                raise ValueError("team_reach has a single team (1)")
            return list(range(self.n))
        if team == 1:
            return list(range(self.n))
        if team == 2:
            return list(range(self.n, self.n + self.m))
        raise ValueError(f"unknown team {team}")

    @property
    def ball_ids(self) -> list[int]:
        if self.task == "team_reach":
            return list(range(self.n, self.n + self.m))
        return [self.n + self.m]

    def morphology(self, agent: int) -> Morphology:
        return MORPHOLOGIES[self.morphologies[agent]]

    def root_scalars(self) -> np.ndarray:
        """Read-only ``(E, 13)`` root scalar rows in entity order."""
        return self._root_scalars

    @cached_property
    def _root_scalars(self) -> np.ndarray:
        rows = [self.morphology(a).scalars[0] for a in range(self.n_agents)]
        rows += [BALL_SCALARS] * len(self.ball_ids)
        out = np.stack(rows)
        out.setflags(write=False)
        return out


ENVIRONMENTS: dict[str, dict] = {
    "team_reach:1_ant": dict(n=1, m=1, radius=5.0, morphologies=("ant",)),
    "team_reach:1_centipede": dict(n=1, m=1, radius=5.0, morphologies=("centipede",)),
    "team_reach:2_ants": dict(n=2, m=2, radius=3.0, morphologies=("ant", "ant")),
    "team_reach:2_ant_claw": dict(n=2, m=2, radius=5.0, morphologies=("ant", "claw")),
    "team_reach:2_unimals": dict(n=2, m=2, radius=5.0, morphologies=("unimal_1", "unimal_2")),
    "team_reach:3_ant_claw_centipede": dict(n=3, m=3, radius=5.0, morphologies=("ant", "claw", "centipede")),
    "team_sumo:1_centipede_vs_1_centipede": dict(n=1, m=1, radius=3.0, morphologies=("centipede",) * 2),
    "team_sumo:2_ants_vs_2_ants": dict(n=2, m=2, radius=3.0, morphologies=("ant",) * 4),
    "team_sumo:2_ant_claw_vs_2_ant_claw": dict(n=2, m=2, radius=3.0, morphologies=("ant", "claw") * 2),
    "team_sumo:3_ants_vs_3_ants": dict(n=3, m=3, radius=4.0, morphologies=("ant",) * 6),
}


def make_env(name: str, **overrides) -> EnvConfig:
    if name not in ENVIRONMENTS:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}")
    task = name.split(":")[0]
    return EnvConfig(task=task, name=name, **{**ENVIRONMENTS[name], **overrides})


# ---------------------------------------------------------------- state


@dataclass
class WorldState:
    config: EnvConfig
    pos: np.ndarray  # (..., E, 3)
    vel: np.ndarray  # (..., E, 3)
    angvel: np.ndarray  # (..., E, 3)
    quat: np.ndarray  # (..., E, 4) (w, x, y, z)
    step: int = 0

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.pos.shape[:-2]

    def index(self, idx) -> "WorldState":
        return replace(self, pos=self.pos[idx], vel=self.vel[idx], angvel=self.angvel[idx], quat=self.quat[idx])


def stack_worlds(worlds: list[WorldState]) -> WorldState:
    first = worlds[0]
    return replace(
        first,
        pos=np.stack([w.pos for w in worlds]),
        vel=np.stack([w.vel for w in worlds]),
        angvel=np.stack([w.angvel for w in worlds]),
        quat=np.stack([w.quat for w in worlds]),
    )


def transform_world(world: WorldState, rotation: np.ndarray, translation=None) -> WorldState:
    """Apply ``x -> R x + t`` to every entity, with ``R`` a rotation about z."""
    rotation = np.asarray(rotation, dtype=float)
    t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
    yaw = math.atan2(rotation[1, 0], rotation[0, 0])
    q = np.broadcast_to(quat_from_yaw(yaw), world.quat.shape)
    return replace(
        world,
        pos=world.pos @ rotation.T + t,
        vel=world.vel @ rotation.T,
        angvel=world.angvel @ rotation.T,
        quat=quat_multiply(q, world.quat),
    )


def reset(config: EnvConfig, seed) -> WorldState:
    rng = np.random.default_rng(seed)
    n_agents = config.n_agents
    e = config.n_entities
    for _ in range(SPAWN_TRIES):
        if config.task == "team_reach":
            xy = _uniform_disk(rng, e, config.radius)
        else:
            xy = np.vstack([_uniform_disk(rng, n_agents, config.radius - 1.0), np.zeros((1, 2))])
        gaps = np.linalg.norm(xy[:, None] - xy[None], axis=-1) + np.eye(e) * 1e9
        if gaps.min() >= MIN_SEPARATION:
            break
    else:
        raise ConfigurationTooDense(f"no spawn with {MIN_SEPARATION} m separation in {SPAWN_TRIES} tries")
    yaw = np.zeros(e)
    yaw[:n_agents] = rng.uniform(0.0, 2.0 * math.pi, size=n_agents)
    pos = np.column_stack([xy, np.full(e, ROOT_HEIGHT)])
    return WorldState(config, pos, np.zeros((e, 3)), np.zeros((e, 3)), quat_from_yaw(yaw), 0)


def reset_batch(config: EnvConfig, seeds) -> WorldState:
    return stack_worlds([reset(config, s) for s in seeds])


def _uniform_disk(rng, count, radius):
    r = radius * np.sqrt(rng.uniform(size=count))
    a = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return np.column_stack([r * np.cos(a), r * np.sin(a)])


# ---------------------------------------------------------------- observation


@dataclass
class Observation:
    own_geom: np.ndarray  # (..., K, 3, 3) columns: position, velocity, angular velocity
    own_scalars: np.ndarray  # (..., K, 13)
    nbr_geom: np.ndarray  # (..., D, 3, 3) neighbor root blocks
    nbr_scalars: np.ndarray  # (..., D, 13)
    nbr_ids: np.ndarray  # (..., D) entity ids, -1 for padding

    @property
    def nbr_mask(self) -> np.ndarray:
        return self.nbr_ids >= 0

    def flat(self) -> np.ndarray:
        lead = self.own_geom.shape[:-3]
        parts = [self.own_geom, self.own_scalars, self.nbr_geom, self.nbr_scalars]
        return np.concatenate([p.reshape(lead + (-1,)) for p in parts], axis=-1)


def _body_offsets_world(world: WorldState, entity: int) -> np.ndarray:
    cfg = world.config
    if entity >= cfg.n_agents:
        return np.zeros(world.batch_shape + (1, 3))
    rot = rotation_z_batch(quat_yaw(world.quat[..., entity, :]))
    return np.einsum("...ij,kj->...ki", rot, cfg.morphology(entity).offsets)


def body_positions(world: WorldState, entity: int) -> np.ndarray:
    return world.pos[..., entity, None, :] + _body_offsets_world(world, entity)


def body_blocks(world: WorldState, entity: int) -> tuple[np.ndarray, np.ndarray]:
    """Geometric blocks ``(..., K, 3, 3)`` and scalars ``(K, 13)`` of every body."""
    r = _body_offsets_world(world, entity)
    w = np.broadcast_to(world.angvel[..., entity, None, :], r.shape)
    p = world.pos[..., entity, None, :] + r
    v = world.vel[..., entity, None, :] + cross(w, r)
    scalars = world.config.morphology(entity).scalars if entity < world.config.n_agents else BALL_SCALARS[None]
    return np.stack([p, v, w], axis=-1), scalars


def root_blocks(world: WorldState) -> np.ndarray:
    """``(..., E, 3, 3)`` root blocks ``[p, v, w]`` for every entity."""
    return np.stack([world.pos, world.vel, world.angvel], axis=-1)


def observe(state: WorldState, agent: int, neighbors=None) -> Observation:
    """Own body blocks plus root blocks of other entities, in global coordinates.

    ``neighbors`` restricts the root blocks to the given ids (``(..., D)``, -1
    padded); by default every other entity is included in ascending order.
    """
    cfg = state.config
    if not 0 <= agent < cfg.n_agents:
        raise IndexError(f"invalid agent id {agent}")
    own_geom, own_scalars = body_blocks(state, agent)
    lead = state.batch_shape
    if neighbors is None:
        ids = np.array([e for e in range(cfg.n_entities) if e != agent], dtype=np.int64)
        neighbors = np.broadcast_to(ids, lead + ids.shape)
    neighbors = np.asarray(neighbors, dtype=np.int64)
    safe = np.maximum(neighbors, 0)
    mask = neighbors >= 0
    roots = root_blocks(state)
    nbr_geom = np.take_along_axis(roots, np.broadcast_to(safe, lead + safe.shape[-1:])[..., None, None], axis=-3)
    nbr_geom = np.where(mask[..., None, None], nbr_geom, 0.0)
    nbr_scalars = np.where(mask[..., None], cfg.root_scalars()[safe], 0.0)
    return Observation(own_geom, np.broadcast_to(own_scalars, lead + own_scalars.shape), nbr_geom, nbr_scalars, neighbors)


# ---------------------------------------------------------------- dynamics


@dataclass
class StepResult:
    state: WorldState
    rewards: np.ndarray  # (..., n_teams)
    done: np.ndarray  # (...,) bool
    info: dict


def pool_actions(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Planar thrust ``(..., 2)`` and yaw command ``(...,)`` from actuator outputs.

    Two actuators map straight to thrust; more are split into halves whose means
    give the thrust axes. The yaw command is the alternating-sign mean.
    """
    k = a.shape[-1]
    if k == 1:
        thrust = np.stack([a[..., 0], np.zeros(a.shape[:-1])], axis=-1)
    elif k == 2:
        thrust = a[..., :2]
    else:
        half = k // 2
        thrust = np.stack([a[..., :half].mean(-1), a[..., half:].mean(-1)], axis=-1)
    signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    return thrust, (a * signs).mean(-1)


def _integrate(state: WorldState, actions) -> WorldState:
    cfg = state.config
    if len(actions) != cfg.n_agents:
        raise ValueError(f"expected actions for {cfg.n_agents} agents, got {len(actions)}")
    pos, vel, angvel, quat = state.pos.copy(), state.vel.copy(), state.angvel.copy(), state.quat.copy()
    dt = cfg.dt
    for i, a in enumerate(actions):
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != cfg.morphology(i).n_actuators:
            raise ValueError(f"agent {i} expects {cfg.morphology(i).n_actuators} actuators, got {a.shape[-1]}")
        if np.isnan(a).any():
            raise ValueError(f"NaN action for agent {i}")
        a = np.clip(a, -1.0, 1.0)
        thrust, yaw_cmd = pool_actions(a)
        yaw = quat_yaw(quat[..., i, :])
        c, s = np.cos(yaw), np.sin(yaw)
        accel = THRUST_GAIN * np.stack([c * thrust[..., 0] - s * thrust[..., 1], s * thrust[..., 0] + c * thrust[..., 1]], axis=-1)
        v = DRAG * vel[..., i, :2] + dt * accel
        speed = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
        v = np.where(speed > MAX_SPEED, v * (MAX_SPEED / np.maximum(speed, 1e-300)), v)
        w = np.clip(DRAG * angvel[..., i, 2] + dt * YAW_GAIN * yaw_cmd, -MAX_YAW_RATE, MAX_YAW_RATE)
        vel[..., i, :2] = v
        angvel[..., i, 2] = w
        pos[..., i, :2] += dt * v
        q = quat_multiply(quat_from_yaw(dt * w), quat[..., i, :])
        quat[..., i, :] = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return replace(state, pos=pos, vel=vel, angvel=angvel, quat=quat, step=state.step + 1)


def check_termination(state: WorldState, config: EnvConfig | None = None):
    """Returns ``(done, outcome)``. For Team Reach the outcome is a success flag;
    for Team Sumo it is the winning team (0 for none or a draw)."""
    cfg = config or state.config
    timeout = state.step >= cfg.max_steps
    if cfg.task == "team_reach":
        agents = state.pos[..., : cfg.n, :]
        balls = state.pos[..., cfg.n :, :]
        match = greedy_match_indices(agents, balls)
        matched = np.take_along_axis(agents, match[..., None], axis=-2)
        dist = np.linalg.norm(matched - balls, axis=-1)
        success = np.all(dist <= cfg.d_occ, axis=-1)
        return success | timeout, success
    out1, out2 = _sumo_disqualified(state)
    winner = np.where(out1 & ~out2, 2, np.where(out2 & ~out1, 1, 0))
    return out1 | out2 | timeout, winner


def _sumo_disqualified(state: WorldState):
    cfg = state.config
    ball = state.pos[..., -1:, :]
    dist = np.linalg.norm(state.pos[..., : cfg.n + cfg.m, :] - ball, axis=-1)
    out = dist > cfg.radius
    return out[..., : cfg.n].any(-1), out[..., cfg.n :].any(-1)


def _control_norm(actions, agents) -> np.ndarray:
    return sum(np.sqrt(np.sum(np.asarray(actions[i], dtype=float) ** 2, axis=-1)) for i in agents)


def _approach(state: WorldState, movers, targets) -> np.ndarray:
    v = state.vel[..., movers, None, :]
    d = state.pos[..., None, targets, :] - state.pos[..., movers, None, :]
    return np.maximum(np.sum(v * d, axis=-1), 0.0).sum(axis=(-1, -2))


def _total(components: dict) -> np.ndarray:
    return sum(components.values())


def reach_reward(state_before: WorldState, actions, state_after: WorldState):
    cfg = state_after.config
    agents, balls = list(range(cfg.n)), cfg.ball_ids
    _, success = check_termination(state_after)
    gaps = np.linalg.norm(state_after.pos[..., None, balls, :] - state_after.pos[..., agents, None, :], axis=-1)
    components = {
        "success": np.where(success, REACH_SUCCESS_BONUS, 0.0),
        "distance": 5.0 * np.exp(-gaps.min(axis=-2)).sum(-1),
        "moving": 0.2 * _approach(state_after, agents, balls),
        "control": -0.2 * _control_norm(actions, agents),
    }
    return _total(components), components


def sumo_reward(state_before: WorldState, actions, state_after: WorldState, team: int, alpha: float):
    cfg = state_after.config
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    own = cfg.team_agents(team)
    opp = cfg.team_agents(3 - team)
    ball = state_after.pos[..., -1, None, :]
    far = np.linalg.norm(state_after.pos[..., opp, :] - ball, axis=-1).max(-1)
    _, winner = check_termination(state_after)
    components = {
        "distance": alpha * 5.0 * np.exp(far - cfg.radius),
        "moving": alpha * 5.0 * _approach(state_after, own, opp),
        "control": alpha * -0.1 * _control_norm(actions, own),
        "win": (1.0 - alpha) * np.where(winner == team, SUMO_WIN_BONUS, 0.0),
        "lose": (1.0 - alpha) * np.where(winner == 3 - team, -SUMO_WIN_BONUS, 0.0),
    }
    return _total(components), components


def step(state: WorldState, actions, alpha: float = 1.0) -> StepResult:
    """Advance one timestep. ``actions`` holds one ``(..., K_i - 1)`` array per agent;
    ``alpha`` is the Team Sumo dense/sparse blend."""
    nxt = _integrate(state, actions)
    cfg = nxt.config
    done, outcome = check_termination(nxt)
    if cfg.task == "team_reach":
        total, comp = reach_reward(state, actions, nxt)
        rewards = total[..., None]
        info = {"success": outcome, "components": [comp]}
    else:
        r1, c1 = sumo_reward(state, actions, nxt, 1, alpha)
        r2, c2 = sumo_reward(state, actions, nxt, 2, alpha)
        rewards = np.stack([r1, r2], axis=-1)
        info = {"winner": outcome, "components": [c1, c2]}
    return StepResult(nxt, rewards, done, info)


def curriculum_alpha(epoch: float, total_epochs: float) -> float:
    """Dense-only for the first quarter, then linear decay from 1 to 0."""
    if total_epochs <= 0 or not 0 <= epoch <= total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs}]")
    start = 0.25 * total_epochs
    if epoch <= start:
        return 1.0
    return 1.0 - (epoch - start) / (total_epochs - start)
