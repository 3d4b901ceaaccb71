"""Local reference frames and the invariant observation transform."""

from __future__ import annotations

import numpy as np

from .assign import EntityGraph
from .env import Observation, WorldState, body_positions
from .geom import cross, quat_yaw, rotation_z_batch
from .nn import pmatmul

CENTERING_MODES = ("none", "sparse_root_mean", "dense_body_mean", "assignment_relative")
FRAME_MODES = ("learned_op", "heading_norm", "goal_dir", "identity")

DEGENERATE_EPS = 1e-8
QUAT_TOL = 1e-6


def lrf_vector(Z_prime, W_u) -> np.ndarray:
    """Channel-weighted combination ``Z' W_u`` of the updated geometric channels."""
    W_u = np.asarray(W_u, dtype=float)
    if W_u.shape[-1] != 1:
        W_u = W_u[..., None]
    Z_prime = np.asarray(Z_prime, dtype=float)
    if Z_prime.shape[-1] != W_u.shape[-2]:
        raise ValueError(f"W_u has {W_u.shape[-2]} rows for {Z_prime.shape[-1]} channels")
    return pmatmul(Z_prime, W_u)[..., 0]


def op_orthonormalize(u) -> np.ndarray:
    """Frame ``[e1 e2 e3]`` (as columns) with ``e3 = z``, ``e1`` the normalized
    horizontal part of ``u`` and ``e2 = e1 x e3``.

    A horizontal part shorter than ``DEGENERATE_EPS`` falls back to ``e1 = x``.
    Batched over leading dims of ``u``.
    """
    u = np.asarray(u, dtype=float)
    horiz = u.copy()
    horiz[..., 2] = 0.0
    norm = np.sqrt(horiz[..., 0] ** 2 + horiz[..., 1] ** 2)
    ok = norm >= DEGENERATE_EPS
    e1 = np.where(ok[..., None], horiz / np.where(ok, norm, 1.0)[..., None], np.array([1.0, 0.0, 0.0]))
    e3 = np.broadcast_to(np.array([0.0, 0.0, 1.0]), e1.shape)
    e2 = cross(e1, e3)
    return np.stack([e1, e2, e3], axis=-1)


def heading_frame(root_orientation) -> np.ndarray:
    """Rotation about z by the heading (yaw) of a ``(w, x, y, z)`` quaternion."""
    q = np.asarray(root_orientation, dtype=float)
    if np.any(np.abs(np.linalg.norm(q, axis=-1) - 1.0) > QUAT_TOL):
        raise ValueError("orientation is not a unit quaternion")
    return rotation_z_batch(quat_yaw(q))


def goal_frame(self_root, goal_root) -> np.ndarray:
    return op_orthonormalize(np.asarray(goal_root, dtype=float) - np.asarray(self_root, dtype=float))


def entity_centers(mode: str, world: WorldState, graph: EntityGraph) -> np.ndarray:
    """Per-entity observation origin, shape ``(..., n_entities, 3)``."""
    pos = world.pos
    n = pos.shape[-2]
    if mode == "none":
        return np.zeros(pos.shape)
    if mode == "sparse_root_mean":
        c = pos.mean(axis=-2, keepdims=True)
    elif mode == "dense_body_mean":
        bodies = np.concatenate([body_positions(world, e) for e in range(n)], axis=-2)
        c = bodies.mean(axis=-2, keepdims=True)
    elif mode == "assignment_relative":
        labels = np.broadcast_to(graph.labels, pos.shape[:-2] + (n,))
        return np.take_along_axis(pos, labels[..., None], axis=-2)
    else:
        raise ValueError(f"unknown centering mode {mode!r}")
    return np.broadcast_to(c, pos.shape).copy()


def center(mode: str, world: WorldState, graph: EntityGraph, entity: int) -> np.ndarray:
    if mode not in CENTERING_MODES:
        raise ValueError(f"unknown centering mode {mode!r}")
    if not 0 <= entity < world.pos.shape[-2]:
        raise KeyError(f"unknown entity id {entity}")
    return entity_centers(mode, world, graph)[..., entity, :]


def transform_observation(frame, obs: Observation, own_center, nbr_centers) -> Observation:
    """Re-express positions relative to their centers, then map every geometric
    block ``Z`` to ``O^T Z``. Scalars pass through."""
    frame = np.asarray(frame, dtype=float)
    own = obs.own_geom.copy()
    own[..., :, 0] -= np.asarray(own_center, dtype=float)[..., None, :]
    nbr = obs.nbr_geom.copy()
    nbr[..., :, 0] -= np.asarray(nbr_centers, dtype=float)
    nbr = np.where(obs.nbr_mask[..., None, None], nbr, 0.0)
    ot = np.swapaxes(frame, -1, -2)[..., None, :, :]
    return Observation(
        own_geom=ot @ own,
        own_scalars=obs.own_scalars,
        nbr_geom=ot @ nbr,
        nbr_scalars=obs.nbr_scalars,
        nbr_ids=obs.nbr_ids,
    )
