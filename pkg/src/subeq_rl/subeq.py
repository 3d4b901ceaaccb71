"""Gravity-aware subequivariant layers and entity-level message passing.

Geometric quantities are ``(..., 3, m)`` arrays (columns are channels), scalars
are ``(..., d)``. Node states for a whole graph stack the node axis in front of
these: ``Z`` is ``(..., n_nodes, 3, 3)`` and ``h`` is ``(..., n_nodes, d_h)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assign import EntityGraph
from .geom import GRAVITY
from .nn import init_linear, init_mlp, linear, padd, pmatmul

SYMMETRY_MODES = ("sub_g", "so3")

N_CHANNELS = 3  # position, linear velocity, angular velocity
N_ROOT_SCALARS = 13  # 3 joint angles, 6 range bounds, 4-way type one-hot


@dataclass(frozen=True)
class NetworkDims:
    hidden_dim: int = 64  # sigma hidden width and node scalar width d_h
    vector_dim: int = 32  # channel mixing width inside each subequivariant layer
    propagation_steps: int = 2
    mlp_hidden: int = 256  # actor / critic hidden width


@dataclass
class NodeState:
    Z: np.ndarray
    h: np.ndarray


def _check_mode(symmetry_mode: str):
    if symmetry_mode not in SYMMETRY_MODES:
        raise ValueError(f"unknown symmetry mode {symmetry_mode!r}")


def init_subeq_layer(rng, m_in, m_out, d_in, d_out, dims: NetworkDims, symmetry_mode="sub_g") -> dict:
    _check_mode(symmetry_mode)
    rows = m_in + 1 if symmetry_mode == "sub_g" else m_in
    mix = dims.vector_dim
    return {
        "W": init_linear(rng, rows, mix)["W"],
        "sigma": init_mlp(rng, [mix * mix + d_in, dims.hidden_dim, mix * m_out + d_out]),
    }


def subeq_apply(params: dict, Z, h, m_out: int, g=GRAVITY, symmetry_mode="sub_g"):
    """One subequivariant function evaluation.

    The channels (plus gravity in ``sub_g`` mode) are mixed by ``W``; the Gram
    matrix of the mixed vectors together with ``h`` feeds ``sigma``, whose output
    is split into the output mixing matrix ``W_g`` and the scalar output.
    Returns ``(Z', h')``.

    If the layer was prepared by :func:`compile_layer` the first ``sigma`` layer
    reads the Gram matrix of the unmixed stack through a folded kernel instead,
    which is the same linear map with far fewer features.
    """
    _check_mode(symmetry_mode)
    Z = np.asarray(Z, dtype=float)
    h = np.asarray(h, dtype=float)
    if symmetry_mode == "sub_g":
        g = np.broadcast_to(np.asarray(g, dtype=float)[:, None], Z.shape[:-1] + (1,))
        Z = np.concatenate([Z, g], axis=-1)
    w = params["W"]
    if Z.shape[-1] != w.shape[-2]:
        raise ValueError(f"layer expects {w.shape[-2]} stacked channels, got {Z.shape[-1]}")
    mixed = pmatmul(Z, w)  # (..., 3, mix)
    mix = mixed.shape[-1]
    sigma = params["sigma"]
    if "gram_kernel" in params:
        first = _folded_first_layer(params, Z, h)
    else:
        gram = _gram(mixed).reshape(mixed.shape[:-2] + (mix * mix,))
        first = linear(sigma["0"], np.concatenate([gram, h], axis=-1))
    out = np.maximum(first, 0.0)
    for k in range(1, len(sigma)):
        out = linear(sigma[str(k)], out)
        if k < len(sigma) - 1:
            out = np.maximum(out, 0.0)
    w_g = out[..., : mix * m_out].reshape(out.shape[:-1] + (mix, m_out))
    return mixed @ w_g, out[..., mix * m_out :]


def _gram(x: np.ndarray) -> np.ndarray:
    """``x^T x`` for ``(..., 3, c)`` stacks, as a sum of three outer products."""
    return sum(x[..., k, :, None] * x[..., k, None, :] for k in range(x.shape[-2]))


def _folded_first_layer(params: dict, stack: np.ndarray, h: np.ndarray) -> np.ndarray:
    c = stack.shape[-1]
    gram = _gram(stack).reshape(stack.shape[:-2] + (c * c,))
    return padd(pmatmul(gram, params["gram_kernel"]) + pmatmul(h, params["scalar_kernel"]), params["sigma"]["0"]["b"])


def compile_layer(params: dict) -> dict:
    """Fold the mixing matrix into the Gram block of the first ``sigma`` layer:
    ``vec(W^T G W) . W1 == vec(G) . K`` with ``K[c, d] = sum_ab W[c, a] W[d, b] W1[ab]``."""
    w = params["W"]
    w1 = params["sigma"]["0"]["W"]
    rows, mix = w.shape[-2], w.shape[-1]
    out = w1.shape[-1]
    lead = w.shape[:-2]
    gram_part = w1[..., : mix * mix, :].reshape(lead + (mix, mix, out))
    t = w[..., None, :, :] @ gram_part  # (..., a, d, o)
    kernel = (w @ t.reshape(lead + (mix, rows * out))).reshape(lead + (rows * rows, out))
    return {**params, "gram_kernel": kernel, "scalar_kernel": w1[..., mix * mix :, :]}


def compile_mp_params(mp: dict) -> dict:
    out = dict(mp)
    for key, block in mp.items():
        if key.startswith("round"):
            out[key] = {name: compile_layer(layer) for name, layer in block.items()}
    return out


def init_mp_params(rng, dims: NetworkDims = NetworkDims(), symmetry_mode="sub_g") -> dict:
    d = dims.hidden_dim
    params = {"embed": init_linear(rng, N_ROOT_SCALARS + 1, d)}
    for r in range(dims.propagation_steps):
        params[f"round{r}"] = {
            # edge message: [p_j - p_i, Z_i, Z_j] and [dist, h_i, h_j]
            "phi": init_subeq_layer(rng, 1 + 2 * N_CHANNELS, N_CHANNELS, 2 * d + 1, d, dims, symmetry_mode),
            # node update: [M_i, Z_i] and [m_i, h_i]
            "psi": init_subeq_layer(rng, 2 * N_CHANNELS, N_CHANNELS, 2 * d, d, dims, symmetry_mode),
        }
    return params


def embed_entity(root_geom, root_scalars, z_height, embed_params: dict) -> NodeState:
    root_scalars = np.asarray(root_scalars, dtype=float)
    if root_scalars.shape[-1] != N_ROOT_SCALARS:
        raise ValueError(f"expected {N_ROOT_SCALARS} root scalars, got {root_scalars.shape[-1]}")
    z = np.asarray(z_height, dtype=float)
    shape = np.broadcast_shapes(root_scalars.shape[:-1], z.shape)
    features = np.concatenate(
        [np.broadcast_to(root_scalars, shape + root_scalars.shape[-1:]), np.broadcast_to(z, shape)[..., None]], axis=-1
    )
    lead = embed_params["W"].shape[:-2]
    if features.shape[: len(lead)] != lead:
        features = np.broadcast_to(features, lead + features.shape)
    return NodeState(np.asarray(root_geom, dtype=float), linear(embed_params, features))


def edge_features(Z_i, h_i, Z_j, h_j, p_i, p_j):
    """Edge inputs ``([p_j - p_i, Z_i, Z_j], [|p_j - p_i|, h_i, h_j])``."""
    rel = np.asarray(p_j, dtype=float) - np.asarray(p_i, dtype=float)
    Z_ij = np.concatenate([rel[..., :, None], Z_i, Z_j], axis=-1)
    dist = np.sqrt(np.sum(rel * rel, axis=-1, keepdims=True))
    h_ij = np.concatenate([dist, h_i, h_j], axis=-1)
    return Z_ij, h_ij


def _gather_nodes(x: np.ndarray, idx: np.ndarray, node_axis_from_end: int) -> np.ndarray:
    axis = x.ndim - node_axis_from_end
    if idx.ndim == 1:
        return np.take(x, idx, axis=axis)
    lead = x.shape[:axis]
    idx = np.broadcast_to(idx, lead + idx.shape[-1:])
    idx = idx.reshape(idx.shape + (1,) * (node_axis_from_end - 1))
    return np.take_along_axis(x, idx, axis=axis)


def mp_round(nodes: NodeState, roots, graph: EntityGraph, params: dict, g=GRAVITY, symmetry_mode="sub_g") -> NodeState:
    Z, h = nodes.Z, nodes.h
    n = Z.shape[-3]
    if n != graph.n_nodes:
        raise ValueError(f"{n} node states for a graph of {graph.n_nodes} nodes")
    roots = np.asarray(roots, dtype=float)
    lead = Z.shape[:-3]
    edge_i, edge_j = graph.edge_i, graph.edge_j
    if edge_i.ndim > 1:
        edge_i = np.broadcast_to(edge_i, lead + edge_i.shape[-1:])
        edge_j = np.broadcast_to(edge_j, lead + edge_j.shape[-1:])
    roots = np.broadcast_to(roots, lead + roots.shape[-2:])

    d = h.shape[-1]
    if edge_i.shape[-1]:
        Z_ij, h_ij = edge_features(
            _gather_nodes(Z, edge_i, 3),
            _gather_nodes(h, edge_i, 2),
            _gather_nodes(Z, edge_j, 3),
            _gather_nodes(h, edge_j, 2),
            _gather_nodes(roots, edge_i, 2),
            _gather_nodes(roots, edge_j, 2),
        )
        msg_Z, msg_h = subeq_apply(params["phi"], Z_ij, h_ij, N_CHANNELS, g, symmetry_mode)
        scatter = (edge_i[..., None, :] == np.arange(n)[:, None]).astype(float)  # (..., n, n_edges)
        n_edges = edge_i.shape[-1]
        agg_Z = (scatter @ msg_Z.reshape(msg_Z.shape[:-3] + (n_edges, -1))).reshape(Z.shape[:-2] + msg_Z.shape[-2:])
        agg_h = scatter @ msg_h
    else:
        agg_Z = np.zeros(Z.shape)
        agg_h = np.zeros(lead + (n, params["phi"]["sigma"]["1"]["W"].shape[-1] - params["phi"]["W"].shape[-1] * N_CHANNELS))
    dZ, dh = subeq_apply(
        params["psi"],
        np.concatenate([agg_Z, Z], axis=-1),
        np.concatenate([agg_h, h], axis=-1),
        N_CHANNELS,
        g,
        symmetry_mode,
    )
    if dh.shape[-1] != d:
        raise ValueError(f"update emits {dh.shape[-1]} scalars for nodes of width {d}")
    return NodeState(Z + dZ, h + dh)


def entity_mp(nodes: NodeState, roots, graph: EntityGraph, params: dict, g=GRAVITY, symmetry_mode="sub_g") -> NodeState:
    """Run every ``round{r}`` block of ``params`` in order."""
    r = 0
    while f"round{r}" in params:
        nodes = mp_round(nodes, roots, graph, params[f"round{r}"], g, symmetry_mode)
        r += 1
    return nodes
