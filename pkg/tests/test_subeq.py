import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subeq_rl.assign import build_full_graph, build_reach_graph
from subeq_rl.geom import GRAVITY, random_rotation, reflection_fixing_z, rotation_about_z
from subeq_rl.harness import _random_graph
from subeq_rl.nn import tree_map
from subeq_rl.subeq import (
    NetworkDims,
    NodeState,
    compile_layer,
    compile_mp_params,
    edge_features,
    embed_entity,
    entity_mp,
    init_mp_params,
    init_subeq_layer,
    mp_round,
    subeq_apply,
)

SMALL = NetworkDims(hidden_dim=8, vector_dim=4, propagation_steps=2, mlp_hidden=16)


def pinned_layer():
    """m_in = 1, W = [1, 0]^T, sigma constant with W_g = [2] and h' = [0]."""
    return {
        "W": np.array([[1.0], [0.0]]),
        "sigma": {
            "0": {"W": np.zeros((2, 1)), "b": np.zeros(1)},
            "1": {"W": np.zeros((1, 2)), "b": np.array([2.0, 0.0])},
        },
    }


def test_pinned_layer_doubles_input():
    z, h = subeq_apply(pinned_layer(), np.array([[1.0], [0.0], [0.0]]), np.zeros(1), 1)
    np.testing.assert_array_equal(z, [[2.0], [0.0], [0.0]])
    np.testing.assert_array_equal(h, [0.0])


def test_pinned_layer_rotated_input():
    r = rotation_about_z(0.9)
    z, h = subeq_apply(pinned_layer(), r @ np.array([[1.0], [0.0], [0.0]]), np.zeros(1), 1)
    np.testing.assert_allclose(z[:, 0], 2 * r @ [1, 0, 0], atol=1e-15)
    np.testing.assert_array_equal(h, [0.0])


def test_zero_channels_still_see_gravity():
    layer = init_subeq_layer(np.random.default_rng(0), 2, 2, 3, 3, SMALL)
    h = np.array([0.1, -0.2, 0.3])
    z, _ = subeq_apply(layer, np.zeros((3, 2)), h, 2)
    # every output channel is a multiple of g
    assert np.allclose(z[:2], 0.0)
    assert np.any(z[2] != 0.0)


def test_so3_mode_drops_gravity_row():
    layer = init_subeq_layer(np.random.default_rng(0), 2, 1, 0, 1, SMALL, "so3")
    assert layer["W"].shape[0] == 2
    z, _ = subeq_apply(layer, np.zeros((3, 2)), np.zeros(0), 1, symmetry_mode="so3")
    assert np.array_equal(z, np.zeros((3, 1)))


def test_shape_and_mode_errors():
    layer = init_subeq_layer(np.random.default_rng(0), 2, 1, 3, 1, SMALL)
    with pytest.raises(ValueError):
        subeq_apply(layer, np.zeros((3, 3)), np.zeros(3), 1)
    with pytest.raises(ValueError):
        subeq_apply(layer, np.zeros((3, 2)), np.zeros(3), 1, symmetry_mode="o3")


@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi), st.booleans())
@settings(max_examples=60, deadline=None)
def test_layer_subequivariance(seed, angle, reflect):
    rng = np.random.default_rng(seed)
    layer = init_subeq_layer(rng, 3, 2, 5, 4, SMALL)
    z, h = rng.standard_normal((3, 3)), rng.standard_normal(5)
    o = reflection_fixing_z(angle) if reflect else rotation_about_z(angle)
    z0, h0 = subeq_apply(layer, z, h, 2)
    z1, h1 = subeq_apply(layer, o @ z, h, 2)
    np.testing.assert_allclose(z1, o @ z0, atol=1e-9)
    np.testing.assert_allclose(h1, h0, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_layer_so3_equivariance(seed):
    rng = np.random.default_rng(seed)
    layer = init_subeq_layer(rng, 3, 2, 5, 4, SMALL, "so3")
    z, h = rng.standard_normal((3, 3)), rng.standard_normal(5)
    o = random_rotation(rng)
    z0, h0 = subeq_apply(layer, z, h, 2, symmetry_mode="so3")
    z1, h1 = subeq_apply(layer, o @ z, h, 2, symmetry_mode="so3")
    np.testing.assert_allclose(z1, o @ z0, atol=1e-9)
    np.testing.assert_allclose(h1, h0, atol=1e-9)


def test_sub_g_is_not_so3_equivariant():
    rng = np.random.default_rng(7)
    layer = init_subeq_layer(rng, 3, 2, 5, 4, SMALL)
    z, h = rng.standard_normal((3, 3)), rng.standard_normal(5)
    o = random_rotation(rng)
    _, h0 = subeq_apply(layer, z, h, 2)
    _, h1 = subeq_apply(layer, o @ z, h, 2)
    assert np.abs(h1 - h0).max() > 1e-6


@given(st.integers(0, 2**32 - 1), st.sampled_from(["sub_g", "so3"]))
@settings(max_examples=30, deadline=None)
def test_compiled_layer_matches_literal(seed, mode):
    rng = np.random.default_rng(seed)
    layer = init_subeq_layer(rng, 4, 3, 6, 5, NetworkDims(vector_dim=8, hidden_dim=16), mode)
    z, h = rng.standard_normal((7, 3, 4)), rng.standard_normal((7, 6))
    a = subeq_apply(layer, z, h, 3, symmetry_mode=mode)
    b = subeq_apply(compile_layer(layer), z, h, 3, symmetry_mode=mode)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)


def test_embed_examples():
    params = {"W": np.random.default_rng(0).standard_normal((14, 8)), "b": np.zeros(8)}
    node = embed_entity(np.ones((3, 3)), np.zeros(13), 0.0, params)
    assert np.array_equal(node.h, np.zeros(8))
    z = np.random.default_rng(1).standard_normal((3, 3))
    s = np.eye(13)[9]
    a = embed_entity(z, s, 0.5, params)
    b = embed_entity(rotation_about_z(1.0) @ z, s, 0.5, params)
    assert np.array_equal(a.h, b.h)
    ball = embed_entity(z, np.eye(13)[11], 0.5, params)
    assert not np.allclose(ball.h, a.h)
    with pytest.raises(ValueError):
        embed_entity(z, np.zeros(12), 0.0, params)


def test_edge_feature_examples():
    zi, zj = np.ones((3, 3)), 2 * np.ones((3, 3))
    hi, hj = np.array([1.0]), np.array([2.0])
    Z, h = edge_features(zi, hi, zj, hj, np.zeros(3), np.zeros(3))
    assert Z.shape == (3, 7) and np.array_equal(Z[:, 0], np.zeros(3)) and h[0] == 0.0
    _, h = edge_features(zi, hi, zj, hj, np.zeros(3), np.array([3.0, 4.0, 0.0]))
    assert h[0] == 5.0
    p_i, p_j = np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 2.0])
    Z_ij, h_ij = edge_features(zi, hi, zj, hj, p_i, p_j)
    Z_ji, h_ji = edge_features(zj, hj, zi, hi, p_j, p_i)
    assert np.array_equal(Z_ji[:, 0], -Z_ij[:, 0])
    assert np.array_equal(h_ji, [h_ij[0], 2.0, 1.0])


def random_nodes(rng, n, d=SMALL.hidden_dim):
    return NodeState(rng.standard_normal((n, 3, 3)), rng.standard_normal((n, d)))


def test_residual_identity_for_isolated_node():
    rng = np.random.default_rng(0)
    params = init_mp_params(rng, SMALL)["round0"]
    params["psi"] = tree_map(np.zeros_like, params["psi"])
    graph = build_reach_graph([[0, 0, 0], [50, 0, 0], [1, 0, 0]], 2, 1)
    nodes = random_nodes(rng, 3)
    out = mp_round(nodes, rng.standard_normal((3, 3)), graph, params)
    np.testing.assert_array_equal(out.Z[1], nodes.Z[1])
    np.testing.assert_array_equal(out.h[1], nodes.h[1])


def test_one_vs_one_each_node_gets_one_message():
    rng = np.random.default_rng(1)
    graph = build_reach_graph([[0, 0, 0], [2, 0, 0]], 1, 1)
    assert sorted(graph.edge_i.tolist()) == [0, 1]
    params = init_mp_params(rng, SMALL)["round0"]
    out = mp_round(random_nodes(rng, 2), rng.standard_normal((2, 3)), graph, params)
    assert out.Z.shape == (2, 3, 3) and out.h.shape == (2, SMALL.hidden_dim)


@given(st.integers(0, 2**32 - 1), st.floats(0, 2 * math.pi), st.booleans())
@settings(max_examples=30, deadline=None)
def test_entity_mp_equivariance(seed, angle, reflect):
    rng = np.random.default_rng(seed)
    params = init_mp_params(rng, SMALL)
    n = int(rng.integers(2, 6))
    graph = _random_graph(rng, n)
    nodes = random_nodes(rng, n)
    roots = rng.standard_normal((n, 3))
    o = reflection_fixing_z(angle) if reflect else rotation_about_z(angle)
    a = entity_mp(nodes, roots, graph, params)
    b = entity_mp(NodeState(o @ nodes.Z, nodes.h), roots @ o.T, graph, params)
    np.testing.assert_allclose(b.Z, o @ a.Z, atol=1e-9)
    np.testing.assert_allclose(b.h, a.h, atol=1e-9)


def test_zero_rounds_is_identity():
    rng = np.random.default_rng(2)
    params = init_mp_params(rng, NetworkDims(hidden_dim=8, vector_dim=4, propagation_steps=0))
    nodes = random_nodes(rng, 3)
    out = entity_mp(nodes, np.zeros((3, 3)), build_full_graph(3), params)
    assert out.Z is nodes.Z and out.h is nodes.h


def test_graph_without_edges_uses_self_update_only():
    rng = np.random.default_rng(3)
    params = init_mp_params(rng, SMALL)
    empty = build_full_graph(1)
    nodes = random_nodes(rng, 1)
    out = entity_mp(nodes, rng.standard_normal((1, 3)), empty, params)
    z, h = nodes.Z, nodes.h
    for r in range(2):
        psi = params[f"round{r}"]["psi"]
        dz, dh = subeq_apply(psi, np.concatenate([np.zeros_like(z), z], -1), np.concatenate([np.zeros_like(h), h], -1), 3)
        z, h = z + dz, h + dh
    np.testing.assert_allclose(out.Z, z, atol=1e-14)
    np.testing.assert_allclose(out.h, h, atol=1e-14)


def test_neighbor_order_does_not_matter():
    rng = np.random.default_rng(4)
    params = init_mp_params(rng, SMALL)
    graph = build_full_graph(4)
    perm = rng.permutation(len(graph.edge_i))
    shuffled = type(graph)(4, graph.edge_i[perm], graph.edge_j[perm], graph.labels, graph.nbr)
    nodes, roots = random_nodes(rng, 4), rng.standard_normal((4, 3))
    a = entity_mp(nodes, roots, graph, params)
    b = entity_mp(nodes, roots, shuffled, params)
    np.testing.assert_allclose(a.Z, b.Z, atol=1e-13)
    np.testing.assert_allclose(a.h, b.h, atol=1e-13)


def test_zero_sigma_output_is_identity():
    rng = np.random.default_rng(5)
    params = init_mp_params(rng, SMALL)
    for r in range(2):
        for name in ("phi", "psi"):
            last = params[f"round{r}"][name]["sigma"]["1"]
            last["W"][:] = 0.0
            last["b"][:] = 0.0
    nodes, roots = random_nodes(rng, 4), rng.standard_normal((4, 3))
    out = entity_mp(nodes, roots, build_full_graph(4), params)
    np.testing.assert_array_equal(out.Z, nodes.Z)
    np.testing.assert_array_equal(out.h, nodes.h)


def test_compiled_mp_matches_literal():
    rng = np.random.default_rng(6)
    params = init_mp_params(rng, SMALL)
    graph = build_full_graph(3)
    nodes, roots = random_nodes(rng, 3), rng.standard_normal((3, 3))
    a = entity_mp(nodes, roots, graph, params)
    b = entity_mp(nodes, roots, graph, compile_mp_params(params))
    np.testing.assert_allclose(a.Z, b.Z, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.h, b.h, rtol=1e-10, atol=1e-12)


def test_default_gravity_points_down():
    assert np.array_equal(GRAVITY, [0.0, 0.0, -1.0])
