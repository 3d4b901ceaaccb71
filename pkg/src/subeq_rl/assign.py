"""Task assignment: greedy bipartite matching and the entity-level graphs built from it.

Entity ids are integer indices. Team Reach orders entities agents-then-balls;
Team Sumo orders team 1, team 2, then the center ball.

Graphs are stored as index arrays so the same structure can carry a batch of
worlds (leading dimensions on every array). An edge ``(i, j)`` means node ``i``
receives a message from ``j``; the neighborhood of ``i`` is ``{j : (i, j) in E}``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidConfiguration(ValueError):
    pass


@dataclass(frozen=True)
class EntityGraph:
    n_nodes: int
    edge_i: np.ndarray  # (..., n_edges) receiving node
    edge_j: np.ndarray  # (..., n_edges) sending node
    labels: np.ndarray  # (..., n_nodes) assignment label C(i)
    nbr: np.ndarray  # (..., n_nodes, max_degree) ascending neighbor ids, -1 padded

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.labels.shape[:-1]

    @property
    def nodes(self) -> list[int]:
        return list(range(self.n_nodes))

    @property
    def edges(self) -> set[tuple[int, int]]:
        self._require_single()
        return {(int(i), int(j)) for i, j in zip(self.edge_i, self.edge_j)}

    @property
    def label_map(self) -> dict[int, int]:
        self._require_single()
        return {i: int(c) for i, c in enumerate(self.labels)}

    def index(self, idx) -> "EntityGraph":
        """Select one world out of a batched graph."""
        return EntityGraph(self.n_nodes, self.edge_i[idx], self.edge_j[idx], self.labels[idx], self.nbr[idx])

    def _require_single(self):
        if self.batch_shape:
            raise ValueError("operation needs an unbatched graph; use .index()")


def neighbors(graph: EntityGraph, i: int) -> list[int]:
    if not 0 <= i < graph.n_nodes:
        raise KeyError(f"unknown entity id {i}")
    row = graph.nbr[..., i, :]
    if row.ndim != 1:
        raise ValueError("neighbors() needs an unbatched graph")
    return [int(j) for j in row if j >= 0]


def distance_matrix(agent_roots: np.ndarray, object_roots: np.ndarray) -> np.ndarray:
    """``D[..., i, j] = |p_j - p_i|`` between agents (rows) and objects (columns)."""
    diff = object_roots[..., None, :, :] - agent_roots[..., :, None, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def greedy_match_indices(agent_roots: np.ndarray, object_roots: np.ndarray) -> np.ndarray:
    """Batched greedy matching. Returns, for each object, the index of its agent.

    Objects are visited in ascending order; each takes the nearest still-available
    agent, ties going to the lowest agent index.
    """
    agent_roots = np.asarray(agent_roots, dtype=float)
    object_roots = np.asarray(object_roots, dtype=float)
    n, m = agent_roots.shape[-2], object_roots.shape[-2]
    if m < 1:
        raise InvalidConfiguration("empty object set")
    if n < m:
        raise InvalidConfiguration(f"need at least as many agents as objects (N={n}, M={m})")
    dist = distance_matrix(agent_roots, object_roots)
    batch = dist.shape[:-2]
    taken = np.zeros(batch + (n,), dtype=bool)
    match = np.zeros(batch + (m,), dtype=np.int64)
    for j in range(m):
        d = np.where(taken, np.inf, dist[..., j])
        i = np.argmin(d, axis=-1)
        match[..., j] = i
        np.put_along_axis(taken, i[..., None], True, axis=-1)
    return match


def greedy_match(agent_roots, object_roots) -> list[tuple[int, int]]:
    """Match every object to a distinct agent; object ids are offset by N."""
    agent_roots = np.asarray(agent_roots, dtype=float).reshape(-1, 3)
    object_roots = np.asarray(object_roots, dtype=float).reshape(-1, 3)
    match = greedy_match_indices(agent_roots, object_roots)
    n = len(agent_roots)
    return [(int(i), n + j) for j, i in enumerate(match)]


def _sorted_nbr(rows: list[list[np.ndarray]], batch, width: int) -> np.ndarray:
    """Stack per-node candidate neighbor columns (-1 = absent), sort ascending with
    padding last."""
    out = np.full(batch + (len(rows), width), -1, dtype=np.int64)
    for node, cols in enumerate(rows):
        if not cols:
            continue
        stacked = np.stack([np.broadcast_to(c, batch) for c in cols], axis=-1)
        key = np.where(stacked < 0, np.iinfo(np.int64).max, stacked)
        stacked = np.take_along_axis(stacked, np.argsort(key, axis=-1, kind="stable"), axis=-1)
        out[..., node, : stacked.shape[-1]] = stacked
    return out


def build_reach_graph(roots, n: int, m: int) -> EntityGraph:
    """Agent ``i`` and its matched ball are linked in both directions; labels are
    ``C(agent) = agent`` and ``C(ball) = matched agent``."""
    roots = np.asarray(roots, dtype=float)
    if roots.shape[-2] != n + m:
        raise InvalidConfiguration("roots must hold N agents followed by M balls")
    match = greedy_match_indices(roots[..., :n, :], roots[..., n:, :])
    batch = match.shape[:-1]
    edge_i, edge_j = [], []
    for j in range(m):
        ball = np.full(batch, n + j, dtype=np.int64)
        edge_i += [match[..., j], ball]
        edge_j += [ball, match[..., j]]
    labels = np.broadcast_to(np.arange(n + m), batch + (n + m,)).copy()
    labels[..., n:] = match

    # degree is at most one: agent -> its ball (or nothing), ball -> its agent
    agent_ball = np.full(batch + (n,), -1, dtype=np.int64)
    np.put_along_axis(agent_ball, match, np.arange(n, n + m), axis=-1)
    nbr = np.concatenate([agent_ball, match], axis=-1)[..., None]
    return EntityGraph(n + m, np.stack(edge_i, -1), np.stack(edge_j, -1), labels, nbr)


def build_sumo_graph(team1_roots, team2_roots, ball_root) -> EntityGraph:
    """Opponents matched greedily (the smaller team, or team 2 on equal sizes, plays
    the object side); every agent is also linked with the center ball, whose id is
    ``N + M``. All labels point at the ball."""
    team1_roots = np.asarray(team1_roots, dtype=float)
    team2_roots = np.asarray(team2_roots, dtype=float)
    n, m = team1_roots.shape[-2], team2_roots.shape[-2]
    if n < 1 or m < 1:
        raise InvalidConfiguration("both sumo teams need at least one agent")
    ball = n + m
    if m <= n:
        match = greedy_match_indices(team1_roots, team2_roots)  # team2 j -> team1 agent
        pairs = [(match[..., j], np.int64(n + j)) for j in range(m)]
    else:
        match = greedy_match_indices(team2_roots, team1_roots) + n  # team1 j -> team2 agent
        pairs = [(match[..., j], np.int64(j)) for j in range(n)]
    batch = match.shape[:-1]
    edge_i, edge_j = [], []
    for a, b in pairs:
        a = np.broadcast_to(a, batch)
        b = np.broadcast_to(b, batch)
        edge_i += [a, b]
        edge_j += [b, a]
    for agent in range(n + m):
        edge_i += [np.full(batch, agent), np.full(batch, ball)]
        edge_j += [np.full(batch, ball), np.full(batch, agent)]

    opponent = np.full(batch + (n + m,), -1, dtype=np.int64)
    for a, b in pairs:
        a = np.broadcast_to(a, batch)
        b = np.broadcast_to(b, batch)
        np.put_along_axis(opponent, a[..., None], b[..., None], axis=-1)
        np.put_along_axis(opponent, b[..., None], a[..., None], axis=-1)
    ball_col = np.full(batch, ball, dtype=np.int64)
    rows = [[opponent[..., k], ball_col] for k in range(n + m)]
    rows.append([np.full(batch, k, dtype=np.int64) for k in range(n + m)])
    nbr = _sorted_nbr(rows, batch, max(2, n + m))
    labels = np.full(batch + (n + m + 1,), ball, dtype=np.int64)
    edge_i = np.stack(edge_i, -1).astype(np.int64)
    edge_j = np.stack(edge_j, -1).astype(np.int64)
    return EntityGraph(n + m + 1, edge_i, edge_j, labels, nbr)


def build_full_graph(n_nodes: int, batch: tuple[int, ...] = ()) -> EntityGraph:
    """Fully connected graph with self-labels (the no-assignment ablation)."""
    pairs = [(i, j) for i in range(n_nodes) for j in range(n_nodes) if i != j]
    edge_i = np.broadcast_to(np.array([p[0] for p in pairs], dtype=np.int64), batch + (len(pairs),))
    edge_j = np.broadcast_to(np.array([p[1] for p in pairs], dtype=np.int64), batch + (len(pairs),))
    labels = np.broadcast_to(np.arange(n_nodes), batch + (n_nodes,))
    nbr = np.array([[j for j in range(n_nodes) if j != i] for i in range(n_nodes)], dtype=np.int64)
    nbr = np.broadcast_to(nbr.reshape(n_nodes, max(n_nodes - 1, 0)), batch + nbr.shape)
    return EntityGraph(n_nodes, edge_i, edge_j, labels, nbr)
