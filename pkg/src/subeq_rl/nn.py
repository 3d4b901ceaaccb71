"""Dense layers over nested parameter dicts.

A parameter tree is a nested ``dict`` whose leaves are float64 arrays. Leaves may
carry leading "population" dimensions: a weight of shape ``(P, in, out)`` is
applied to inputs of shape ``(P, ..., in)``, which is how a whole ES population is
evaluated in one pass.
"""

from __future__ import annotations

import math

import numpy as np


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> dict:
    bound = math.sqrt(1.0 / fan_in)
    return {
        "W": rng.uniform(-bound, bound, size=(fan_in, fan_out)),
        "b": rng.uniform(-bound, bound, size=(fan_out,)),
    }


def init_mlp(rng: np.random.Generator, sizes: list[int]) -> dict:
    return {str(k): init_linear(rng, a, b) for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))}


def pmatmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w`` where ``w`` may carry leading population dims shared with ``x``."""
    p = w.ndim - 2
    if p == 0:
        return x @ w
    lead = w.shape[:p]
    if x.shape[:p] != lead:
        raise ValueError(f"input batch {x.shape[:p]} does not match parameter batch {lead}")
    out = x.reshape(lead + (-1, x.shape[-1])) @ w
    return out.reshape(x.shape[:-1] + (w.shape[-1],))


def padd(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    p = b.ndim - 1
    if p == 0:
        return x + b
    return x + b.reshape(b.shape[:p] + (1,) * (x.ndim - 1 - p) + b.shape[p:])


def linear(layer: dict, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != layer["W"].shape[-2]:
        raise ValueError(f"linear layer expects width {layer['W'].shape[-2]}, got {x.shape[-1]}")
    return padd(pmatmul(x, layer["W"]), layer["b"])


def mlp(params: dict, x: np.ndarray) -> np.ndarray:
    """ReLU between layers, none on the output."""
    n = len(params)
    for k in range(n):
        x = linear(params[str(k)], x)
        if k < n - 1:
            x = np.maximum(x, 0.0)
    return x


def flatten(tree: dict, prefix: str = "") -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def unflatten(flat: dict[str, np.ndarray]) -> dict:
    tree: dict = {}
    for name, value in flat.items():
        node = tree
        *path, leaf = name.split(".")
        for key in path:
            node = node.setdefault(key, {})
        node[leaf] = value
    return tree


def tree_map(fn, tree: dict) -> dict:
    return {k: tree_map(fn, v) if isinstance(v, dict) else fn(v) for k, v in tree.items()}


def param_count(tree: dict) -> int:
    return sum(int(v.size) for v in flatten(tree).values())


def to_vector(tree: dict) -> np.ndarray:
    return np.concatenate([v.ravel() for v in flatten(tree).values()])


def from_vector(vec: np.ndarray, like: dict) -> dict:
    """Inverse of :func:`to_vector`; ``vec`` may carry leading population dims."""
    flat = flatten(like)
    lead = vec.shape[:-1]
    out, pos = {}, 0
    for name, ref in flat.items():
        size = ref.size
        out[name] = np.ascontiguousarray(vec[..., pos : pos + size]).reshape(lead + ref.shape)
        pos += size
    if pos != vec.shape[-1]:
        raise ValueError(f"vector length {vec.shape[-1]} does not match parameter count {pos}")
    return unflatten(out)
