"""Parameter checkpoints: a JSON manifest plus a sibling little-endian f64 blob.

``ckpt.json`` lists ``{name, shape, offset}`` per array (offset in bytes into
``ckpt.bin``, arrays stored row-major back to back) and free-form metadata.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .nn import flatten, unflatten

FORMAT = "subeq_rl-params"
VERSION = 1
DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    pass


def blob_path(manifest_path: str) -> str:
    root, _ = os.path.splitext(manifest_path)
    return root + ".bin"


def save_checkpoint(path: str, params: dict, meta: dict | None = None) -> None:
    """Write ``path`` (manifest) and its ``.bin`` sibling. Keys are stored in
    sorted order so identical parameters give identical bytes."""
    flat = flatten(params)
    entries, chunks, offset = [], [], 0
    for name in sorted(flat):
        arr = np.ascontiguousarray(flat[name], dtype=DTYPE)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    manifest = {"format": FORMAT, "version": VERSION, "dtype": "<f8", "arrays": entries, "meta": meta or {}}
    blob = blob_path(path)
    with open(blob + ".tmp", "wb") as fh:
        fh.write(b"".join(chunks))
    with open(path + ".tmp", "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    os.replace(blob + ".tmp", blob)
    os.replace(path + ".tmp", path)


def load_checkpoint(path: str) -> tuple[dict, dict]:
    """Returns ``(params, meta)``."""
    try:
        with open(path) as fh:
            manifest = json.load(fh)
        with open(blob_path(path), "rb") as fh:
            blob = fh.read()
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if manifest.get("format") != FORMAT or manifest.get("dtype") != "<f8":
        raise CheckpointError(f"{path} is not a {FORMAT} checkpoint")
    flat = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        if start + count * DTYPE.itemsize > len(blob):
            raise CheckpointError(f"array {entry['name']} runs past the end of the blob")
        flat[entry["name"]] = np.frombuffer(blob, dtype=DTYPE, count=count, offset=start).reshape(shape).copy()
    return unflatten(flat), manifest.get("meta", {})


def check_compatible(params: dict, reference: dict) -> None:
    """Raise :class:`CheckpointError` unless both trees have the same names and shapes."""
    got = {k: v.shape for k, v in flatten(params).items()}
    want = {k: v.shape for k, v in flatten(reference).items()}
    if got != want:
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        wrong = sorted(k for k in set(got) & set(want) if got[k] != want[k])
        raise CheckpointError(f"checkpoint does not fit this config (missing {missing}, extra {extra}, shape {wrong})")
