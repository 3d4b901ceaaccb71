import json

import numpy as np
import pytest

from subeq_rl.checkpoint import CheckpointError, blob_path, check_compatible, load_checkpoint, save_checkpoint
from subeq_rl.env import make_env
from subeq_rl.nn import flatten
from subeq_rl.policy import init_params


@pytest.fixture
def params():
    return init_params(make_env("team_reach:1_ant"))


def test_roundtrip(tmp_path, params):
    path = str(tmp_path / "c.json")
    save_checkpoint(path, params, {"generation": 3})
    loaded, meta = load_checkpoint(path)
    assert meta == {"generation": 3}
    a, b = flatten(params), flatten(loaded)
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_manifest_layout(tmp_path, params):
    path = str(tmp_path / "c.json")
    save_checkpoint(path, params)
    manifest = json.loads(open(path).read())
    entries = manifest["arrays"]
    assert [e["name"] for e in entries] == sorted(e["name"] for e in entries)
    blob = open(blob_path(path), "rb").read()
    last = entries[-1]
    assert last["offset"] + 8 * int(np.prod(last["shape"])) == len(blob)
    # an independent reader: raw little-endian doubles at the stated offset
    first = entries[0]
    raw = np.frombuffer(blob, dtype="<f8", count=int(np.prod(first["shape"])), offset=first["offset"])
    np.testing.assert_array_equal(raw.reshape(first["shape"]), flatten(params)[first["name"]])


def test_identical_params_identical_bytes(tmp_path, params):
    a, b = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    save_checkpoint(a, params, {"x": 1})
    save_checkpoint(b, init_params(make_env("team_reach:1_ant")), {"x": 1})
    assert open(a, "rb").read() == open(b, "rb").read()
    assert open(blob_path(a), "rb").read() == open(blob_path(b), "rb").read()


def test_incompatible(params):
    other = init_params(make_env("team_reach:2_ants"))
    with pytest.raises(CheckpointError):
        check_compatible(other, params)
    check_compatible(params, params)


def test_bad_files(tmp_path, params):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "missing.json"))
    path = tmp_path / "c.json"
    save_checkpoint(str(path), params)
    with open(blob_path(str(path)), "r+b") as fh:
        fh.truncate(16)
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(path))
