import struct

import numpy as np
import pytest

from vitray import vit
from vitray.checkpoint import (
    MAGIC,
    Checkpoint,
    diff_params,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from vitray.errors import CheckpointCorruptionError, CheckpointFormatError, ShapeError
from vitray.vit import PRESETS

TINY = PRESETS["tiny"]


@pytest.fixture
def ckpt():
    return Checkpoint(TINY, vit.init_params(TINY, 42), 0.875, 3)


def test_round_trip_bitwise(ckpt, tmp_path):
    path = tmp_path / "best.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert back.config == ckpt.config
    assert (back.best_accuracy, back.best_epoch) == (0.875, 3)
    assert diff_params(ckpt.params, back.params) == []
    assert list(back.params) == [name for name, _ in vit.param_shapes(TINY)]


def test_resave_is_byte_identical(ckpt, tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(ckpt, a)
    save_checkpoint(load_checkpoint(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_special_values_survive():
    params = vit.init_params(TINY, 0)
    params["head.bias"] = np.array([-0.0, 5e-324])
    back = from_bytes(to_bytes(Checkpoint(TINY, params)))
    assert back.params["head.bias"].tobytes() == params["head.bias"].tobytes()
    assert np.isnan(back.best_accuracy)


def test_header_layout(ckpt):
    data = to_bytes(ckpt)
    assert data[:4] == MAGIC == b"RVXR"
    version, header_len = struct.unpack("<II", data[4:12])
    assert version == 1
    assert data[12:13] == b"{" and data[12 + header_len - 1:12 + header_len] == b"}"


def test_bad_magic(ckpt):
    data = bytearray(to_bytes(ckpt))
    data[0] ^= 0xFF
    with pytest.raises(CheckpointFormatError, match="bad magic"):
        from_bytes(bytes(data))


def test_unsupported_version(ckpt):
    data = bytearray(to_bytes(ckpt))
    data[4:8] = struct.pack("<I", 99)
    with pytest.raises(CheckpointFormatError, match="version"):
        from_bytes(bytes(data))


@pytest.mark.parametrize("cut", [5, 40, 1000, -1])
def test_truncated(ckpt, cut):
    data = to_bytes(ckpt)
    with pytest.raises(CheckpointCorruptionError):
        from_bytes(data[:cut])


def test_trailing_bytes(ckpt):
    with pytest.raises(CheckpointCorruptionError, match="trailing"):
        from_bytes(to_bytes(ckpt) + b"\0")


def test_payload_inconsistent_with_embedded_config(ckpt):
    ckpt.params["pos_embed"] = np.zeros((5, 64))
    with pytest.raises(CheckpointCorruptionError, match="pos_embed"):
        from_bytes(to_bytes(ckpt))


def test_wrong_architecture_names_first_tensor(ckpt):
    with pytest.raises(ShapeError, match="patch_embed.weight"):
        from_bytes(to_bytes(ckpt), expected_config=PRESETS["paper"])


def test_failed_save_leaves_previous_file(ckpt, tmp_path):
    path = tmp_path / "best.ckpt"
    save_checkpoint(ckpt, path)
    before = path.read_bytes()
    broken = Checkpoint(TINY, {**ckpt.params, "head.bias": object()})
    with pytest.raises(Exception):
        save_checkpoint(broken, path)
    assert path.read_bytes() == before
    assert sorted(p.name for p in tmp_path.iterdir()) == ["best.ckpt"]


def test_diff_params_reports_changes(ckpt):
    other = {k: v.copy() for k, v in ckpt.params.items()}
    other["norm.beta"][3] += 1e-300
    del other["head.bias"]
    assert diff_params(ckpt.params, other) == ["head.bias", "norm.beta"]
