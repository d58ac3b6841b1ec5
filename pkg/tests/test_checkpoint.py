import numpy as np
import pytest

from daynight.constants import CHECKPOINT_MAGIC
from daynight.errors import CheckpointFormatError
from daynight.model.checkpoint import (
    U32,
    decode_tensors,
    encode_tensors,
    load_model,
    model_from_tensors,
    save_model,
)


def test_save_load_is_bit_exact(model, tmp_path):
    path = str(tmp_path / "nested" / "source.dyna")
    save_model(model, path)
    assert load_model(path).same_as(model)


def test_fsspec_memory_roundtrip(model):
    path = "memory://checkpoints/source.dyna"
    save_model(model, path)
    assert load_model(path).same_as(model)


def test_extras_are_split_from_the_model(model):
    tensors = {**model.tensors(), "bank.capacity": np.array([4.0])}
    arch, decoded = decode_tensors(encode_tensors(model.arch, tensors))
    restored, extras = model_from_tensors(arch, decoded)
    assert restored.same_as(model)
    assert list(extras) == ["bank.capacity"]
    assert extras["bank.capacity"].tolist() == [4.0]


def test_scalar_and_grid_tensors_survive():
    tensors = {"scalar": np.array(2.5), "grid": np.arange(6.0).reshape(2, 1, 3)}
    _, decoded = decode_tensors(encode_tensors("segnet-tiny-c1-o1", tensors))
    assert decoded["scalar"].shape == ()
    assert float(decoded["scalar"]) == 2.5
    assert np.array_equal(decoded["grid"], tensors["grid"])


def test_bad_magic(model):
    blob = encode_tensors(model.arch, model.tensors())
    with pytest.raises(CheckpointFormatError, match="magic"):
        decode_tensors(b"NOPE" + blob[4:])


def test_unsupported_version(model):
    blob = encode_tensors(model.arch, model.tensors())
    with pytest.raises(CheckpointFormatError, match="version"):
        decode_tensors(CHECKPOINT_MAGIC + U32.pack(99) + blob[8:])


@pytest.mark.parametrize("keep", [2, 10, -1, -100])
def test_truncated_checkpoint(model, keep):
    blob = encode_tensors(model.arch, model.tensors())
    with pytest.raises(CheckpointFormatError):
        decode_tensors(blob[:keep])


def test_unknown_architecture_or_no_parameters():
    blob = encode_tensors("mystery-net", {"param.w": np.ones(2)})
    with pytest.raises(CheckpointFormatError):
        model_from_tensors(*decode_tensors(blob))
    empty = encode_tensors("segnet-tiny-c1-o1", {"other": np.ones(1)})
    with pytest.raises(CheckpointFormatError):
        model_from_tensors(*decode_tensors(empty))


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointFormatError):
        load_model(str(tmp_path / "absent.dyna"))
