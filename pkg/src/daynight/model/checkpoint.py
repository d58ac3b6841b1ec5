"""
Binary checkpoint codec.

Layout, all integers little-endian u32::

    b"DYNA" | version | len(arch) | arch bytes |
    repeated: len(name) | name bytes | ndim | dims... | float64 LE payload

Model tensors are named ``param.*`` and ``running.*``; any other name is an
extra tensor (the deployment state stores its bank and counters this way).
Files are read completely before parsing, so a failed load leaves nothing
half-built.
"""

import struct
from typing import Dict, Tuple

import fsspec
import numpy as np

from daynight.constants import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from daynight.errors import CheckpointFormatError
from daynight.logging import configure_logging
from daynight.model.segnet import SegModelState, parse_architecture_tag

logger = configure_logging("daynight.model.checkpoint")

U32 = struct.Struct("<I")


def encode_tensors(arch: str, tensors: Dict[str, np.ndarray]) -> bytes:
    chunks = [CHECKPOINT_MAGIC, U32.pack(CHECKPOINT_VERSION)]
    arch_bytes = arch.encode("utf-8")
    chunks += [U32.pack(len(arch_bytes)), arch_bytes]
    for name, value in tensors.items():
        value = np.asarray(value, dtype="<f8")
        name_bytes = name.encode("utf-8")
        chunks += [U32.pack(len(name_bytes)), name_bytes, U32.pack(value.ndim)]
        chunks += [U32.pack(d) for d in value.shape]
        chunks.append(np.ascontiguousarray(value).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.blob):
            truncated_message = (
                f"Checkpoint truncated: needed {n} bytes at offset "
                f"{self.offset}, only {len(self.blob) - self.offset} remain."
            )
            raise CheckpointFormatError(truncated_message)
        chunk = self.blob[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return U32.unpack(self.take(4))[0]

    def done(self) -> bool:
        return self.offset == len(self.blob)


def decode_tensors(blob: bytes) -> Tuple[str, Dict[str, np.ndarray]]:
    reader = _Reader(blob)
    magic = reader.take(4)
    if magic != CHECKPOINT_MAGIC:
        bad_magic_message = (
            f"Not a checkpoint: expected magic {CHECKPOINT_MAGIC!r}, "
            f"found {magic!r}."
        )
        raise CheckpointFormatError(bad_magic_message)
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        version_message = (
            f"Checkpoint format version {version} is not supported; this "
            f"build reads version {CHECKPOINT_VERSION} only.\n"
            "Re-create the checkpoint with a matching daynight release."
        )
        raise CheckpointFormatError(version_message)
    try:
        arch = reader.take(reader.u32()).decode("utf-8")
        tensors: Dict[str, np.ndarray] = {}
        while not reader.done():
            name = reader.take(reader.u32()).decode("utf-8")
            dims = tuple(reader.u32() for _ in range(reader.u32()))
            count = int(np.prod(dims, dtype=np.int64))
            payload = reader.take(8 * count)
            tensors[name] = (
                np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(dims)
                if count
                else np.zeros(dims)
            )
    except UnicodeDecodeError as e:
        encoding_message = "Checkpoint contains an undecodable name."
        raise CheckpointFormatError(encoding_message) from e
    return arch, tensors


def model_from_tensors(
    arch: str, tensors: Dict[str, np.ndarray]
) -> Tuple[SegModelState, Dict[str, np.ndarray]]:
    """Split decoded tensors into a model and the remaining extras."""
    try:
        parse_architecture_tag(arch)
    except ValueError as e:
        raise CheckpointFormatError(str(e)) from e
    model = SegModelState(arch)
    extras = {}
    for name, value in tensors.items():
        if name.startswith("param."):
            model.params[name[len("param.") :]] = value
        elif name.startswith("running."):
            model.running[name[len("running.") :]] = value
        else:
            extras[name] = value
    if not model.params:
        empty_message = "Checkpoint holds no model parameters."
        raise CheckpointFormatError(empty_message)
    return model, extras


def save_model(model: SegModelState, path: str) -> None:
    with fsspec.open(path, "wb", auto_mkdir=True) as f:
        f.write(encode_tensors(model.arch, model.tensors()))
    logger.info(f"Wrote checkpoint {path} ({model.arch})")


def load_model(path: str) -> SegModelState:
    try:
        with fsspec.open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        missing_message = f"Checkpoint not found: {path}"
        raise CheckpointFormatError(missing_message) from e
    model, extras = model_from_tensors(*decode_tensors(blob))
    if extras:
        logger.debug(f"Ignoring {len(extras)} extra tensors in {path}")
    return model
