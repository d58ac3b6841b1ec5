"""
Dataset dump format: one file per sample in a directory.

Each file is ``b"DSMP" | H u32 | W u32`` followed by the image as H*W
little-endian float64 values and the mask as H*W bytes.
"""

import posixpath
import struct
from typing import List, Sequence

import fsspec
import numpy as np

from daynight.constants import SAMPLE_MAGIC
from daynight.data.synth import LabeledSample
from daynight.errors import DataFormatError, ShapeError
from daynight.logging import configure_logging

logger = configure_logging("daynight.data.dump")

HEADER = struct.Struct("<4sII")
SUFFIX = ".dsmp"


def encode_sample(sample: LabeledSample) -> bytes:
    image = np.asarray(sample.image, dtype="<f8")
    mask = np.asarray(sample.mask)
    if image.ndim == 3:
        if image.shape[0] != 1:
            channel_message = (
                f"The sample format holds one channel, got {image.shape[0]}."
            )
            raise ShapeError(channel_message)
        image, mask = image[0], mask.reshape(image.shape[1:])
    if image.ndim != 2 or mask.shape != image.shape:
        sample_shape_message = (
            f"Cannot dump image {image.shape} with mask {mask.shape}."
        )
        raise ShapeError(sample_shape_message)
    h, w = image.shape
    return b"".join(
        [
            HEADER.pack(SAMPLE_MAGIC, h, w),
            np.ascontiguousarray(image).tobytes(),
            np.ascontiguousarray(mask > 0.5, dtype=np.uint8).tobytes(),
        ]
    )


def decode_sample(blob: bytes, index: int = -1) -> LabeledSample:
    if len(blob) < HEADER.size:
        short_message = f"Sample file of {len(blob)} bytes has no header."
        raise DataFormatError(short_message)
    magic, h, w = HEADER.unpack_from(blob)
    if magic != SAMPLE_MAGIC:
        sample_magic_message = (
            f"Not a sample file: expected magic {SAMPLE_MAGIC!r}, "
            f"found {magic!r}."
        )
        raise DataFormatError(sample_magic_message)
    expected = HEADER.size + 9 * h * w
    if len(blob) != expected:
        size_message = (
            f"Sample file of {len(blob)} bytes, expected {expected} for a "
            f"{h}x{w} sample."
        )
        raise DataFormatError(size_message)
    start = HEADER.size
    image = np.frombuffer(blob, dtype="<f8", count=h * w, offset=start)
    mask = np.frombuffer(blob, dtype=np.uint8, count=h * w, offset=start + 8 * h * w)
    return LabeledSample(
        image.astype(np.float64).reshape(1, h, w),
        mask.astype(np.float64).reshape(1, h, w),
        index,
    )


def sample_name(index: int) -> str:
    return f"sample_{index:05d}{SUFFIX}"


def dump_samples(samples: Sequence[LabeledSample], directory: str) -> List[str]:
    """Writes every sample under `directory`; returns the written paths."""
    fs, root = fsspec.core.url_to_fs(directory)
    fs.makedirs(root, exist_ok=True)
    paths = []
    for position, sample in enumerate(samples):
        index = sample.index if sample.index >= 0 else position
        path = posixpath.join(root, sample_name(index))
        with fs.open(path, "wb") as f:
            f.write(encode_sample(sample))
        paths.append(path)
    logger.info(f"Dumped {len(paths)} samples to {directory}")
    return paths


def load_samples(directory: str) -> List[LabeledSample]:
    """Reads every sample file in `directory`, sorted by file name."""
    fs, root = fsspec.core.url_to_fs(directory)
    if not fs.isdir(root):
        missing_dir_message = f"Sample directory not found: {directory}"
        raise DataFormatError(missing_dir_message)
    names = sorted(p for p in fs.ls(root, detail=False) if p.endswith(SUFFIX))
    samples = []
    for path in names:
        stem = posixpath.basename(path)[len("sample_") : -len(SUFFIX)]
        with fs.open(path, "rb") as f:
            samples.append(decode_sample(f.read(), int(stem)))
    return samples
