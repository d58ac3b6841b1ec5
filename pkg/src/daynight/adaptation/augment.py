"""
Weak (geometric) and strong (photometric) augmentation for night training.

Geometric transforms are exact index permutations on the trailing two axes
and are shared by every branch of an iteration; photometric transforms
leave the geometry alone and are applied to the student input only.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
import scipy.ndimage

from daynight.errors import ShapeError

BRIGHTNESS_RANGE = (-0.2, 0.2)
CONTRAST_RANGE = (0.8, 1.2)
GAMMA_RANGE = (0.7, 1.5)
NOISE_SIGMA_MAX = 0.05
BLUR_SIGMA_MAX = 1.0
PHOTOMETRIC_PROBABILITY = 0.5


class Geometric(Enum):
    identity = "IDENTITY"
    hflip = "HFLIP"
    vflip = "VFLIP"
    rot90 = "ROT90"
    rot180 = "ROT180"
    rot270 = "ROT270"


QUARTER_TURNS = {Geometric.rot90: 1, Geometric.rot180: 2, Geometric.rot270: 3}


@dataclass(frozen=True)
class AugmentSpec:
    """
    One sampled augmentation.

    `photometric` is an ordered tuple of ``(op, parameter)`` pairs with op in
    ``brightness``, ``contrast``, ``gamma``, ``noise``, ``blur``.
    `noise_seed` makes the additive noise reproducible.
    """

    geometric: Geometric = Geometric.identity
    photometric: Tuple[Tuple[str, float], ...] = ()
    noise_seed: int = 0


def sample_augment(rng: np.random.Generator, square: bool = True) -> AugmentSpec:
    """
    Draws a geometric transform uniformly and each photometric op with
    probability one half. Quarter turns are only drawn for square grids.
    """
    choices = list(Geometric)
    if not square:
        choices = [g for g in choices if g not in QUARTER_TURNS]
    geometric = choices[int(rng.integers(len(choices)))]

    draws = (
        ("brightness", lambda: rng.uniform(*BRIGHTNESS_RANGE)),
        ("contrast", lambda: rng.uniform(*CONTRAST_RANGE)),
        ("gamma", lambda: rng.uniform(*GAMMA_RANGE)),
        ("noise", lambda: rng.uniform(0.0, NOISE_SIGMA_MAX)),
        ("blur", lambda: rng.uniform(0.0, BLUR_SIGMA_MAX)),
    )
    photometric = []
    for op, draw in draws:
        if rng.random() < PHOTOMETRIC_PROBABILITY:
            photometric.append((op, float(draw())))
    noise_seed = int(rng.integers(2**31))
    return AugmentSpec(geometric, tuple(photometric), noise_seed)


def apply_geometric(x: np.ndarray, g: Geometric) -> np.ndarray:
    """
    Examples:
        >>> import numpy as np
        >>> x = np.arange(4.0).reshape(1, 2, 2)
        >>> apply_geometric(x, Geometric.hflip)[0].tolist()
        [[1.0, 0.0], [3.0, 2.0]]
    """
    x = np.asarray(x)
    if g is Geometric.identity:
        return x.copy()
    if g is Geometric.hflip:
        return np.flip(x, axis=-1).copy()
    if g is Geometric.vflip:
        return np.flip(x, axis=-2).copy()
    if x.shape[-1] != x.shape[-2]:
        rotation_shape_message = (
            f"Quarter turns need a square grid, got {x.shape[-2:]}."
        )
        raise ShapeError(rotation_shape_message)
    return np.rot90(x, k=QUARTER_TURNS[g], axes=(-2, -1)).copy()


def invert_geometric(x: np.ndarray, g: Geometric) -> np.ndarray:
    if g in QUARTER_TURNS:
        k = 4 - QUARTER_TURNS[g]
        return np.rot90(np.asarray(x), k=k, axes=(-2, -1)).copy()
    # flips are involutions
    return apply_geometric(x, g)


def apply_photometric(x: np.ndarray, spec: AugmentSpec) -> np.ndarray:
    """Applies the photometric ops of `spec` in order on a ``(C, H, W)`` grid."""
    out = np.array(x, dtype=np.float64)
    noise_rng = np.random.default_rng(spec.noise_seed)
    for op, value in spec.photometric:
        if op == "brightness":
            out = out + value
        elif op == "contrast":
            out = (out - 0.5) * value + 0.5
        elif op == "gamma":
            out = np.clip(out, 0.0, 1.0) ** value
        elif op == "noise":
            out = out + noise_rng.normal(0.0, value, size=out.shape)
        elif op == "blur":
            sigma = (0.0,) * (out.ndim - 2) + (value, value)
            out = scipy.ndimage.gaussian_filter(out, sigma=sigma, mode="reflect")
        else:
            unknown_op_message = f"Unknown photometric op {op!r}."
            raise ValueError(unknown_op_message)
    return out
