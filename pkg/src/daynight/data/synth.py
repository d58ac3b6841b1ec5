"""
Deterministic synthetic segmentation benchmark.

Every sample is a single-channel image of one to three soft-edged ellipses
on a smooth background texture. The scene and its mask depend only on
``(seed, index)``; a `DomainSpec` then shifts the intensities, so masks are
identical across domains for the same seed and index.
"""

from dataclasses import dataclass, replace
from typing import Dict, List, NamedTuple

import numpy as np
import scipy.ndimage
import scipy.special

from daynight.errors import DomainError, EmptyDataError
from daynight.logging import configure_logging
from daynight.numerics.fourier import center_window, fft2_centered, ifft2_centered

logger = configure_logging("daynight.data.synth")

DEFAULT_SIZE = 64
SPECTRAL_BLOCK = 5
FOREGROUND_FRACTION = (0.05, 0.40)
MAX_SCENE_ATTEMPTS = 200

BACKGROUND_LEVEL = 0.15
FOREGROUND_LEVEL = 0.45
TEXTURE_STD = 0.03
EDGE_SHARPNESS = 8.0


@dataclass(frozen=True)
class DomainSpec:
    """
    Intensity shift applied on top of the source renderer.

    The chain is contrast (about 0.5), brightness, gamma, a gain on the
    centered 5x5 spectrum block, additive Gaussian noise, clamp to [0, 1].
    """

    gamma: float = 1.0
    brightness: float = 0.0
    contrast: float = 1.0
    lowfreq_gain: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def is_identity(self) -> bool:
        return replace(self, seed=0) == DomainSpec()


TARGET_SPECS: Dict[str, DomainSpec] = {
    "A": DomainSpec(gamma=1.4, brightness=0.1, lowfreq_gain=1.5),
    "B": DomainSpec(gamma=0.6, contrast=1.3, lowfreq_gain=2.0, noise_sigma=0.02),
}


@dataclass
class LabeledSample:
    image: np.ndarray
    mask: np.ndarray
    index: int = -1

    @property
    def foreground_fraction(self) -> float:
        return float(self.mask.mean())


class BenchmarkSuite(NamedTuple):
    source_train: List[LabeledSample]
    source_val: List[LabeledSample]
    target_a: List[LabeledSample]
    target_b: List[LabeledSample]

    def target(self, name: str) -> List[LabeledSample]:
        streams = {"A": self.target_a, "B": self.target_b}
        if name not in streams:
            unknown_target_message = (
                f"Unknown target stream {name!r}; expected one of "
                f"{sorted(streams)}."
            )
            raise DomainError(unknown_target_message)
        return streams[name]


def _ellipse_field(rng: np.random.Generator, size: int) -> np.ndarray:
    """Squared normalized radius of one random ellipse at every pixel."""
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = rng.uniform(0.2, 0.8, size=2) * size
    ay, ax = rng.uniform(0.08, 0.25, size=2) * size
    theta = rng.uniform(0.0, np.pi)
    dy, dx = rows - cy, cols - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    return (u / ax) ** 2 + (v / ay) ** 2


def render(seed: int, index: int, size: int = DEFAULT_SIZE):
    """
    Source-domain image and binary mask of sample `index`.

    Scenes are redrawn until the foreground fraction falls inside
    ``[0.05, 0.40]``.

    Returns:
        ``(image, mask)``, both ``(1, size, size)``.
    """
    rng = np.random.default_rng([seed, index])
    for _ in range(MAX_SCENE_ATTEMPTS):
        radii = [
            _ellipse_field(rng, size) for _ in range(int(rng.integers(1, 4)))
        ]
        inside = np.min(radii, axis=0)
        mask = (inside <= 1.0).astype(np.float64)
        lo, hi = FOREGROUND_FRACTION
        if lo <= mask.mean() <= hi:
            break
    else:
        scene_message = (
            f"No scene with a foreground fraction in {FOREGROUND_FRACTION} "
            f"after {MAX_SCENE_ATTEMPTS} draws for seed {seed}, index {index}."
        )
        raise DomainError(scene_message)

    soft = scipy.special.expit((1.0 - inside) * EDGE_SHARPNESS)
    texture = scipy.ndimage.gaussian_filter(
        rng.normal(size=(size, size)), sigma=3.0, mode="wrap"
    )
    texture = texture / (texture.std() + 1e-12) * TEXTURE_STD
    grain = rng.normal(0.0, TEXTURE_STD / 2, size=(size, size))
    image = (
        BACKGROUND_LEVEL * (1.0 - soft)
        + FOREGROUND_LEVEL * soft
        + texture
        + grain * soft
    )
    image = np.clip(image, 0.0, 1.0)
    return image[None], mask[None]


def apply_shift(
    image: np.ndarray, spec: DomainSpec, index: int = 0
) -> np.ndarray:
    """Applies the shift chain of `spec`; identity steps are skipped."""
    out = np.array(image, dtype=np.float64)
    if spec.contrast != 1.0:
        out = (out - 0.5) * spec.contrast + 0.5
    if spec.brightness != 0.0:
        out = out + spec.brightness
    if spec.gamma != 1.0:
        out = np.clip(out, 0.0, 1.0) ** spec.gamma
    if spec.lowfreq_gain != 1.0:
        spectrum = fft2_centered(out)
        h, w = out.shape[-2:]
        block = min(SPECTRAL_BLOCK, h, w)
        spectrum[..., center_window(h, block), center_window(w, block)] *= (
            spec.lowfreq_gain
        )
        out = ifft2_centered(spectrum)
    if spec.noise_sigma > 0.0:
        noise_rng = np.random.default_rng([spec.seed, index, 1])
        out = out + noise_rng.normal(0.0, spec.noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def gen_domain(
    n: int,
    spec: DomainSpec,
    size: int = DEFAULT_SIZE,
    start: int = 0,
) -> List[LabeledSample]:
    """
    Renders samples ``start .. start + n - 1`` and shifts them by `spec`.

    Examples:
        >>> samples = gen_domain(2, DomainSpec(seed=3), size=16)
        >>> len(samples), samples[0].image.shape
        (2, (1, 16, 16))
    """
    if n < 1:
        empty_domain_message = f"gen_domain needs n >= 1, got {n}."
        raise EmptyDataError(empty_domain_message)
    samples = []
    for index in range(start, start + n):
        image, mask = render(spec.seed, index, size)
        samples.append(
            LabeledSample(apply_shift(image, spec, index), mask, index)
        )
    return samples


def stream_order(seed: int, name: str, n: int) -> np.ndarray:
    return np.random.default_rng([seed, ord(name)]).permutation(n)


def target_stream(
    seed: int,
    name: str,
    n_target: int = 100,
    size: int = DEFAULT_SIZE,
    start: int = 250,
) -> List[LabeledSample]:
    """One shifted target stream in its seeded deployment order."""
    if name not in TARGET_SPECS:
        unknown_target_message = (
            f"Unknown target stream {name!r}; expected one of "
            f"{sorted(TARGET_SPECS)}."
        )
        raise DomainError(unknown_target_message)
    spec = replace(TARGET_SPECS[name], seed=seed)
    samples = gen_domain(n_target, spec, size, start)
    return [samples[i] for i in stream_order(seed, name, n_target)]


def benchmark_suite(
    seed: int = 0,
    n_source_train: int = 200,
    n_source_val: int = 50,
    n_target: int = 100,
    size: int = 64,
) -> BenchmarkSuite:
    """
    Source train/val sets and the two shifted target streams.

    Both target streams render the same scenes (indices following the
    source samples) under different shifts, each in its own seeded
    permutation.
    """
    source = DomainSpec(seed=seed)
    train = gen_domain(n_source_train, source, size)
    val = gen_domain(n_source_val, source, size, start=n_source_train)
    start = n_source_train + n_source_val
    streams = {
        name: target_stream(seed, name, n_target, size, start)
        for name in TARGET_SPECS
    }
    logger.debug(
        f"benchmark seed {seed}: {len(train)} train, {len(val)} val, "
        f"{n_target} per target stream"
    )
    return BenchmarkSuite(train, val, streams["A"], streams["B"])
