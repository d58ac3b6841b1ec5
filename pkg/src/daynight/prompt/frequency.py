"""
Amplitude/phase decomposition, low-frequency keys and the low-frequency
prompt.

A prompt is a small ``(C, h_p, w_p)`` multiplier placed at the center of the
centered amplitude spectrum; everywhere else the multiplier is one. Applying
it rescales the low-frequency amplitudes and keeps the phase.
"""

import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.fft

from daynight.errors import DomainError, ShapeError
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.fourier import (
    AXES,
    center_window,
    check_finite,
    fft2_centered,
    ifft2_centered,
    mirror_centered,
)


def prompt_extent(size: int, beta: float) -> int:
    """
    ``max(1, round(beta * size))`` with halves rounded up.

    Examples:
        >>> prompt_extent(512, 0.01)
        5
        >>> prompt_extent(64, 0.05)
        3
        >>> prompt_extent(64, 0.001)
        1
    """
    if not 0.0 < beta <= 1.0:
        beta_message = f"Prompt ratio beta must lie in (0, 1], got {beta}."
        raise DomainError(beta_message)
    return max(1, int(math.floor(beta * size + 0.5)))


def prompt_shape(
    channels: int, height: int, width: int, beta: float
) -> Tuple[int, int, int]:
    return (
        channels,
        prompt_extent(height, beta),
        prompt_extent(width, beta),
    )


@dataclass
class LowFreqPrompt:
    values: np.ndarray
    beta: float

    @classmethod
    def identity(cls, shape: Tuple[int, int, int], beta: float):
        return cls(np.ones(shape), beta)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    def frozen(self) -> "LowFreqPrompt":
        values = np.array(self.values, dtype=np.float64)
        values.flags.writeable = False
        return LowFreqPrompt(values, self.beta)


@dataclass
class SpectralKey:
    values: np.ndarray
    image_id: int = -1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def spectral_decompose(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Centered amplitude and phase of a real grid.

    Examples:
        >>> import numpy as np
        >>> amplitude, phase = spectral_decompose(np.ones((1, 8, 8)))
        >>> float(amplitude[0, 4, 4]), float(phase[0, 4, 4])
        (64.0, 0.0)
    """
    spectrum = fft2_centered(x)
    return np.abs(spectrum), np.angle(spectrum)


def recombine(amplitude: np.ndarray, phase: np.ndarray) -> np.ndarray:
    return ifft2_centered(amplitude * np.exp(1j * phase))


def low_freq_key(
    amplitude: np.ndarray, beta: float, image_id: int = -1
) -> SpectralKey:
    """Center crop of the amplitude, flattened channel-major."""
    amplitude = np.asarray(amplitude, dtype=np.float64)
    if amplitude.ndim != 3:
        key_shape_message = (
            f"Expected a (C, H, W) amplitude, got shape {amplitude.shape}."
        )
        raise ShapeError(key_shape_message)
    _, h, w = amplitude.shape
    rows = center_window(h, prompt_extent(h, beta))
    cols = center_window(w, prompt_extent(w, beta))
    return SpectralKey(amplitude[:, rows, cols].ravel().copy(), image_id)


def _window_weights(channels: int, hp: int, wp: int, height: int, width: int):
    """Window indicator and the number of window bins in each ``{k, -k}`` pair."""
    inside = np.zeros((channels, height, width))
    inside[:, center_window(height, hp), center_window(width, wp)] = 1.0
    return inside, np.maximum(inside + mirror_centered(inside), 1.0)


def pad_one(values: np.ndarray, height: int, width: int) -> np.ndarray:
    """
    Embed a prompt at the spectrum center inside a field of ones.

    The multiplier is point-symmetric: a window bin whose mirror falls
    outside the window (the leading row and column of an even extent)
    carries its value to the mirror bin, and a bin pair lying inside the
    window takes the mean of its two entries.

    Examples:
        >>> import numpy as np
        >>> m = pad_one(np.array([[[2.0, 3.0], [4.0, 5.0]]]), 4, 4)
        >>> m[0].tolist()
        [[1.0, 1.0, 1.0, 1.0], [1.0, 2.0, 3.0, 1.0], [1.0, 4.0, 5.0, 4.0], [1.0, 1.0, 3.0, 2.0]]
    """
    channels, hp, wp = values.shape
    inside, pairs = _window_weights(channels, hp, wp, height, width)
    deviation = np.zeros((channels, height, width))
    deviation[:, center_window(height, hp), center_window(width, wp)] = (
        values - 1.0
    )
    return 1.0 + (deviation + mirror_centered(deviation)) / pairs


def apply_prompt(
    x: np.ndarray,
    prompt: Union[LowFreqPrompt, Variable, np.ndarray],
    tape: GradTape = None,
) -> Union[np.ndarray, Variable]:
    """
    Rescale the low-frequency amplitude of `x` by the prompt.

    ``x_tilde = F^-1(PadOne(p) * |F(x)|, phase(F(x)))``. `pad_one` keeps the
    multiplier point-symmetric, so the rescaled spectrum stays Hermitian and
    the inverse goes through the checked `ifft2_centered`.

    `x` is ``(C, H, W)`` or a batch ``(N, C, H, W)`` sharing one prompt.
    Passing the prompt as a `Variable` returns a `Variable` and, with a tape,
    records the gradient with respect to the prompt values.

    Examples:
        >>> import numpy as np
        >>> x = np.arange(16.0).reshape(1, 4, 4)
        >>> p = LowFreqPrompt.identity((1, 1, 1), 0.25)
        >>> bool(np.allclose(apply_prompt(x, p), x))
        True
    """
    as_var = isinstance(prompt, Variable)
    if isinstance(prompt, LowFreqPrompt):
        values = prompt.values
    elif as_var:
        values = prompt.value
    else:
        values = np.asarray(prompt, dtype=np.float64)
    check_finite(values, "prompt")

    x = np.asarray(x, dtype=np.float64)
    spectrum = fft2_centered(x)
    h, w = x.shape[-2:]
    if values.ndim != 3 or values.shape[0] != x.shape[-3]:
        prompt_shape_message = (
            f"Prompt of shape {values.shape} does not fit an image with "
            f"{x.shape[-3]} channels."
        )
        raise ShapeError(prompt_shape_message)
    if values.shape[1] > h or values.shape[2] > w:
        prompt_size_message = (
            f"Prompt of shape {values.shape} exceeds the {h}x{w} spectrum."
        )
        raise ShapeError(prompt_size_message)
    filtered = ifft2_centered(pad_one(values, h, w) * spectrum)
    if not as_var:
        return filtered

    result = Variable(filtered)
    rows = center_window(h, values.shape[1])
    cols = center_window(w, values.shape[2])
    _, pairs = _window_weights(*values.shape, h, w)

    def backward(grads):
        (g,) = grads
        back = scipy.fft.fftshift(scipy.fft.ifft2(g, axes=AXES), axes=AXES)
        d_multiplier = np.real(spectrum * back)
        while d_multiplier.ndim > 3:
            d_multiplier = d_multiplier.sum(axis=0)
        d_values = (d_multiplier + mirror_centered(d_multiplier)) / pairs
        return (d_values[:, rows, cols],)

    if tape is not None and tape.watching(prompt):
        tape.record("apply_prompt", (prompt,), (result,), backward)
    return result
