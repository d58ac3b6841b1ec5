"""
Centered two-dimensional Fourier transforms over the trailing two axes.

Grids are channels-first float64 arrays, ``(C, H, W)`` or batched
``(N, C, H, W)``. `scipy.fft` (pocketfft) handles every length, falling back
to Bluestein's algorithm for large prime factors, so no size restriction
applies.
"""

import numpy as np
import scipy.fft

from daynight.constants import IMAG_RESIDUE_TOL
from daynight.errors import DomainError, NonFiniteError, ShapeError

AXES = (-2, -1)


def check_finite(x: np.ndarray, what: str = "grid") -> None:
    if not np.all(np.isfinite(x)):
        non_finite_message = (
            f"Non-finite values found in {what}; the data is corrupt."
        )
        raise NonFiniteError(non_finite_message)


def check_grid(x: np.ndarray, what: str = "grid") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        bad_shape_message = (
            f"Expected a grid with height and width >= 1 for {what}, "
            f"got shape {x.shape}."
        )
        raise ShapeError(bad_shape_message)
    check_finite(x, what)
    return x


def fft2_centered(x: np.ndarray) -> np.ndarray:
    """
    Per-channel 2D DFT with the zero-frequency bin moved to the grid center.

    For even sizes the center index is ``dim // 2``.

    Examples:
        >>> import numpy as np
        >>> z = fft2_centered(np.full((1, 4, 4), 2.0))
        >>> float(z[0, 2, 2].real)
        32.0
    """
    x = check_grid(np.asarray(x, dtype=np.float64), "fft input")
    return scipy.fft.fftshift(scipy.fft.fft2(x, axes=AXES), axes=AXES)


def ifft2_centered(z: np.ndarray) -> np.ndarray:
    """
    Inverse of `fft2_centered`, returning the real part.

    Raises `DomainError` when the imaginary residue exceeds 1e-6, which means
    the spectrum is not the spectrum of a real image.
    """
    z = check_grid(np.asarray(z, dtype=np.complex128), "spectrum")
    spatial = scipy.fft.ifft2(scipy.fft.ifftshift(z, axes=AXES), axes=AXES)
    residue = float(np.max(np.abs(spatial.imag))) if spatial.size else 0.0
    if residue > IMAG_RESIDUE_TOL:
        inconsistent_spectrum_message = (
            f"Inverse transform left an imaginary residue of {residue:.3e} "
            f"(tolerance {IMAG_RESIDUE_TOL:.0e}); the spectrum is not "
            "Hermitian-symmetric."
        )
        raise DomainError(inconsistent_spectrum_message)
    return np.ascontiguousarray(spatial.real)


def center_window(size: int, extent: int) -> slice:
    """
    Slice of length `extent` around the centered zero-frequency index.

    Examples:
        >>> center_window(64, 3)
        slice(31, 34, None)
        >>> center_window(8, 1)
        slice(4, 5, None)
    """
    if extent > size or extent < 1:
        crop_message = f"Cannot take a window of {extent} from {size} bins."
        raise ShapeError(crop_message)
    start = size // 2 - extent // 2
    return slice(start, start + extent)


def mirror_centered(z: np.ndarray) -> np.ndarray:
    """
    Point reflection of a centered grid, ``out[k] = z[-k]``.

    Examples:
        >>> import numpy as np
        >>> z = np.arange(4.0).reshape(1, 1, 4)
        >>> mirror_centered(z)[0, 0].tolist()
        [0.0, 3.0, 2.0, 1.0]
    """
    z = np.asarray(z)
    h, w = z.shape[-2:]
    rows = (2 * (h // 2) - np.arange(h)) % h
    cols = (2 * (w // 2) - np.arange(w)) % w
    return z[..., rows[:, None], cols[None, :]]
