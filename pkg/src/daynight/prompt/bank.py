"""
FIFO memory bank of (spectral key, trained prompt) pairs.

New prompts start from a softmax-weighted average of the prompts whose keys
are most cosine-similar to the incoming image's key.
"""

from collections import deque
from typing import Deque, List, Optional, Tuple

import numpy as np
import scipy.special

from daynight.errors import DomainError, ShapeError
from daynight.prompt.frequency import LowFreqPrompt, SpectralKey

Support = List[Tuple[LowFreqPrompt, float]]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """
    Examples:
        >>> import numpy as np
        >>> cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 2.0]))
        0.0
    """
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        zero_norm_message = "Cosine similarity is undefined for a zero key."
        raise DomainError(zero_norm_message)
    return float(np.dot(a, b) / (norm_a * norm_b))


class MemoryBank:
    """
    Bounded FIFO store; pushing into a full bank evicts the oldest entry.

    Examples:
        >>> import numpy as np
        >>> bank = MemoryBank(capacity=2)
        >>> for i in range(3):
        ...     bank.push(
        ...         SpectralKey(np.ones(1), i),
        ...         LowFreqPrompt(np.full((1, 1, 1), float(i)), 0.1),
        ...     )
        >>> [key.image_id for key, _ in bank]
        [1, 2]
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            capacity_message = f"Bank capacity must be >= 1, got {capacity}."
            raise DomainError(capacity_message)
        self.capacity = capacity
        self._entries: Deque[Tuple[SpectralKey, LowFreqPrompt]] = deque(
            maxlen=capacity
        )

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def prompt_shape(self) -> Optional[Tuple[int, ...]]:
        return self._entries[0][1].shape if self._entries else None

    def push(self, key: SpectralKey, prompt: LowFreqPrompt) -> None:
        shape = self.prompt_shape
        if shape is not None and prompt.shape != shape:
            push_shape_message = (
                f"Bank holds prompts of shape {shape}, got {prompt.shape}."
            )
            raise ShapeError(push_shape_message)
        self._entries.append((key, prompt.frozen()))

    def retrieve_support(self, key: SpectralKey, m: int) -> Support:
        """
        The ``min(m, len(bank))`` most similar entries, best first.

        Ties go to the most recently inserted entry.
        """
        if m < 1:
            support_size_message = f"Support size must be >= 1, got {m}."
            raise DomainError(support_size_message)
        if key.norm == 0.0:
            zero_key_message = "Cannot retrieve with a zero-norm key."
            raise DomainError(zero_key_message)
        scored = [
            (cosine_similarity(key.values, stored.values), position, prompt)
            for position, (stored, prompt) in enumerate(self._entries)
        ]
        scored.sort(key=lambda item: (-item[0], -item[1]))
        return [(prompt, sim) for sim, _, prompt in scored[:m]]


def support_weights(similarities: List[float]) -> np.ndarray:
    """
    Softmax over raw cosine similarities.

    Examples:
        >>> support_weights([0.3, 0.3]).tolist()
        [0.5, 0.5]
    """
    return scipy.special.softmax(np.asarray(similarities, dtype=np.float64))


def init_prompt(
    support: Support, shape: Tuple[int, int, int], beta: float
) -> LowFreqPrompt:
    """
    Similarity-weighted average of the support prompts; identity when empty.
    """
    if not support:
        return LowFreqPrompt.identity(shape, beta)
    shapes = {prompt.shape for prompt, _ in support}
    if len(shapes) != 1:
        mixed_shapes_message = f"Support prompts have mixed shapes {shapes}."
        raise ShapeError(mixed_shapes_message)
    weights = support_weights([sim for _, sim in support])
    stacked = np.stack([prompt.values for prompt, _ in support])
    values = np.tensordot(weights, stacked, axes=1)
    return LowFreqPrompt(values, support[0][0].beta)
