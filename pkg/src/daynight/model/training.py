"""
Supervised source-domain pre-training.
"""

from typing import List, Optional, Sequence

import numpy as np

from daynight.errors import EmptyDataError
from daynight.logging import configure_logging
from daynight.model.segnet import SegModelState, StatsMode, forward, init_model
from daynight.numerics.autodiff import GradTape
from daynight.numerics.layers import binary_cross_entropy
from daynight.numerics.optim import OptimState, adam_step

logger = configure_logging("daynight.model.training")


def train_source(
    dataset: Sequence,
    epochs: int = 30,
    lr: float = 0.01,
    seed: int = 0,
    batch_size: int = 8,
    history: Optional[List[float]] = None,
) -> SegModelState:
    """
    Trains a fresh network on labeled samples with pixelwise BCE and Adam.

    BN layers run in batch mode and update their running statistics. The
    sample order is shuffled per epoch from `seed`, so two calls with equal
    arguments return bit-identical weights. Mean epoch losses are appended
    to `history` when given.

    Args:
        dataset: Samples exposing ``image`` ``(C, H, W)`` and ``mask``.
        epochs: Passes over the dataset.
        lr: Adam learning rate.
        seed: Seeds both initialization and shuffling.
        batch_size: Samples per Adam step.
        history: Optional list receiving the mean loss of each epoch.

    Returns:
        The trained model.
    """
    if len(dataset) == 0:
        empty_dataset_message = "Cannot train a source model on no samples."
        raise EmptyDataError(empty_dataset_message)

    images = np.stack([np.asarray(s.image, dtype=np.float64) for s in dataset])
    masks = np.stack([np.asarray(s.mask, dtype=np.float64) for s in dataset])
    model = init_model(seed, images.shape[1], masks.shape[1])
    rng = np.random.default_rng(seed)
    state = OptimState.adam(lr)
    names = list(model.params)

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(images))
        losses = []
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            tape = GradTape()
            result = forward(
                model,
                images[idx],
                StatsMode.batch(),
                tape,
                trainable=True,
                update_running=True,
            )
            loss = binary_cross_entropy(result.probs, masks[idx], tape)
            grads = tape.gradient(loss, [result.params[n] for n in names])
            updated = adam_step(
                [model.params[n] for n in names], grads, state
            )
            model.params.update(zip(names, updated))
            losses.append(float(loss.value))
        epoch_loss = float(np.mean(losses))
        if history is not None:
            history.append(epoch_loss)
        logger.debug(f"source epoch {epoch}/{epochs} loss {epoch_loss:.5f}")

    logger.info(
        f"Trained source model on {len(images)} samples for {epochs} epochs"
    )
    return model
