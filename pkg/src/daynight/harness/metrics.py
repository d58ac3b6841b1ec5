from typing import Sequence

import numpy as np
from sklearn.metrics import f1_score

from daynight.errors import EmptyDataError, ShapeError


def dice(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> float:
    """
    Dice coefficient of `pred` binarized at ``pred > threshold`` against the
    binary mask `gt`; two empty masks score 1.0.

    Dice equals the binary F1 score, which handles the empty cases through
    ``zero_division``.

    Examples:
        >>> import numpy as np
        >>> a = np.zeros(400); a[:100] = 1
        >>> b = np.zeros(400); b[60:120] = 1
        >>> round(dice(a, b), 12)
        0.5
        >>> dice(np.zeros(4), np.zeros(4))
        1.0
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        dice_shape_message = (
            f"Prediction shape {pred.shape} does not match mask {gt.shape}."
        )
        raise ShapeError(dice_shape_message)
    y_pred = (pred > threshold).ravel().astype(np.int64)
    y_true = (gt > 0.5).ravel().astype(np.int64)
    return float(f1_score(y_true, y_pred, zero_division=1))


def mean_dice(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    threshold: float = 0.5,
) -> float:
    if len(preds) != len(gts):
        count_message = f"Got {len(preds)} predictions for {len(gts)} masks."
        raise ShapeError(count_message)
    if len(preds) == 0:
        no_scores_message = "Cannot average Dice over no samples."
        raise EmptyDataError(no_scores_message)
    return float(np.mean([dice(p, g, threshold) for p, g in zip(preds, gts)]))
