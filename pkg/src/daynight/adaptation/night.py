"""
Nighttime self-training of a student, a global student and an EMA teacher on
the records one day collected.
"""

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from daynight.adaptation.augment import (
    apply_geometric,
    apply_photometric,
    sample_augment,
)
from daynight.adaptation.day import DayRecord, DayRecordSet
from daynight.configuration import HANDOFF_MODELS, NightConfig
from daynight.errors import DomainError, EmptyDataError, ShapeError
from daynight.logging import configure_logging
from daynight.model.segnet import (
    SegModelState,
    StatsMode,
    forward,
    weights_axpy,
)
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.layers import add, binary_cross_entropy, mul_const
from daynight.numerics.optim import OptimState, sgd_step
from daynight.prompt.frequency import apply_prompt

logger = configure_logging("daynight.adaptation.night")


@dataclass
class TrioModels:
    """
    Student, global student and teacher of one night.

    `r` counts optimization iterations from one and resets every night.
    """

    student: SegModelState
    global_student: SegModelState
    teacher: SegModelState
    alpha: float
    r: int = 1

    @classmethod
    def from_source(cls, source: SegModelState, alpha: float) -> "TrioModels":
        if not 0.0 <= alpha <= 1.0:
            alpha_message = f"EMA rate alpha must lie in [0, 1], got {alpha}."
            raise DomainError(alpha_message)
        return cls(source.copy(), source.copy(), source.copy(), alpha)

    def member(self, name: str) -> SegModelState:
        """The trio member called `name`: ``teacher``, ``global`` or ``student``."""
        members = {
            "teacher": self.teacher,
            "global": self.global_student,
            "student": self.student,
        }
        if name not in members:
            member_message = (
                f"Unknown trio member {name!r}; expected one of {tuple(members)}."
            )
            raise DomainError(member_message)
        return members[name]


def agreement_mask(
    pseudo: np.ndarray,
    p_global: Optional[np.ndarray],
    p_teacher: np.ndarray,
    threshold: float = 0.5,
) -> np.ndarray:
    """
    One where every given map lies on the same side of `threshold`.

    Passing ``p_global=None`` drops the global student from the vote.

    Examples:
        >>> import numpy as np
        >>> agreement_mask(
        ...     np.array([0.8, 0.8]), np.array([0.7, 0.3]),
        ...     np.array([0.9, 0.9]), 0.5,
        ... ).tolist()
        [1.0, 0.0]
    """
    maps = [np.asarray(m) for m in (pseudo, p_global, p_teacher) if m is not None]
    shapes = {m.shape for m in maps}
    if len(shapes) != 1:
        mask_shape_message = f"Agreement maps differ in shape: {shapes}."
        raise ShapeError(mask_shape_message)
    above = np.stack([m > threshold for m in maps])
    agree = above.all(axis=0) | (~above).all(axis=0)
    return agree.astype(np.float64)


def student_loss(
    p_student: Variable,
    p_global: Optional[np.ndarray],
    p_teacher: np.ndarray,
    pseudo: np.ndarray,
    mask: np.ndarray,
    tape: Optional[GradTape] = None,
) -> Variable:
    """
    Sum of masked soft-target BCE terms against each reference map.

    The references are constants; only `p_student` carries a gradient.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if np.any((mask != 0.0) & (mask != 1.0)):
        binary_mask_message = "Student loss mask must be binary."
        raise DomainError(binary_mask_message)
    masked = mul_const(p_student, mask, tape)
    targets = [t for t in (p_global, p_teacher, pseudo) if t is not None]
    terms = [
        binary_cross_entropy(masked, mask * np.asarray(t), tape) for t in targets
    ]
    return add(*terms, tape=tape)


def night_inputs(
    records: Sequence[DayRecord],
    rng: np.random.Generator,
    cfg: NightConfig,
):
    """
    Student inputs, shared weak inputs and pseudo-labels of one batch.

    Each record draws its own augmentation; the geometric part is shared by
    the image, the student input and the pseudo-label.
    """
    strong, weak, labels = [], [], []
    for record in records:
        adapted = apply_prompt(record.image, record.prompt)
        spec = sample_augment(rng, square=adapted.shape[-1] == adapted.shape[-2])
        weak_image = apply_geometric(adapted, spec.geometric)
        weak.append(weak_image)
        strong.append(apply_photometric(weak_image, spec))
        label = apply_geometric(record.pseudo_label, spec.geometric)
        if cfg.binarize_pseudo:
            label = (label > cfg.threshold).astype(np.float64)
        labels.append(label)
    return np.stack(strong), np.stack(weak), np.stack(labels)


def night_iteration(
    trio: TrioModels,
    records: Sequence[DayRecord],
    cfg: NightConfig,
    rng: np.random.Generator,
) -> float:
    """
    One optimization iteration: student SGD step, then the global running
    mean, then the teacher EMA, then ``r += 1``. Returns the student loss.
    """
    if len(records) == 0:
        empty_batch_message = "A night iteration needs at least one record."
        raise EmptyDataError(empty_batch_message)
    strong, weak, pseudo = night_inputs(records, rng, cfg)

    p_global = (
        forward(trio.global_student, weak).probs.value
        if cfg.use_global_student
        else None
    )
    p_teacher = forward(trio.teacher, weak).probs.value

    tape = GradTape()
    result = forward(
        trio.student,
        strong,
        StatsMode.batch(),
        tape,
        trainable=True,
        update_running=True,
    )
    mask = agreement_mask(pseudo, p_global, p_teacher, cfg.threshold)
    loss = student_loss(result.probs, p_global, p_teacher, pseudo, mask, tape)

    names = list(trio.student.params)
    grads = tape.gradient(loss, [result.params[n] for n in names])
    updated = sgd_step(
        [trio.student.params[n] for n in names], grads, OptimState.sgd(cfg.lr)
    )
    trio.student.params.update(zip(names, updated))

    r = trio.r
    trio.global_student = weights_axpy(
        r / (r + 1), trio.global_student, 1.0 / (r + 1), trio.student
    )
    teacher_source = (
        trio.global_student
        if cfg.teacher_update_source == "global"
        else trio.student
    )
    trio.teacher = weights_axpy(
        trio.alpha, trio.teacher, 1.0 - trio.alpha, teacher_source
    )
    trio.r += 1
    return float(loss.value)


def run_night(
    source: SegModelState,
    records: DayRecordSet,
    cfg: NightConfig,
    seed: Union[int, Sequence[int]] = 0,
    on_iteration: Optional[Callable[[TrioModels], None]] = None,
) -> SegModelState:
    """
    Self-trains on the day's records and returns the trio member named by
    `cfg.handoff` as the next day's model.

    The incoming model is not modified and the record set is cleared.
    `on_iteration` is called with the trio after every iteration.

    Args:
        source: The model the day ran with.
        records: The day's records; must be nonempty.
        cfg: Night settings.
        seed: Seeds shuffling and augmentation.
        on_iteration: Optional observer.

    Returns:
        The handoff model, the EMA teacher by default.
    """
    if len(records) == 0:
        empty_night_message = (
            "No day records to train on; skip the night and carry the model "
            "forward unchanged."
        )
        raise EmptyDataError(empty_night_message)
    if cfg.handoff not in HANDOFF_MODELS:
        handoff_message = (
            f"night.handoff must be one of {HANDOFF_MODELS}, got {cfg.handoff!r}."
        )
        raise DomainError(handoff_message)
    if cfg.batch_size < 1:
        batch_size_message = f"Night batch size must be >= 1, got {cfg.batch_size}."
        raise DomainError(batch_size_message)

    trio = TrioModels.from_source(source, cfg.alpha)
    rng = np.random.default_rng(seed)
    pool: List[DayRecord] = list(records)
    epoch_losses = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(pool))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [pool[i] for i in order[start : start + cfg.batch_size]]
            losses.append(night_iteration(trio, batch, cfg, rng))
            if on_iteration is not None:
                on_iteration(trio)
        epoch_losses.append(float(np.mean(losses)))
        logger.debug(
            f"night epoch {epoch}/{cfg.epochs} loss {epoch_losses[-1]:.5f}"
        )

    records.clear()
    logger.info(
        f"Night trained on {len(pool)} records, {trio.r - 1} iterations"
    )
    return trio.member(cfg.handoff)
