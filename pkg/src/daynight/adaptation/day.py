"""
Daytime adaptation: one prompt per test image, trained for a single Adam
step to pull the frozen model's BN batch statistics towards warm-up targets.
"""

import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from daynight.configuration import DayConfig
from daynight.errors import DomainError, ShapeError
from daynight.logging import configure_logging
from daynight.model.segnet import (
    BN_LAYERS,
    ENCODER_BN_LAYERS,
    ForwardTrace,
    SegModelState,
    StatsMode,
    forward,
)
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.layers import abs_diff_mean, add, scale
from daynight.numerics.optim import OptimState, adam_step
from daynight.prompt.bank import MemoryBank, init_prompt
from daynight.prompt.frequency import (
    LowFreqPrompt,
    apply_prompt,
    low_freq_key,
    prompt_shape,
    spectral_decompose,
)

logger = configure_logging("daynight.adaptation.day")

WarmStats = List[Tuple[np.ndarray, np.ndarray]]


def warmup_lambda(i: int, tau: float) -> float:
    """
    ``1 / (sqrt(i) / tau + 1)``.

    Examples:
        >>> warmup_lambda(1, 5.0) == 5 / 6
        True
    """
    if i < 1 or tau <= 0:
        warmup_domain_message = (
            f"Warm-up needs i >= 1 and tau > 0, got i={i}, tau={tau}."
        )
        raise DomainError(warmup_domain_message)
    return 1.0 / (math.sqrt(i) / tau + 1.0)


@dataclass
class WarmupSchedule:
    """Global test-sample counter; never reset within a deployment."""

    tau: float
    i: int = 1

    @property
    def lam(self) -> float:
        return warmup_lambda(self.i, self.tau)

    def advance(self, n: int = 1) -> None:
        self.i += n


def warmup_statistics(
    i: int, tau: float, trace: ForwardTrace, use_warmup: bool = True
) -> WarmStats:
    """
    Per-layer blend of batch and source statistics.

    The results are plain arrays, constants for any tape. Without warm-up
    the targets are the source running statistics.
    """
    lam = warmup_lambda(i, tau) if use_warmup else 0.0
    return [
        (
            lam * layer.batch_mean.value + (1.0 - lam) * layer.running_mean,
            lam * layer.batch_std.value + (1.0 - lam) * layer.running_std,
        )
        for layer in trace
    ]


def loss_layers(encoder_only: bool) -> Tuple[int, ...]:
    names = ENCODER_BN_LAYERS if encoder_only else BN_LAYERS
    return tuple(BN_LAYERS.index(name) for name in names)


def prompt_alignment_loss(
    trace: ForwardTrace,
    warm: WarmStats,
    layers: Optional[Sequence[int]] = None,
    tape: Optional[GradTape] = None,
) -> Variable:
    """
    Mean over the chosen BN layers of the channel-mean absolute mean and std
    discrepancies between the trace and the warm-up targets.
    """
    if len(trace) != len(warm):
        layer_count_message = (
            f"Trace has {len(trace)} BN layers but {len(warm)} warm-up "
            "targets were given."
        )
        raise ShapeError(layer_count_message)
    layers = tuple(range(len(trace))) if layers is None else tuple(layers)
    terms = []
    for h in layers:
        mean_w, std_w = warm[h]
        terms.append(abs_diff_mean(trace[h].batch_mean, mean_w, tape))
        terms.append(abs_diff_mean(trace[h].batch_std, std_w, tape))
    return scale(add(*terms, tape=tape), 1.0 / len(layers), tape)


@dataclass
class DayRecord:
    image: np.ndarray
    prompt: LowFreqPrompt
    pseudo_label: np.ndarray
    index: int = -1
    loss_before: float = float("nan")
    loss_after: float = float("nan")


@dataclass
class DayRecordSet:
    """The records one day collects; consumed by the following night."""

    records: List[DayRecord] = field(default_factory=list)

    def append(self, record: DayRecord) -> None:
        self.records.append(record)

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[DayRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> DayRecord:
        return self.records[index]


def alignment_loss_of(
    model: SegModelState,
    image: np.ndarray,
    prompt: LowFreqPrompt,
    warm: WarmStats,
    mode: StatsMode,
    layers: Sequence[int],
) -> float:
    trace = forward(model, apply_prompt(image, prompt)[None], mode).trace
    return float(prompt_alignment_loss(trace, warm, layers).value)


def adapt_one(
    model: SegModelState,
    bank: MemoryBank,
    schedule: WarmupSchedule,
    image: np.ndarray,
    cfg: DayConfig,
    index: int = -1,
) -> DayRecord:
    """
    Adapts one test image and returns its record.

    The model is only read. The bank receives the trained prompt and the
    schedule advances by one.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        image_shape_message = (
            f"Day adaptation takes one (C, H, W) image, got {image.shape}."
        )
        raise ShapeError(image_shape_message)

    amplitude, _ = spectral_decompose(image)
    key = low_freq_key(amplitude, cfg.beta, index)
    shape = prompt_shape(*image.shape, cfg.beta)
    support = (
        bank.retrieve_support(key, cfg.support_size)
        if cfg.use_memory_bank and len(bank)
        else []
    )
    prompt = init_prompt(support, shape, cfg.beta)
    layers = loss_layers(cfg.encoder_only_loss)

    batch_pass = forward(model, apply_prompt(image, prompt)[None], StatsMode.batch())
    warm = warmup_statistics(schedule.i, cfg.tau, batch_pass.trace, cfg.use_warmup)
    train_mode = (
        StatsMode.inject(warm) if cfg.normalize_with_warmup else StatsMode.batch()
    )

    tape = GradTape()
    values = Variable(np.array(prompt.values), requires_grad=True)
    prompted = apply_prompt(image[None], values, tape)
    result = forward(model, prompted, train_mode, tape)
    loss = prompt_alignment_loss(result.trace, warm, layers, tape)
    (grad,) = tape.gradient(loss, [values])
    (trained_values,) = adam_step(
        [prompt.values], [grad], OptimState.adam(cfg.prompt_lr)
    )
    trained = LowFreqPrompt(trained_values, cfg.beta).frozen()

    loss_after = alignment_loss_of(
        model, image, trained, warm, train_mode, layers
    )
    infer_mode = (
        StatsMode.inject(warm) if cfg.infer_with_warmup else StatsMode.running()
    )
    pseudo = forward(model, apply_prompt(image, trained)[None], infer_mode)

    bank.push(key, trained)
    logger.debug(
        f"sample {index} i={schedule.i} lambda={schedule.lam:.4f} "
        f"L_p {float(loss.value):.5f} -> {loss_after:.5f}"
    )
    schedule.advance()
    return DayRecord(
        image=image,
        prompt=trained,
        pseudo_label=pseudo.probs.value[0],
        index=index,
        loss_before=float(loss.value),
        loss_after=loss_after,
    )


def run_day(
    model: SegModelState,
    bank: MemoryBank,
    schedule: WarmupSchedule,
    images: Sequence[np.ndarray],
    cfg: DayConfig,
    indices: Optional[Sequence[int]] = None,
) -> DayRecordSet:
    indices = list(range(len(images))) if indices is None else list(indices)
    records = DayRecordSet()
    for index, image in zip(indices, images):
        records.append(adapt_one(model, bank, schedule, image, cfg, index))
    return records
