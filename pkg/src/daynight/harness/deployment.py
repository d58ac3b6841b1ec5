"""
Day-night deployment over a target stream, with a source-only control pass
and report writing.
"""

import copy
import json
import math
import posixpath
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import fsspec
import numpy as np
import pandas as pd
from joblib import Memory, Parallel, delayed
from mashumaro.mixins.json import DataClassJSONMixin

from daynight.adaptation.day import DayRecordSet, WarmupSchedule, adapt_one
from daynight.adaptation.night import run_night
from daynight.configuration import RunConfig
from daynight.data.synth import LabeledSample, benchmark_suite, target_stream
from daynight.errors import EmptyDataError, UsageError
from daynight.harness.metrics import dice, mean_dice
from daynight.harness.state import (
    LOG_COLUMNS,
    DeploymentState,
    save_state,
)
from daynight.logging import configure_logging
from daynight.model.checkpoint import load_model, save_model
from daynight.model.segnet import SegModelState, predict
from daynight.model.training import train_source
from daynight.prompt.bank import MemoryBank

logger = configure_logging("daynight.harness.deployment")

SAMPLES_FILE = "samples.csv"
SUMMARY_FILE = "summary.json"
STATE_FILE = "state.dyna"
MODEL_FILE = "model.dyna"

NIGHT_TRAINED = "trained"
NIGHT_SKIPPED = "skipped"
NIGHT_DISABLED = "disabled"


def _ceil(x: float) -> int:
    # 1 / 0.1 and 100 * 0.1 must not round up past the exact integer
    return math.ceil(round(x, 9))


def split_days(
    n: int, test_ratio: float, cycles: Optional[int] = None
) -> List[range]:
    """
    Positions of the stream each day receives.

    A day takes ``ceil(n * test_ratio)`` samples; there are
    ``ceil(1 / test_ratio)`` days unless `cycles` says otherwise. Days past
    the end of the stream are empty.

    Examples:
        >>> [len(d) for d in split_days(100, 0.5)]
        [50, 50]
        >>> [len(d) for d in split_days(10, 0.5, cycles=3)]
        [5, 5, 0]
    """
    per_day = max(1, _ceil(n * test_ratio))
    n_days = cycles if cycles is not None else _ceil(1.0 / test_ratio)
    return [
        range(min(day * per_day, n), min((day + 1) * per_day, n))
        for day in range(n_days)
    ]


def _optional_mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


@dataclass
class DaySummary(DataClassJSONMixin):
    day: int
    n_samples: int
    dice_dyna: Optional[float]
    dice_source_only: Optional[float]
    night: str
    descent_rate: Optional[float] = None


@dataclass
class DeploymentSummary(DataClassJSONMixin):
    seed: int
    target: str
    test_ratio: float
    config: RunConfig
    days: List[DaySummary] = field(default_factory=list)
    dice_dyna: Optional[float] = None
    dice_source_only: Optional[float] = None
    offline_dice_final: Optional[float] = None
    offline_dice_source_only: Optional[float] = None
    descent_rate: Optional[float] = None
    skipped_nights: List[int] = field(default_factory=list)
    undeployed: int = 0
    resumed_from: int = 0

    def to_report_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


@dataclass
class DeploymentReport:
    summary: DeploymentSummary
    samples: pd.DataFrame
    state: DeploymentState


def evaluate_offline(
    model: SegModelState, samples: Sequence[LabeledSample], batch_size: int = 32
) -> float:
    """Mean Dice of running-mode predictions over fixed samples."""
    probs = predict(model, np.stack([s.image for s in samples]), batch_size)
    return mean_dice(list(probs), [s.mask for s in samples])


def resolve_source(cfg: RunConfig, source: Optional[SegModelState]) -> SegModelState:
    if source is not None:
        return source
    if not cfg.checkpoint:
        no_checkpoint_message = (
            "A deployment needs a source checkpoint.\n"
            "Train one with `daynight command=train-source` and pass "
            "`command.ckpt=<path>`."
        )
        raise UsageError(no_checkpoint_message)
    return load_model(cfg.checkpoint)


def run_deployment(
    cfg: RunConfig,
    source: Optional[SegModelState] = None,
    stream: Optional[Sequence[LabeledSample]] = None,
    resume: Optional[DeploymentState] = None,
) -> DeploymentReport:
    """
    Runs the day-night loop over a target stream.

    Every sample is scored when it arrives, with the model and bank of that
    moment; the source-only control scores the same stream in the same
    order. The incoming `source` is never modified.

    Args:
        cfg: Deployment configuration.
        source: Source model; loaded from ``cfg.checkpoint`` when omitted.
        stream: Target samples in arrival order; generated from
            ``cfg.seed``, ``cfg.target`` and ``cfg.n_target`` when omitted.
        resume: State a previous run saved; its model, bank, warm-up counter
            and metric log carry over and the days after ``resume.cycle``
            are run. Not modified.

    Returns:
        Summary, per-sample scores and the final deployment state.
    """
    cfg.validate()
    source = resolve_source(cfg, source)
    if stream is None:
        stream = target_stream(cfg.seed, cfg.target, cfg.n_target)
    stream = list(stream)
    if not stream:
        empty_stream_message = "The target stream is empty; nothing to deploy on."
        raise EmptyDataError(empty_stream_message)
    days = split_days(len(stream), cfg.test_ratio, cfg.cycles)
    undeployed = len(stream) - sum(len(d) for d in days)
    if undeployed > 0:
        logger.warning(
            f"{len(days)} days of {len(days[0])} samples leave the last "
            f"{undeployed} of {len(stream)} samples undeployed; offline Dice "
            "still scores the whole stream"
        )

    control = predict(source, np.stack([s.image for s in stream]))
    if resume is None:
        state = DeploymentState(
            cycle=0, model=source.copy(), bank=MemoryBank(cfg.day.bank_capacity)
        )
    elif not 0 <= resume.cycle <= len(days):
        resume_message = (
            f"Cannot resume after cycle {resume.cycle}; this deployment has "
            f"{len(days)} days."
        )
        raise UsageError(resume_message)
    else:
        state = copy.deepcopy(resume)
        logger.info(f"Resuming after day {state.cycle} of {len(days)}")
    schedule = WarmupSchedule(cfg.day.tau, state.counter)
    summary = DeploymentSummary(
        seed=cfg.seed,
        target=cfg.target,
        test_ratio=cfg.test_ratio,
        config=cfg,
        undeployed=undeployed,
        resumed_from=state.cycle,
    )
    descents: List[bool] = []

    first_day = state.cycle + 1
    for day, positions in enumerate(days, start=1):
        if day < first_day:
            continue
        records = DayRecordSet()
        day_dyna, day_control, day_descents = [], [], []
        for position in positions:
            sample = stream[position]
            record = adapt_one(
                state.model,
                state.bank,
                schedule,
                sample.image,
                cfg.day,
                sample.index,
            )
            records.append(record)
            score = dice(record.pseudo_label, sample.mask)
            control_score = dice(control[position], sample.mask)
            state.log.append(day, sample.index, score, control_score)
            day_dyna.append(score)
            day_control.append(control_score)
            day_descents.append(record.loss_after < record.loss_before)
        state.counter = schedule.i
        descents += day_descents

        if not cfg.night_enabled:
            night = NIGHT_DISABLED
        elif len(records) == 0:
            night = NIGHT_SKIPPED
            summary.skipped_nights.append(day)
            logger.warning(f"Day {day} saw no samples; night skipped")
        else:
            state.model = run_night(
                state.model, records, cfg.night, seed=[cfg.seed, day]
            )
            night = NIGHT_TRAINED
        state.cycle = day

        summary.days.append(
            DaySummary(
                day=day,
                n_samples=len(positions),
                dice_dyna=_optional_mean(day_dyna),
                dice_source_only=_optional_mean(day_control),
                night=night,
                descent_rate=_optional_mean(day_descents),
            )
        )
        logger.info(
            f"Day {day}/{len(days)}: {len(positions)} samples, Dice "
            f"{summary.days[-1].dice_dyna} vs source-only "
            f"{summary.days[-1].dice_source_only}, night {night}"
        )

    summary.dice_dyna = _optional_mean(state.log.column("dice_dyna"))
    summary.dice_source_only = _optional_mean(state.log.column("dice_source_only"))
    summary.descent_rate = _optional_mean(descents)
    summary.offline_dice_final = evaluate_offline(state.model, stream)
    summary.offline_dice_source_only = evaluate_offline(source, stream)

    samples = pd.DataFrame(state.log.rows, columns=list(LOG_COLUMNS))
    return DeploymentReport(summary, samples, state)


def write_report(report: DeploymentReport, output_dir: str) -> List[str]:
    """
    Writes the per-sample CSV, the JSON summary, the final model and the
    deployment state; returns the written paths.
    """
    fs, root = fsspec.core.url_to_fs(output_dir)
    fs.makedirs(root, exist_ok=True)
    csv_path = posixpath.join(output_dir, SAMPLES_FILE)
    summary_path = posixpath.join(output_dir, SUMMARY_FILE)
    with fsspec.open(csv_path, "w") as f:
        report.samples.to_csv(f, index=False, lineterminator="\n")
    with fsspec.open(summary_path, "w") as f:
        f.write(report.summary.to_report_json())
    model_path = posixpath.join(output_dir, MODEL_FILE)
    state_path = posixpath.join(output_dir, STATE_FILE)
    save_model(report.state.model, model_path)
    save_state(report.state, state_path)
    logger.info(f"Deployment report written to {output_dir}")
    return [csv_path, summary_path, model_path, state_path]


def seed_source(seed: int, epochs: int, lr: float, batch_size: int) -> SegModelState:
    """The source model of one benchmark seed."""
    return train_source(
        benchmark_suite(seed=seed).source_train,
        epochs=epochs,
        lr=lr,
        seed=seed,
        batch_size=batch_size,
    )


def _deploy_seed(cfg: RunConfig, seed: int, memory: Memory) -> dict:
    seeded = cfg.with_overrides(seed=seed)
    suite = benchmark_suite(seed=seed, n_target=cfg.n_target)
    source = memory.cache(seed_source)(
        seed, cfg.source.epochs, cfg.source.lr, cfg.source.batch_size
    )
    report = run_deployment(seeded, source, suite.target(cfg.target))
    summary = report.summary
    return {
        "seed": seed,
        "dice_dyna": summary.dice_dyna,
        "dice_source_only": summary.dice_source_only,
        "offline_dice_final": summary.offline_dice_final,
        "offline_dice_source_only": summary.offline_dice_source_only,
        "descent_rate": summary.descent_rate,
    }


def evaluate_seeds(
    cfg: RunConfig,
    seeds: Iterable[int],
    n_jobs: int = -1,
    cache_dir: Optional[str] = None,
) -> pd.DataFrame:
    """
    Independent train-and-deploy runs, one per seed, in parallel.

    Each run trains its own source model on its own benchmark. With a
    `cache_dir` the trained source models are kept there by joblib and reused
    by later calls with the same seed and source settings. The returned frame
    has one row per seed; take ``.median()`` for the headline numbers.
    """
    memory = Memory(cache_dir, verbose=0)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_deploy_seed)(cfg, seed, memory) for seed in seeds
    )
    return pd.DataFrame(rows).set_index("seed")
