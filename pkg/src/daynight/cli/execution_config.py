"""
Command dataclasses of the `command` configuration group.

A field left at None is not passed on, so the preset or the config file
supplies the value.
"""

from dataclasses import dataclass
from typing import Optional

from dataclasses_json import dataclass_json
from hydra_zen import make_custom_builds_fn

from daynight.constants import DEFAULT_SOURCE_CHECKPOINT


@dataclass_json
@dataclass
class TrainSourceCommand:
    """
    Trains the source model on the synthetic source domain.

    Attributes:
        out: Checkpoint path (any fsspec URL).
        seed: Benchmark and initialization seed.
        epochs: Overrides the source training epochs.
        lr: Overrides the source Adam learning rate.
    """

    out: str = DEFAULT_SOURCE_CHECKPOINT
    seed: int = 0
    epochs: Optional[int] = None
    lr: Optional[float] = None


@dataclass_json
@dataclass
class DeployCommand:
    """
    Runs the day-night loop on a target stream and writes the report.

    Attributes:
        ckpt: Source checkpoint.
        ratio: Fraction of the stream seen per day, one of 0.1, 0.2, 0.5.
        target: Target stream, ``A`` or ``B``.
        out: Report directory; defaults to a directory named after the
            target, ratio and seed under ``outputs/deployments``.
        seed: Stream order and night seed.
        night: False disables the night phase.
        cycles: Number of day-night cycles.
        infer_with_warmup: Final day inference with warm-up statistics.
        binarize_pseudo: Threshold pseudo-labels before the night.
        encoder_only_loss: Alignment loss over encoder layers only.
        preset: ``odoc`` or ``polyp``.
        config_file: JSON `RunConfig`; replaces the preset.
        handoff: Trio member each night hands to the next day.
        samples: Directory of dumped samples deployed instead of the
            generated stream.
        resume: Deployment state to continue from.
    """

    ckpt: str = DEFAULT_SOURCE_CHECKPOINT
    ratio: Optional[float] = None
    target: Optional[str] = None
    out: Optional[str] = None
    seed: Optional[int] = None
    night: Optional[bool] = None
    cycles: Optional[int] = None
    infer_with_warmup: Optional[bool] = None
    binarize_pseudo: Optional[bool] = None
    encoder_only_loss: Optional[bool] = None
    preset: str = "odoc"
    config_file: Optional[str] = None
    handoff: Optional[str] = None
    samples: Optional[str] = None
    resume: Optional[str] = None


@dataclass_json
@dataclass
class EvalCommand:
    """Offline Dice of a checkpoint on one target stream."""

    ckpt: str = DEFAULT_SOURCE_CHECKPOINT
    target: str = "B"
    seed: int = 0
    n_target: int = 100


@dataclass_json
@dataclass
class DumpCommand:
    """
    Writes one target stream, in deployment order, as a sample directory.

    Attributes:
        out: Destination directory (any fsspec URL).
        target: Target stream, ``A`` or ``B``.
        seed: Stream seed.
        n_target: Number of samples.
    """

    out: str = "outputs/streams"
    target: str = "B"
    seed: int = 0
    n_target: int = 100


@dataclass_json
@dataclass
class SelftestCommand:
    """Runs the invariant and gradient checks over `seeds` random draws."""

    seeds: int = 20


fbuilds = make_custom_builds_fn(populate_full_signature=True)

TrainSourceConf = fbuilds(TrainSourceCommand)
DeployConf = fbuilds(DeployCommand)
EvalConf = fbuilds(EvalCommand)
DumpConf = fbuilds(DumpCommand)
SelftestConf = fbuilds(SelftestCommand)

COMMAND_CONFIGS = {
    "train-source": TrainSourceConf,
    "deploy": DeployConf,
    "eval": EvalConf,
    "dump": DumpConf,
    "selftest": SelftestConf,
}
