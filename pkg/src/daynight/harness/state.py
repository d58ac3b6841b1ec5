"""
Deployment state and its persistence in the checkpoint format.

Besides the model tensors a state file holds these extra tensors::

    state.cycle, state.counter, bank.capacity
    bank.key.<k>, bank.key_id.<k>, bank.prompt.<k>, bank.beta.<k>
    log.day, log.index, log.dice_dyna, log.dice_source_only

with ``<k>`` the zero-padded FIFO position, oldest first.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import fsspec
import numpy as np

from daynight.errors import CheckpointFormatError
from daynight.logging import configure_logging
from daynight.model.checkpoint import (
    decode_tensors,
    encode_tensors,
    model_from_tensors,
)
from daynight.model.segnet import SegModelState
from daynight.prompt.bank import MemoryBank
from daynight.prompt.frequency import LowFreqPrompt, SpectralKey

logger = configure_logging("daynight.harness.state")

LOG_COLUMNS = ("day", "index", "dice_dyna", "dice_source_only")


@dataclass
class MetricLog:
    """Append-only per-sample scores."""

    rows: List[Dict[str, float]] = field(default_factory=list)

    def append(
        self, day: int, index: int, dice_dyna: float, dice_source_only: float
    ) -> None:
        self.rows.append(
            {
                "day": day,
                "index": index,
                "dice_dyna": dice_dyna,
                "dice_source_only": dice_source_only,
            }
        )

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class DeploymentState:
    cycle: int
    model: SegModelState
    bank: MemoryBank
    counter: int = 1
    log: MetricLog = field(default_factory=MetricLog)

    def same_as(self, other: "DeploymentState") -> bool:
        """Bit-exact equality of every persisted field."""
        if (
            self.cycle != other.cycle
            or self.counter != other.counter
            or self.bank.capacity != other.bank.capacity
            or len(self.bank) != len(other.bank)
            or not self.model.same_as(other.model)
        ):
            return False
        for (key_a, prompt_a), (key_b, prompt_b) in zip(self.bank, other.bank):
            if (
                key_a.image_id != key_b.image_id
                or prompt_a.beta != prompt_b.beta
                or not np.array_equal(key_a.values, key_b.values)
                or not np.array_equal(prompt_a.values, prompt_b.values)
            ):
                return False
        return all(
            np.array_equal(self.log.column(c), other.log.column(c))
            for c in LOG_COLUMNS
        )


def _slot(k: int) -> str:
    return f"{k:06d}"


def state_tensors(state: DeploymentState) -> Dict[str, np.ndarray]:
    tensors = dict(state.model.tensors())
    tensors["state.cycle"] = np.array([state.cycle], dtype=np.float64)
    tensors["state.counter"] = np.array([state.counter], dtype=np.float64)
    tensors["bank.capacity"] = np.array([state.bank.capacity], dtype=np.float64)
    for k, (key, prompt) in enumerate(state.bank):
        tensors[f"bank.key.{_slot(k)}"] = key.values
        tensors[f"bank.key_id.{_slot(k)}"] = np.array([key.image_id], dtype=np.float64)
        tensors[f"bank.prompt.{_slot(k)}"] = prompt.values
        tensors[f"bank.beta.{_slot(k)}"] = np.array([prompt.beta])
    for column in LOG_COLUMNS:
        tensors[f"log.{column}"] = state.log.column(column)
    return tensors


def _scalar(extras: Dict[str, np.ndarray], name: str) -> float:
    if name not in extras:
        missing_field_message = f"State file lacks the {name!r} entry."
        raise CheckpointFormatError(missing_field_message)
    return float(extras[name].ravel()[0])


def state_from_tensors(arch: str, tensors: Dict[str, np.ndarray]) -> DeploymentState:
    model, extras = model_from_tensors(arch, tensors)
    bank = MemoryBank(int(_scalar(extras, "bank.capacity")))
    slots = sorted(
        name[len("bank.key.") :] for name in extras if name.startswith("bank.key.")
    )
    for slot in slots:
        key = SpectralKey(
            extras[f"bank.key.{slot}"], int(_scalar(extras, f"bank.key_id.{slot}"))
        )
        prompt = LowFreqPrompt(
            extras[f"bank.prompt.{slot}"], _scalar(extras, f"bank.beta.{slot}")
        )
        bank.push(key, prompt)

    log = MetricLog()
    columns = {c: extras.get(f"log.{c}", np.zeros(0)) for c in LOG_COLUMNS}
    if len({len(v) for v in columns.values()}) != 1:
        ragged_log_message = "State file holds metric log columns of unequal length."
        raise CheckpointFormatError(ragged_log_message)
    for day, index, dyna, source_only in zip(*columns.values()):
        log.append(int(day), int(index), float(dyna), float(source_only))

    return DeploymentState(
        cycle=int(_scalar(extras, "state.cycle")),
        model=model,
        bank=bank,
        counter=int(_scalar(extras, "state.counter")),
        log=log,
    )


def save_state(state: DeploymentState, path: str) -> None:
    blob = encode_tensors(state.model.arch, state_tensors(state))
    with fsspec.open(path, "wb", auto_mkdir=True) as f:
        f.write(blob)
    logger.info(
        f"Wrote deployment state {path} (cycle {state.cycle}, "
        f"{len(state.bank)} bank entries)"
    )


def load_state(path: str) -> DeploymentState:
    try:
        with fsspec.open(path, "rb") as f:
            blob = f.read()
    except FileNotFoundError as e:
        missing_state_message = f"Deployment state not found: {path}"
        raise CheckpointFormatError(missing_state_message) from e
    return state_from_tensors(*decode_tensors(blob))
