"""
A minimal reverse-mode tape.

Operations in `daynight.numerics.layers` take `Variable` inputs and, when a
`GradTape` is supplied and any input requires a gradient, append one
`TapeRecord` holding the closure that maps output gradients to input
gradients. `GradTape.gradient` replays the records in reverse order, each
exactly once.

A tape is single-owner state: do not share one between threads.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from daynight.errors import ShapeError

GradFn = Callable[
    [Tuple[np.ndarray, ...]], Tuple[Optional[np.ndarray], ...]
]


class Variable:
    """
    A float64 array that may take part in a taped computation.

    Examples:
        >>> v = Variable([1.0, 2.0], requires_grad=True)
        >>> v.shape
        (2,)
        >>> v.requires_grad
        True
    """

    __slots__ = ("value", "requires_grad")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return (
            f"Variable(shape={self.value.shape}, "
            f"requires_grad={self.requires_grad})"
        )


def as_variable(x) -> Variable:
    return x if isinstance(x, Variable) else Variable(x)


@dataclass
class TapeRecord:
    name: str
    inputs: Tuple[Variable, ...]
    outputs: Tuple[Variable, ...]
    backward: GradFn


@dataclass
class GradTape:
    records: List[TapeRecord] = field(default_factory=list)

    def watching(self, *inputs: Variable) -> bool:
        return any(v.requires_grad for v in inputs)

    def record(
        self,
        name: str,
        inputs: Sequence[Variable],
        outputs: Sequence[Variable],
        backward: GradFn,
    ) -> None:
        for out in outputs:
            out.requires_grad = True
        self.records.append(
            TapeRecord(name, tuple(inputs), tuple(outputs), backward)
        )

    def gradient(
        self, loss: Variable, wrt: Sequence[Variable]
    ) -> List[np.ndarray]:
        """
        Reverse sweep from a scalar `loss`; returns d(loss)/d(w) per `wrt`.

        Variables the loss does not depend on receive zero gradients.
        """
        if loss.value.size != 1:
            non_scalar_message = (
                f"Gradient requires a scalar loss, got shape {loss.shape}."
            )
            raise ShapeError(non_scalar_message)

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for rec in reversed(self.records):
            out_grads = [grads.get(id(out)) for out in rec.outputs]
            if all(g is None for g in out_grads):
                continue
            filled = tuple(
                np.zeros_like(out.value) if g is None else g
                for out, g in zip(rec.outputs, out_grads)
            )
            in_grads = rec.backward(filled)
            for var, g in zip(rec.inputs, in_grads):
                if g is None or not var.requires_grad:
                    continue
                key = id(var)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = np.asarray(g, dtype=np.float64)

        return [
            grads.get(id(w), np.zeros_like(w.value)).reshape(w.shape)
            for w in wrt
        ]

    def __len__(self) -> int:
        return len(self.records)
