"""
Invariant suite: finite-difference gradient checks and closed-form oracles.

Each check returns a `CheckResult`; `run_selftest` gathers them and
`require_passing` turns failures into an `InvariantViolation`. The same
checks back the test suite and the ``selftest`` command.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence

import numpy as np

from daynight.adaptation.day import (
    DayRecord,
    DayRecordSet,
    prompt_alignment_loss,
    warmup_lambda,
    warmup_statistics,
)
from daynight.adaptation.night import (
    TrioModels,
    agreement_mask,
    run_night,
    student_loss,
)
from daynight.configuration import NightConfig
from daynight.errors import InvariantViolation
from daynight.logging import configure_logging
from daynight.model.segnet import (
    SegModelState,
    StatsMode,
    forward,
    init_model,
    predict,
)
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.fourier import fft2_centered, ifft2_centered
from daynight.numerics.layers import add, batch_norm, conv2d, mul_const, sigmoid
from daynight.prompt.bank import MemoryBank, init_prompt, support_weights
from daynight.prompt.frequency import (
    LowFreqPrompt,
    SpectralKey,
    apply_prompt,
)

logger = configure_logging("daynight.harness.selftest")

OP_TOLERANCE = 1e-5
LOSS_TOLERANCE = 1e-4
FOURIER_TOLERANCE = 1e-9
AVERAGE_TOLERANCE = 1e-10
FD_STEP = 1e-6


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def central_difference(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    coords: Iterable[tuple] = None,
    step: float = FD_STEP,
) -> np.ndarray:
    """
    Central-difference gradient of the scalar `f` at `x`.

    Only `coords` are perturbed when given; other entries stay zero.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    coords = list(np.ndindex(x.shape)) if coords is None else list(coords)
    for idx in coords:
        original = x[idx]
        x[idx] = original + step
        upper = f(x)
        x[idx] = original - step
        lower = f(x)
        x[idx] = original
        grad[idx] = (upper - lower) / (2.0 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """
    Examples:
        >>> import numpy as np
        >>> relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        0.0
    """
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), 1e-12)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def _sum_all(x: Variable, tape: GradTape = None) -> Variable:
    result = Variable(np.sum(x.value))
    if tape is not None and tape.watching(x):
        tape.record(
            "sum_all", (x,), (result,), lambda g: (np.full(x.shape, g[0]),)
        )
    return result


def _check_op(
    name: str,
    op: Callable[[List[Variable], GradTape], Sequence[Variable]],
    values: Sequence[np.ndarray],
    rng: np.random.Generator,
) -> CheckResult:
    """Compares taped and numeric gradients of a random projection of `op`."""
    untaped = op([Variable(v) for v in values], None)
    weights = [rng.normal(size=out.shape) for out in untaped]

    def objective(args: List[Variable], tape: GradTape = None) -> Variable:
        outputs = op(args, tape)
        terms = [
            _sum_all(mul_const(out, w, tape), tape)
            for out, w in zip(outputs, weights)
        ]
        return add(*terms, tape=tape)

    tape = GradTape()
    variables = [Variable(np.array(v), requires_grad=True) for v in values]
    analytic = tape.gradient(objective(variables, tape), variables)

    worst = 0.0
    for position, value in enumerate(values):

        def f(x, position=position):
            args = [Variable(v) for v in values]
            args[position] = Variable(x)
            return float(objective(args).value)

        numeric = central_difference(f, value)
        worst = max(worst, relative_error(analytic[position], numeric))
    return CheckResult(name, worst, OP_TOLERANCE)


def check_conv(rng: np.random.Generator) -> List[CheckResult]:
    x = rng.normal(size=(2, 2, 6, 6))
    weight = rng.normal(size=(3, 2, 3, 3))
    bias = rng.normal(size=3)
    return [
        _check_op(
            f"conv2d stride {stride}",
            lambda v, tape, stride=stride: (conv2d(*v, stride, tape),),
            (x, weight, bias),
            rng,
        )
        for stride in (1, 2)
    ]


def check_batch_norm(rng: np.random.Generator) -> List[CheckResult]:
    x = rng.normal(1.0, 2.0, size=(2, 3, 4, 4))
    gamma = rng.normal(1.0, 0.2, size=3)
    beta = rng.normal(size=3)
    mean = rng.normal(size=3)
    std = rng.uniform(0.5, 2.0, size=3)
    return [
        _check_op(
            "batch_norm batch statistics",
            lambda v, tape: batch_norm(*v, tape=tape),
            (x, gamma, beta),
            rng,
        ),
        _check_op(
            "batch_norm injected statistics",
            lambda v, tape: batch_norm(*v, mean=mean, std=std, tape=tape),
            (x, gamma, beta),
            rng,
        ),
    ]


def check_sigmoid(rng: np.random.Generator) -> CheckResult:
    x = rng.normal(size=(1, 2, 3, 3))
    return _check_op("sigmoid", lambda v, tape: (sigmoid(v[0], tape),), (x,), rng)


def check_apply_prompt(rng: np.random.Generator) -> List[CheckResult]:
    x = rng.uniform(size=(1, 16, 16))

    def op(v, tape):
        return (apply_prompt(x, v[0], tape),)

    return [
        _check_op(
            f"apply_prompt extent {extent}",
            op,
            (rng.uniform(0.5, 1.5, size=(1, extent, extent)),),
            rng,
        )
        for extent in (3, 2)
    ]


def check_alignment_loss(
    rng: np.random.Generator, size: int = 32
) -> CheckResult:
    """Prompt gradient of the alignment loss through the whole network."""
    model = init_model(int(rng.integers(2**31)))
    for key in model.running:
        if key.endswith(".mean"):
            model.running[key] = rng.normal(0.0, 0.3, size=model.running[key].shape)
        else:
            model.running[key] = rng.uniform(0.5, 1.5, size=model.running[key].shape)
    image = rng.uniform(size=(1, size, size))
    prompt = rng.uniform(0.8, 1.2, size=(1, 3, 3))
    batch_pass = forward(model, apply_prompt(image, prompt)[None], StatsMode.batch())
    warm = warmup_statistics(3, 5.0, batch_pass.trace)

    def loss_of(p, tape=None):
        prompted = apply_prompt(image[None], p, tape)
        trace = forward(model, prompted, StatsMode.batch(), tape).trace
        return prompt_alignment_loss(trace, warm, tape=tape)

    tape = GradTape()
    variable = Variable(prompt.copy(), requires_grad=True)
    (analytic,) = tape.gradient(loss_of(variable, tape), [variable])
    numeric = central_difference(lambda p: float(loss_of(p).value), prompt)
    return CheckResult(
        "prompt alignment loss", relative_error(analytic, numeric), LOSS_TOLERANCE
    )


def check_student_loss(rng: np.random.Generator) -> CheckResult:
    """Student weight gradient of the masked three-term loss on a 16x16 toy."""
    model = init_model(int(rng.integers(2**31)))
    images = rng.uniform(size=(2, 1, 16, 16))
    p_global = rng.uniform(0.05, 0.95, size=(2, 1, 16, 16))
    p_teacher = rng.uniform(0.05, 0.95, size=(2, 1, 16, 16))
    pseudo = rng.uniform(0.05, 0.95, size=(2, 1, 16, 16))
    mask = agreement_mask(pseudo, p_global, p_teacher, 0.5)
    checked = ("head.weight", "head.bias", "dec2.gamma", "enc1.weight")

    def loss_for(params: Dict[str, np.ndarray], tape=None, trainable=False):
        trial = SegModelState(model.arch, params, dict(model.running))
        result = forward(trial, images, StatsMode.batch(), tape, trainable)
        loss = student_loss(result.probs, p_global, p_teacher, pseudo, mask, tape)
        return loss, result

    tape = GradTape()
    loss, result = loss_for(dict(model.params), tape, trainable=True)
    analytic = tape.gradient(loss, [result.params[n] for n in checked])

    worst = 0.0
    for name, grad in zip(checked, analytic):

        def f(value, name=name):
            params = dict(model.params)
            params[name] = value
            return float(loss_for(params)[0].value)

        numeric = central_difference(f, model.params[name])
        worst = max(worst, relative_error(grad, numeric))
    return CheckResult("student loss", worst, LOSS_TOLERANCE)


def check_fourier(rng: np.random.Generator) -> List[CheckResult]:
    x = rng.normal(size=(2, 12, 10))
    spectrum = fft2_centered(x)
    identity = LowFreqPrompt.identity((2, 3, 3), 0.25)
    dc = LowFreqPrompt(np.full((2, 1, 1), 2.0), 0.05)
    shifted = x + x.mean(axis=(-2, -1), keepdims=True)
    energy = float(np.sum(x**2))
    return [
        CheckResult(
            "fft roundtrip",
            float(np.max(np.abs(ifft2_centered(spectrum) - x))),
            FOURIER_TOLERANCE,
        ),
        CheckResult(
            "identity prompt",
            float(np.max(np.abs(apply_prompt(x, identity) - x))),
            FOURIER_TOLERANCE,
        ),
        CheckResult(
            "DC prompt doubles the mean",
            float(np.max(np.abs(apply_prompt(x, dc) - shifted))),
            FOURIER_TOLERANCE,
        ),
        CheckResult(
            "Parseval",
            abs(float(np.sum(np.abs(spectrum) ** 2)) / (12 * 10) - energy) / energy,
            FOURIER_TOLERANCE,
        ),
    ]


def check_warmup() -> List[CheckResult]:
    lambdas = np.array([warmup_lambda(i, 5.0) for i in range(1, 10_001)])
    return [
        CheckResult("warm-up lambda at i=1", abs(lambdas[0] - 5.0 / 6.0), 1e-15),
        CheckResult(
            "warm-up lambda strictly decreasing",
            float(np.sum(np.diff(lambdas) >= 0)),
            0.0,
        ),
    ]


def check_agreement(rng: np.random.Generator) -> List[CheckResult]:
    corners = np.array(list(np.ndindex(2, 2, 2)), dtype=np.float64)
    maps = 0.3 + 0.4 * corners.T
    table = agreement_mask(maps[0], maps[1], maps[2], 0.5)
    expected = np.array([float(len(set(c)) == 1) for c in corners])

    pseudo, p_global, p_teacher = rng.uniform(size=(3, 2, 1, 8, 8))
    brute = np.zeros_like(pseudo)
    for idx in np.ndindex(pseudo.shape):
        votes = {pseudo[idx] > 0.5, p_global[idx] > 0.5, p_teacher[idx] > 0.5}
        brute[idx] = float(len(votes) == 1)
    fast = agreement_mask(pseudo, p_global, p_teacher, 0.5)
    return [
        CheckResult(
            "agreement truth table", float(np.sum(table != expected)), 0.0
        ),
        CheckResult("agreement brute force", float(np.sum(fast != brute)), 0.0),
    ]


def check_bank(rng: np.random.Generator) -> List[CheckResult]:
    capacity, m = 6, 4
    bank = MemoryBank(capacity)
    for i in range(10):
        prompt = LowFreqPrompt(rng.uniform(0.5, 1.5, size=(1, 3, 3)), 0.05)
        bank.push(SpectralKey(rng.uniform(0.1, 1.0, size=9), i), prompt)
    fifo_ok = [key.image_id for key, _ in bank] == list(range(4, 10))

    query = SpectralKey(rng.uniform(0.1, 1.0, size=9))
    support = bank.retrieve_support(query, m)
    brute = sorted(
        (
            (
                float(
                    np.dot(query.values, key.values)
                    / (np.linalg.norm(query.values) * np.linalg.norm(key.values))
                ),
                key.image_id,
            )
            for key, _ in bank
        ),
        key=lambda item: (-item[0], -item[1]),
    )[:m]
    retrieved = [
        (sim, next(k.image_id for k, p in bank if p is prompt))
        for prompt, sim in support
    ]
    topm_ok = [i for _, i in retrieved] == [i for _, i in brute]

    weights = support_weights([sim for _, sim in support])
    initialized = init_prompt(support, (1, 3, 3), 0.05).values
    stacked = np.stack([p.values for p, _ in support])
    outside = np.sum(
        (initialized < stacked.min(axis=0) - 1e-12)
        | (initialized > stacked.max(axis=0) + 1e-12)
    )
    return [
        CheckResult("bank FIFO capacity", 0.0 if fifo_ok else 1.0, 0.0),
        CheckResult("bank top-M retrieval", 0.0 if topm_ok else 1.0, 0.0),
        CheckResult("support weights sum", abs(float(weights.sum()) - 1.0), 1e-12),
        CheckResult("initialized prompt in convex hull", float(outside), 0.0),
    ]


def check_night_averages(
    rng: np.random.Generator, iterations: int = 37, size: int = 16
) -> List[CheckResult]:
    """
    Closed forms of the global running mean and the teacher EMA after
    `iterations` single-record iterations.
    """
    source = init_model(int(rng.integers(2**31)))
    image = rng.uniform(size=(1, size, size))
    record = DayRecord(
        image=image,
        prompt=LowFreqPrompt.identity((1, 1, 1), 0.05).frozen(),
        pseudo_label=predict(source, image[None])[0],
    )
    cfg = NightConfig(epochs=iterations, batch_size=1, lr=0.01, alpha=0.9)
    students: List[np.ndarray] = []
    globals_: List[np.ndarray] = []
    final: Dict[str, TrioModels] = {}

    def observe(trio: TrioModels) -> None:
        students.append(trio.student.to_flat())
        globals_.append(trio.global_student.to_flat())
        final["trio"] = trio

    run_night(source, DayRecordSet([record]), cfg, int(rng.integers(2**31)), observe)
    trio = final["trio"]
    f0 = source.to_flat()

    running_mean = (f0 + np.sum(students, axis=0)) / (len(students) + 1)
    n = len(globals_)
    ema = cfg.alpha**n * f0 + (1 - cfg.alpha) * sum(
        cfg.alpha ** (n - j) * g for j, g in enumerate(globals_, start=1)
    )
    return [
        CheckResult(
            f"global running mean after {n} iterations",
            relative_error(trio.global_student.to_flat(), running_mean),
            AVERAGE_TOLERANCE,
        ),
        CheckResult(
            f"teacher EMA after {n} iterations",
            relative_error(trio.teacher.to_flat(), ema),
            AVERAGE_TOLERANCE,
        ),
    ]


def gradient_suite(seeds: Iterable[int]) -> List[CheckResult]:
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        results += check_conv(rng)
        results += check_batch_norm(rng)
        results.append(check_sigmoid(rng))
        results += check_apply_prompt(rng)
        results.append(check_alignment_loss(rng))
        results.append(check_student_loss(rng))
    return results


def run_selftest(seeds: Iterable[int] = range(20)) -> List[CheckResult]:
    seeds = list(seeds)
    rng = np.random.default_rng(seeds[0] if seeds else 0)
    results = gradient_suite(seeds)
    results += check_fourier(rng)
    results += check_warmup()
    results += check_agreement(rng)
    results += check_bank(rng)
    results += check_night_averages(rng)
    failed = sum(not r.passed for r in results)
    logger.info(f"Self-test: {len(results) - failed}/{len(results)} checks passed")
    return results


def require_passing(results: Sequence[CheckResult]) -> None:
    failures = [r for r in results if not r.passed]
    if failures:
        lines = "\n".join(
            f"  {r.name}: {r.value:.3e} > {r.tolerance:.0e}" for r in failures
        )
        invariant_message = f"{len(failures)} invariant checks failed:\n{lines}"
        raise InvariantViolation(invariant_message)
