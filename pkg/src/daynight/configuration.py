import dataclasses
import inspect
from dataclasses import dataclass, field, fields, replace
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Tuple,
    Type,
    get_type_hints,
)

import fsspec
from mashumaro.mixins.json import DataClassJSONMixin

from daynight.errors import UsageError

VALID_TEST_RATIOS = (0.1, 0.2, 0.5)
VALID_TARGETS = ("A", "B")
TEACHER_UPDATE_SOURCES = ("global", "student")
HANDOFF_MODELS = ("teacher", "global", "student")


def infer_type_from_default(value: Any) -> Type:
    """
    Infers or imputes a type from the default value of a parameter.
    Args:
        value: The default value of the parameter.
    Returns:
        The inferred type.
    """
    if value is None:
        return Optional[Any]
    elif value is inspect.Parameter.empty:
        return Any
    else:
        return type(value)


def create_dataclass_from_callable(
    callable_obj: Callable,
    overrides: Optional[Dict[str, Tuple[Type, Any]]] = None,
) -> List[Tuple[str, Type, Any]]:
    """
    Creates the fields of a dataclass from a `Callable` that includes all
    parameters of the callable as typed fields with default values inferred or
    taken from type hints. The function also accepts a dictionary containing
    parameter names together with a tuple of a type and default to allow
    specification of or override (un)typed defaults from the target callable.

    Args:
        callable_obj (Callable): The callable object to create a dataclass from.
        overrides (Optional[Dict[str, Tuple[Type, Any]]]): Dictionary to
        override inferred types and default values. Each dict value is a tuple
        (Type, default_value).

    Returns:
        Fields that can be used to construct a new dataclass type that
        represents the interface of the callable.

    Examples:
        >>> from daynight.data.synth import benchmark_suite
        >>> fields = create_dataclass_from_callable(
        ...     benchmark_suite, {"n_target": (int, 20)}
        ... )
        >>> BenchmarkInterface = dataclasses.make_dataclass(
        ...     "BenchmarkInterface", fields, bases=(DataClassJSONMixin,)
        ... )
        >>> benchmark = BenchmarkInterface()
        >>> isinstance(benchmark, DataClassJSONMixin)
        True
        >>> benchmark.to_dict() == {
        ...     "seed": 0, "n_source_train": 200, "n_source_val": 50,
        ...     "n_target": 20, "size": 64,
        ... }
        True
    """
    if inspect.isclass(callable_obj):
        func = callable_obj.__init__
    else:
        func = callable_obj

    signature = inspect.signature(func)
    type_hints = get_type_hints(func)

    fields_ = []
    for name, param in signature.parameters.items():
        if name == "self":
            continue

        if overrides and name in overrides:
            field_type, default_value = overrides[name]
        else:
            inferred_type = infer_type_from_default(param.default)
            field_type = type_hints.get(name, inferred_type)
            default_value = (
                param.default
                if param.default is not inspect.Parameter.empty
                else dataclasses.field(default_factory=lambda: None)
            )

        fields_.append((name, field_type, default_value))

    return fields_


@dataclass
class DayConfig(DataClassJSONMixin):
    """
    Daytime prompt adaptation settings.

    Attributes:
        prompt_lr: Adam learning rate of the single prompt step.
        beta: Prompt extent relative to the image size.
        bank_capacity: Memory bank capacity K.
        support_size: Support set size M.
        tau: Warm-up temperature.
        encoder_only_loss: Restrict the alignment loss to encoder BN layers.
        infer_with_warmup: Normalize the final inference with warm-up
            statistics instead of the source running statistics.
        normalize_with_warmup: Normalize the taped training pass with the
            warm-up statistics instead of the batch statistics.
        use_memory_bank: Initialize prompts from the bank (else identity).
        use_warmup: Blend batch statistics into the loss target.
    """

    prompt_lr: float = 0.05
    beta: float = 0.05
    bank_capacity: int = 40
    support_size: int = 16
    tau: float = 5.0
    encoder_only_loss: bool = False
    infer_with_warmup: bool = False
    normalize_with_warmup: bool = False
    use_memory_bank: bool = True
    use_warmup: bool = True


@dataclass
class NightConfig(DataClassJSONMixin):
    """
    Nighttime self-training settings.

    Attributes:
        epochs: Passes over the day's records.
        batch_size: Records per iteration.
        lr: SGD learning rate of the student.
        alpha: EMA rate of the teacher.
        threshold: Agreement threshold T.
        binarize_pseudo: Threshold pseudo-labels at T before use.
        use_global_student: Include the global student in the mask and loss.
        teacher_update_source: Model the teacher averages, ``global`` or
            ``student``.
        handoff: Trio member the next day runs with, ``teacher``, ``global``
            or ``student``.
    """

    epochs: int = 10
    batch_size: int = 4
    lr: float = 0.001
    alpha: float = 0.995
    threshold: float = 0.5
    binarize_pseudo: bool = False
    use_global_student: bool = True
    teacher_update_source: str = "global"
    handoff: str = "teacher"


@dataclass
class SourceConfig(DataClassJSONMixin):
    epochs: int = 30
    lr: float = 0.01
    batch_size: int = 8


@dataclass
class RunConfig(DataClassJSONMixin):
    """
    Complete deployment configuration, serializable to and from JSON.
    """

    day: DayConfig = field(default_factory=DayConfig)
    night: NightConfig = field(default_factory=NightConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    test_ratio: float = 0.2
    cycles: Optional[int] = None
    target: str = "B"
    night_enabled: bool = True
    seed: int = 0
    n_target: int = 100
    checkpoint: str = ""
    output_dir: str = ""

    def validate(self) -> "RunConfig":
        if self.test_ratio not in VALID_TEST_RATIOS:
            ratio_message = (
                f"test_ratio must be one of {VALID_TEST_RATIOS}, "
                f"got {self.test_ratio}."
            )
            raise UsageError(ratio_message)
        if self.target not in VALID_TARGETS:
            target_message = (
                f"target must be one of {VALID_TARGETS}, got {self.target!r}."
            )
            raise UsageError(target_message)
        if self.night.teacher_update_source not in TEACHER_UPDATE_SOURCES:
            teacher_message = (
                "night.teacher_update_source must be one of "
                f"{TEACHER_UPDATE_SOURCES}, "
                f"got {self.night.teacher_update_source!r}."
            )
            raise UsageError(teacher_message)
        if self.night.handoff not in HANDOFF_MODELS:
            handoff_message = (
                f"night.handoff must be one of {HANDOFF_MODELS}, "
                f"got {self.night.handoff!r}."
            )
            raise UsageError(handoff_message)
        if self.cycles is not None and self.cycles < 1:
            cycles_message = f"cycles must be >= 1, got {self.cycles}."
            raise UsageError(cycles_message)
        if not 0.0 < self.night.threshold < 1.0:
            threshold_message = (
                f"night.threshold must lie in (0, 1), got {self.night.threshold}."
            )
            raise UsageError(threshold_message)
        return self

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """
        Copy with every override that is not None applied.

        Keys name top-level fields or, with a ``day.``/``night.``/``source.``
        prefix, nested ones.

        Examples:
            >>> cfg = RunConfig().with_overrides(
            ...     test_ratio=0.5, seed=None, **{"day.encoder_only_loss": True}
            ... )
            >>> cfg.test_ratio, cfg.seed, cfg.day.encoder_only_loss
            (0.5, 0, True)
        """
        top: Dict[str, Any] = {}
        nested: Dict[str, Dict[str, Any]] = {}
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.rpartition(".")
            if section:
                nested.setdefault(section, {})[name] = value
            else:
                top[name] = value
        known = {f.name for f in fields(self)}
        unknown = (set(top) | set(nested)) - known
        if unknown:
            unknown_message = f"Unknown configuration keys: {sorted(unknown)}."
            raise UsageError(unknown_message)
        for section, values in nested.items():
            try:
                top[section] = replace(getattr(self, section), **values)
            except TypeError as e:
                nested_message = f"Unknown keys in section {section!r}: {e}"
                raise UsageError(nested_message) from e
        return replace(self, **top)


def odoc_config(**overrides: Any) -> RunConfig:
    """Optic disc/cup task settings (the defaults)."""
    return RunConfig().with_overrides(**overrides)


def polyp_config(**overrides: Any) -> RunConfig:
    """Polyp task settings: smaller learning rates, slower teacher."""
    base = RunConfig(
        day=DayConfig(prompt_lr=0.01, encoder_only_loss=True),
        night=NightConfig(lr=0.0003, alpha=0.999),
    )
    return base.with_overrides(**overrides)


PRESETS = {"odoc": odoc_config, "polyp": polyp_config}


def load_run_config(path: str) -> RunConfig:
    """Reads a JSON file mirroring `RunConfig`."""
    try:
        with fsspec.open(path, "r") as f:
            text = f.read()
    except FileNotFoundError as e:
        missing_config_message = f"Config file not found: {path}"
        raise UsageError(missing_config_message) from e
    try:
        return RunConfig.from_json(text)
    except Exception as e:
        bad_config_message = f"Config file {path} is not a valid RunConfig: {e}"
        raise UsageError(bad_config_message) from e
