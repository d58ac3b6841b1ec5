import sys
from typing import List, Union

import rich
import rich.syntax
import rich.tree
from dotenv import load_dotenv
from hydra_zen import ZenStore, make_config, to_yaml, zen
from omegaconf import DictConfig

from daynight.cli.execution_config import (
    COMMAND_CONFIGS,
    DeployCommand,
    DumpCommand,
    EvalCommand,
    SelftestCommand,
    TrainSourceCommand,
)
from daynight.cli.execution_utils import (
    deployment_dir,
    generate_hydra_config,
    selftest_table,
    translate_argv,
)
from daynight.configuration import PRESETS, RunConfig, load_run_config
from daynight.data.dump import dump_samples, load_samples
from daynight.data.synth import benchmark_suite, target_stream
from daynight.errors import DayNightError, UsageError
from daynight.harness.deployment import (
    DeploymentReport,
    evaluate_offline,
    run_deployment,
    write_report,
)
from daynight.harness.selftest import CheckResult, require_passing, run_selftest
from daynight.harness.state import load_state
from daynight.logging import configure_logging
from daynight.model.checkpoint import load_model, save_model
from daynight.model.segnet import SegModelState
from daynight.model.training import train_source

logger = configure_logging("daynight.cli.execute")

Command = Union[
    TrainSourceCommand, DeployCommand, EvalCommand, DumpCommand, SelftestCommand
]


def train_source_command(command: TrainSourceCommand) -> SegModelState:
    suite = benchmark_suite(seed=command.seed)
    source = RunConfig().source
    model = train_source(
        suite.source_train,
        epochs=command.epochs if command.epochs is not None else source.epochs,
        lr=command.lr if command.lr is not None else source.lr,
        seed=command.seed,
        batch_size=source.batch_size,
    )
    save_model(model, command.out)
    logger.info(
        f"Source validation Dice {evaluate_offline(model, suite.source_val):.4f}"
    )
    return model


def deploy_config(command: DeployCommand) -> RunConfig:
    """Preset or config file, then every flag that was given."""
    if command.config_file:
        base = load_run_config(command.config_file)
    elif command.preset in PRESETS:
        base = PRESETS[command.preset]()
    else:
        unknown_preset_message = (
            f"Unknown preset {command.preset!r}; expected one of "
            f"{sorted(PRESETS)}."
        )
        raise UsageError(unknown_preset_message)
    return base.with_overrides(
        checkpoint=command.ckpt,
        test_ratio=command.ratio,
        target=command.target,
        output_dir=command.out,
        seed=command.seed,
        night_enabled=command.night,
        cycles=command.cycles,
        **{
            "day.infer_with_warmup": command.infer_with_warmup,
            "day.encoder_only_loss": command.encoder_only_loss,
            "night.binarize_pseudo": command.binarize_pseudo,
            "night.handoff": command.handoff,
        },
    ).validate()


def deploy_command(command: DeployCommand) -> DeploymentReport:
    cfg = deploy_config(command)
    stream = load_samples(command.samples) if command.samples else None
    resume = load_state(command.resume) if command.resume else None
    report = run_deployment(cfg, stream=stream, resume=resume)
    write_report(report, deployment_dir(cfg))
    summary = report.summary
    logger.info(
        f"Online Dice {summary.dice_dyna:.4f} vs source-only "
        f"{summary.dice_source_only:.4f}"
    )
    return report


def eval_command(command: EvalCommand) -> float:
    model = load_model(command.ckpt)
    stream = target_stream(command.seed, command.target, command.n_target)
    score = evaluate_offline(model, stream)
    rich.print(f"{command.target}: offline Dice {score:.4f}")
    return score


def dump_command(command: DumpCommand) -> List[str]:
    stream = target_stream(command.seed, command.target, command.n_target)
    return dump_samples(stream, command.out)


def selftest_command(command: SelftestCommand) -> List[CheckResult]:
    if command.seeds < 1:
        seeds_message = f"selftest needs seeds >= 1, got {command.seeds}."
        raise UsageError(seeds_message)
    results = run_selftest(range(command.seeds))
    rich.print(selftest_table(results))
    require_passing(results)
    return results


def dispatch(command: Command):
    if isinstance(command, TrainSourceCommand):
        return train_source_command(command)
    if isinstance(command, DeployCommand):
        return deploy_command(command)
    if isinstance(command, EvalCommand):
        return eval_command(command)
    if isinstance(command, DumpCommand):
        return dump_command(command)
    if isinstance(command, SelftestCommand):
        return selftest_command(command)
    unknown_command_message = (
        f"Unknown command {type(command).__name__}; expected one of "
        f"{sorted(COMMAND_CONFIGS)}."
    )
    raise UsageError(unknown_command_message)


def execute_command(zen_cfg: DictConfig, command: Command) -> None:
    """
    Renders the composed configuration and runs the selected command.

    A `DayNightError` ends the process with the exit code it carries.
    """
    config_yaml = to_yaml(zen_cfg)
    tree = rich.tree.Tree("execute_command", style="dim", guide_style="dim")
    tree.add(rich.syntax.Syntax(config_yaml, "yaml", theme="monokai"))
    rich.print(tree)

    try:
        dispatch(command)
    except DayNightError as e:
        logger.error(f"{type(e).__name__}: {e}")
        sys.exit(e.exit_code)


def main() -> None:
    load_dotenv()
    sys.argv = [sys.argv[0], *translate_argv(sys.argv[1:])]

    store = ZenStore(
        name="daynight",
        deferred_to_config=True,
        deferred_hydra_store=True,
    )
    store(generate_hydra_config())

    command_store = store(group="command")
    for name, conf in COMMAND_CONFIGS.items():
        command_store(conf, name=name)

    ExecuteCommandConf = make_config(
        hydra_defaults=["_self_", {"command": "selftest"}],
        command=None,
    )
    store(ExecuteCommandConf, name="execute_command")
    store.add_to_hydra_store(overwrite_ok=True)

    zen(execute_command).hydra_main(
        config_path=None,
        config_name="execute_command",
        version_base="1.3",
    )


if __name__ == "__main__":
    main()
