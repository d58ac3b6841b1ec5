import os
from textwrap import dedent
from typing import List, Sequence

import rich.table
from hydra.conf import HelpConf, HydraConf, JobConf

from daynight.cli.execution_config import COMMAND_CONFIGS
from daynight.configuration import RunConfig
from daynight.constants import DEFAULT_OUTPUT_DIR
from daynight.harness.selftest import CheckResult


HYDRA_OPTIONS = frozenset(
    {
        "--help",
        "--hydra-help",
        "--version",
        "--cfg",
        "--resolve",
        "--package",
        "--run",
        "--multirun",
        "--shell-completion",
        "--config-path",
        "--config-name",
        "--config-dir",
        "--experimental-rerun",
        "--info",
    }
)

# flags that never take a value; the rest read the next argument when it is
# not itself an option
SWITCHES = frozenset(
    {"night", "infer-with-warmup", "binarize-pseudo", "encoder-only-loss"}
)


def translate_argv(args: Sequence[str]) -> List[str]:
    """
    Rewrites ``<command> --option value`` arguments as hydra overrides.

    A leading command name selects the `command` group, ``--name value`` and
    ``--name=value`` set ``command.name``, and ``--no-name`` sets it to
    false. Hydra's own options and arguments that are already overrides pass
    through unchanged.

    Examples:
        >>> translate_argv(["deploy", "--ratio", "0.2", "--no-night"])
        ['command=deploy', 'command.ratio=0.2', 'command.night=false']
        >>> translate_argv(["command=eval", "command.target=A"])
        ['command=eval', 'command.target=A']
    """
    translated: List[str] = []
    rest = list(args)
    if rest and rest[0] in COMMAND_CONFIGS:
        translated.append(f"command={rest.pop(0)}")
    while rest:
        arg = rest.pop(0)
        option, has_value, value = arg.partition("=")
        if not option.startswith("--") or option in HYDRA_OPTIONS:
            translated.append(arg)
            continue
        name = option[2:]
        if not has_value:
            if name.startswith("no-") and name[3:] in SWITCHES:
                name, value = name[3:], "false"
            elif name in SWITCHES or not rest or rest[0].startswith("--"):
                value = "true"
            else:
                value = rest.pop(0)
        translated.append(f"command.{name.replace('-', '_')}={value}")
    return translated


def deployment_dir(cfg: RunConfig) -> str:
    """Report directory of a deployment, unless one was given explicitly."""
    if cfg.output_dir:
        return cfg.output_dir
    night = "" if cfg.night_enabled else "-nonight"
    name = f"{cfg.target}-r{cfg.test_ratio}-s{cfg.seed}{night}"
    return os.path.join(DEFAULT_OUTPUT_DIR, name)


def selftest_table(results: Sequence[CheckResult]) -> rich.table.Table:
    table = rich.table.Table(title="selftest", header_style="bold")
    table.add_column("check")
    table.add_column("value", justify="right")
    table.add_column("tolerance", justify="right")
    table.add_column("status")
    for r in results:
        status = "[green]ok" if r.passed else "[bold red]FAIL"
        table.add_row(r.name, f"{r.value:.3e}", f"{r.tolerance:.0e}", status)
    return table


def generate_hydra_config() -> HydraConf:
    return HydraConf(
        defaults=[
            {"output": "default"},
            {"launcher": "joblib"},
            {"sweeper": "basic"},
            {"help": "default"},
            {"hydra_help": "default"},
            {"hydra_logging": "none"},
            {"job_logging": "none"},
            {"callbacks": None},
            {"env": "default"},
        ],
        help=HelpConf(
            header=dedent(
                """
                This is the ${hydra.help.app_name} help accessible via `${hydra.help.app_name} -h`.

                ${hydra.help.app_name} adapts a segmentation model trained on a source domain to a
                stream of target images. Each day adapts a frequency prompt per image against the
                source batch-norm statistics; each night self-trains the model on the day's
                pseudo-labels with a student, a global student and an EMA teacher.

                Select a command by name or with `command=<name>`:

                  * `train-source`  train the source model and write its checkpoint
                  * `deploy`        run day-night cycles on a target stream and write a report
                  * `eval`          offline Dice of a checkpoint on a target stream
                  * `dump`          write a target stream as a sample directory
                  * `selftest`      gradient and invariant checks

                Use `${hydra.help.app_name} -c job` to view the composed configuration alone.

                Exit codes: 0 success, 1 usage error, 2 data or format error,
                3 invariant violation.
                """
            ),
            footer=dedent(
                """
                Options follow the command, e.g.:

                  * `${hydra.help.app_name} deploy --ckpt outputs/source.dyna --ratio 0.2 --target B --no-night`
                  * `${hydra.help.app_name} deploy --samples outputs/streams --resume outputs/deployments/B-r0.2-s0/state.dyna`

                or are overridden with hydra syntax:

                  * `${hydra.help.app_name} command=train-source command.out=outputs/source.dyna`
                  * `${hydra.help.app_name} command=deploy command.ratio=0.2 command.target=B \\
                       command.night=false`
                  * `${hydra.help.app_name} command=deploy command.preset=polyp \\
                       command.config_file=run.json command.seed=3`
                  * `${hydra.help.app_name} command=eval command.ckpt=outputs/source.dyna command.target=A`
                  * `${hydra.help.app_name} command=selftest command.seeds=5`

                Sweeps run in parallel through the joblib launcher:

                  * `${hydra.help.app_name} --multirun command=deploy command.seed=0,1,2`

                Use `${hydra.help.app_name} --hydra-help` to view the hydra help, including the
                commands to install shell tab completion.
                """
            ),
            template=dedent(
                """
                ${hydra.help.header}
                == Configuration groups ==
                First override default group values (group=option)

                $APP_CONFIG_GROUPS

                == Config ==
                Then override any element in the config (foo.bar=value)

                $CONFIG
                ${hydra.help.footer}
                """
            ),
        ),
        job=JobConf(name="daynight"),
    )
