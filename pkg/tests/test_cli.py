"""Test cases for the cli package."""

import sys

import pytest
from omegaconf import OmegaConf

from daynight.cli.execute import (
    deploy_command,
    deploy_config,
    dispatch,
    dump_command,
    eval_command,
    execute_command,
    main,
    selftest_command,
    train_source_command,
)
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
    selftest_table,
    translate_argv,
)
from daynight.configuration import NightConfig, RunConfig
from daynight.data.dump import dump_samples, load_samples
from daynight.data.synth import target_stream
from daynight.errors import UsageError
from daynight.harness.deployment import run_deployment
from daynight.harness.selftest import CheckResult
from daynight.harness.state import save_state
from daynight.model.checkpoint import load_model, save_model


def test_command_group():
    assert sorted(COMMAND_CONFIGS) == [
        "deploy",
        "dump",
        "eval",
        "selftest",
        "train-source",
    ]


def test_deploy_config_defaults():
    cfg = deploy_config(DeployCommand(ckpt="source.dyna"))
    assert cfg.checkpoint == "source.dyna"
    assert cfg.test_ratio == 0.2
    assert cfg.night_enabled


def test_deploy_config_flags():
    cfg = deploy_config(
        DeployCommand(
            ckpt="source.dyna",
            ratio=0.5,
            target="A",
            night=False,
            cycles=4,
            infer_with_warmup=True,
            binarize_pseudo=True,
            handoff="student",
            preset="polyp",
        )
    )
    assert (cfg.test_ratio, cfg.target, cfg.cycles) == (0.5, "A", 4)
    assert not cfg.night_enabled
    assert cfg.day.infer_with_warmup
    assert cfg.day.prompt_lr == 0.01
    assert cfg.night.binarize_pseudo
    assert cfg.night.handoff == "student"


def test_deploy_config_file_replaces_the_preset(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(RunConfig(test_ratio=0.1, seed=9).to_json())
    cfg = deploy_config(
        DeployCommand(ckpt="x.dyna", config_file=str(path), preset="polyp")
    )
    assert (cfg.test_ratio, cfg.seed) == (0.1, 9)
    assert cfg.day.prompt_lr == RunConfig().day.prompt_lr


@pytest.mark.parametrize(
    "command", [DeployCommand(preset="lungs"), DeployCommand(ratio=0.3)]
)
def test_deploy_config_errors(command):
    with pytest.raises(UsageError):
        deploy_config(command)


def test_deployment_dir():
    cfg = RunConfig(target="A", test_ratio=0.1, seed=2, night_enabled=False)
    assert deployment_dir(cfg).endswith("A-r0.1-s2-nonight")
    assert deployment_dir(cfg.with_overrides(output_dir="here")) == "here"


def test_eval_command(tmp_path, model):
    path = str(tmp_path / "init.dyna")
    save_model(model, path)
    score = eval_command(EvalCommand(ckpt=path, target="A", n_target=4))
    assert 0.0 <= score <= 1.0


def test_errors_become_exit_codes(tmp_path):
    missing = EvalCommand(ckpt=str(tmp_path / "absent.dyna"))
    with pytest.raises(SystemExit) as info:
        execute_command(OmegaConf.create({}), missing)
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        execute_command(OmegaConf.create({}), SelftestCommand(seeds=0))
    assert info.value.code == 1


def test_dispatch_rejects_unknown_commands():
    with pytest.raises(UsageError):
        dispatch(object())


def test_selftest_command():
    results = selftest_command(SelftestCommand(seeds=1))
    assert all(r.passed for r in results)


def test_selftest_table():
    table = selftest_table([CheckResult("bank", 0.0, 0.0)])
    assert table.row_count == 1


def test_hydra_entry_point(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(
        sys, "argv", ["daynight", "command=selftest", "command.seeds=1"]
    )
    main()


@pytest.mark.slow
def test_train_source_command(tmp_path):
    out = str(tmp_path / "source.dyna")
    model = train_source_command(TrainSourceCommand(out=out, epochs=1))
    assert load_model(out).same_as(model)


@pytest.mark.parametrize(
    ("argv", "overrides"),
    [
        (
            ["deploy", "--ratio", "0.2", "--no-night"],
            ["command=deploy", "command.ratio=0.2", "command.night=false"],
        ),
        (
            ["deploy", "--ckpt=src.dyna", "--infer-with-warmup", "--target", "A"],
            [
                "command=deploy",
                "command.ckpt=src.dyna",
                "command.infer_with_warmup=true",
                "command.target=A",
            ],
        ),
        (
            ["train-source", "--out", "s.dyna", "--seed", "3"],
            ["command=train-source", "command.out=s.dyna", "command.seed=3"],
        ),
        (
            ["deploy", "--binarize-pseudo"],
            ["command=deploy", "command.binarize_pseudo=true"],
        ),
        (
            ["selftest", "--seeds", "2", "-c", "job"],
            ["command=selftest", "command.seeds=2", "-c", "job"],
        ),
        (
            ["--multirun", "command=deploy", "command.seed=0,1"],
            ["--multirun", "command=deploy", "command.seed=0,1"],
        ),
        ([], []),
    ],
)
def test_translate_argv(argv, overrides):
    assert translate_argv(argv) == overrides


def test_command_line_flags_reach_the_command(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setattr(sys, "argv", ["daynight", "selftest", "--seeds", "1"])
    main()


def test_dump_command_writes_a_loadable_stream(tmp_path):
    out = str(tmp_path / "stream")
    dump_command(DumpCommand(out=out, target="A", n_target=3))
    samples = load_samples(out)
    assert [s.index for s in samples] == [
        s.index for s in target_stream(0, "A", 3)
    ]


def test_deploy_command_resumes_on_dumped_samples(tmp_path, tiny_suite, tiny_source):
    ckpt, samples = str(tmp_path / "src.dyna"), str(tmp_path / "stream")
    save_model(tiny_source, ckpt)
    dump_samples(tiny_suite.target_b, samples)
    cfg = RunConfig(
        checkpoint=ckpt, test_ratio=0.5, cycles=1, night=NightConfig(epochs=1)
    )
    first = run_deployment(cfg, stream=tiny_suite.target_b)
    state = str(tmp_path / "state.dyna")
    save_state(first.state, state)
    report = deploy_command(
        DeployCommand(
            ckpt=ckpt,
            ratio=0.5,
            out=str(tmp_path / "report"),
            samples=samples,
            resume=state,
            preset="odoc",
        )
    )
    assert [d.day for d in report.summary.days] == [2]
    assert report.state.cycle == 2
    assert len(report.samples) == 10
