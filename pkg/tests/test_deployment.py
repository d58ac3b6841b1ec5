import numpy as np
import pytest
from joblib import Memory

from daynight.configuration import NightConfig, RunConfig
from daynight.errors import EmptyDataError, UsageError
from daynight.harness.deployment import (
    NIGHT_DISABLED,
    NIGHT_SKIPPED,
    NIGHT_TRAINED,
    evaluate_offline,
    evaluate_seeds,
    run_deployment,
    seed_source,
    split_days,
    write_report,
)
from daynight.harness.state import load_state, save_state


@pytest.mark.parametrize(
    ("ratio", "days", "per_day"), [(0.1, 10, 10), (0.2, 5, 20), (0.5, 2, 50)]
)
def test_split_days(ratio, days, per_day):
    split = split_days(100, ratio)
    assert len(split) == days
    assert {len(d) for d in split} == {per_day}
    assert [i for d in split for i in d] == list(range(100))


def test_split_days_with_cycles():
    assert [len(d) for d in split_days(10, 0.5, cycles=1)] == [5]
    assert [len(d) for d in split_days(7, 0.5)] == [4, 3]


def tiny_config(**overrides):
    return RunConfig(night=NightConfig(epochs=1, batch_size=2)).with_overrides(
        test_ratio=0.5, **overrides
    )


def test_deployment_over_a_tiny_stream(tiny_suite, tiny_source):
    frozen = tiny_source.copy()
    report = run_deployment(tiny_config(), tiny_source, tiny_suite.target_b)
    summary = report.summary
    assert tiny_source.same_as(frozen)
    assert [d.night for d in summary.days] == [NIGHT_TRAINED, NIGHT_TRAINED]
    assert [d.n_samples for d in summary.days] == [5, 5]
    assert len(report.samples) == 10
    assert report.samples["day"].tolist() == [1] * 5 + [2] * 5
    assert report.samples["index"].tolist() == [s.index for s in tiny_suite.target_b]
    assert report.state.cycle == 2
    assert report.state.counter == 11
    assert len(report.state.bank) == 10
    assert not report.state.model.same_as(tiny_source)
    assert summary.offline_dice_source_only == pytest.approx(
        evaluate_offline(tiny_source, tiny_suite.target_b)
    )
    assert 0.0 <= summary.descent_rate <= 1.0


def test_extra_cycles_skip_empty_nights(tiny_suite, tiny_source):
    report = run_deployment(tiny_config(cycles=3), tiny_source, tiny_suite.target_b)
    assert report.summary.skipped_nights == [3]
    assert report.summary.days[-1].night == NIGHT_SKIPPED
    assert report.summary.days[-1].dice_dyna is None
    assert report.state.cycle == 3


def test_night_disabled_keeps_the_source(tiny_suite, tiny_source):
    report = run_deployment(
        tiny_config(night_enabled=False), tiny_source, tiny_suite.target_b
    )
    assert {d.night for d in report.summary.days} == {NIGHT_DISABLED}
    assert report.state.model.same_as(tiny_source)
    assert report.summary.offline_dice_final == report.summary.offline_dice_source_only


def test_reports_are_reproducible(tmp_path, tiny_suite, tiny_source):
    for name in ("a", "b"):
        report = run_deployment(tiny_config(), tiny_source, tiny_suite.target_a)
        write_report(report, str(tmp_path / name))
    for file in ("samples.csv", "summary.json", "model.dyna", "state.dyna"):
        assert (tmp_path / "a" / file).read_bytes() == (tmp_path / "b" / file).read_bytes()
    state = load_state(str(tmp_path / "a" / "state.dyna"))
    assert state.same_as(report.state)
    header = (tmp_path / "a" / "samples.csv").read_text().splitlines()[0]
    assert header == "day,index,dice_dyna,dice_source_only"


def test_deployment_errors(tiny_source):
    with pytest.raises(UsageError, match="checkpoint"):
        run_deployment(RunConfig())
    with pytest.raises(EmptyDataError):
        run_deployment(RunConfig(), tiny_source, [])
    with pytest.raises(UsageError):
        run_deployment(RunConfig(test_ratio=0.3), tiny_source, [])


@pytest.mark.slow
def test_day_and_night_beat_the_source_model(source_cache):
    cfg = RunConfig(test_ratio=0.2, target="B")
    full = evaluate_seeds(cfg, range(5), cache_dir=source_cache).median()
    day_only = evaluate_seeds(
        cfg.with_overrides(night_enabled=False), range(5), cache_dir=source_cache
    ).median()
    assert day_only["dice_dyna"] >= day_only["dice_source_only"] + 0.02
    assert full["dice_dyna"] >= day_only["dice_dyna"]
    assert full["offline_dice_final"] >= full["offline_dice_source_only"] + 0.04


@pytest.mark.slow
def test_gains_are_stable_across_ratios(source_cache):
    gains = []
    for ratio in (0.1, 0.2, 0.5):
        medians = evaluate_seeds(
            RunConfig(test_ratio=ratio), range(3), cache_dir=source_cache
        ).median()
        gains.append(medians["dice_dyna"] - medians["dice_source_only"])
    assert np.ptp(gains) < 0.05


def test_short_deployments_report_the_undeployed_tail(tiny_suite, tiny_source):
    report = run_deployment(tiny_config(cycles=1), tiny_source, tiny_suite.target_b)
    assert report.summary.undeployed == 5
    assert len(report.samples) == 5
    full = run_deployment(tiny_config(), tiny_source, tiny_suite.target_b)
    assert full.summary.undeployed == 0


def test_resumed_deployment_matches_an_uninterrupted_one(
    tmp_path, tiny_suite, tiny_source
):
    stream = tiny_suite.target_b
    whole = run_deployment(tiny_config(), tiny_source, stream)
    first = run_deployment(tiny_config(cycles=1), tiny_source, stream)
    path = str(tmp_path / "state.dyna")
    save_state(first.state, path)
    saved = load_state(path)
    resumed = run_deployment(tiny_config(), tiny_source, stream, resume=saved)
    assert saved.cycle == 1
    assert [d.day for d in resumed.summary.days] == [2]
    assert resumed.summary.resumed_from == 1
    assert resumed.state.same_as(whole.state)
    assert resumed.samples.equals(whole.samples)
    assert resumed.summary.dice_dyna == whole.summary.dice_dyna


def test_resume_must_fall_within_the_days(tiny_suite, tiny_source):
    first = run_deployment(tiny_config(cycles=3), tiny_source, tiny_suite.target_b)
    with pytest.raises(UsageError, match="resume"):
        run_deployment(
            tiny_config(), tiny_source, tiny_suite.target_b, resume=first.state
        )


@pytest.mark.slow
def test_source_models_are_cached_per_seed(source_cache):
    cached = Memory(source_cache, verbose=0).cache(seed_source)
    model = cached(0, 1, 0.01, 8)
    assert cached.check_call_in_cache(0, 1, 0.01, 8)
    assert cached(0, 1, 0.01, 8).same_as(model)
