import math

import numpy as np
import pytest

from daynight.adaptation.day import DayRecord, DayRecordSet
from daynight.adaptation.night import (
    TrioModels,
    agreement_mask,
    night_inputs,
    night_iteration,
    run_night,
    student_loss,
)
from daynight.configuration import NightConfig
from daynight.errors import DomainError, EmptyDataError, ShapeError
from daynight.numerics.autodiff import Variable
from daynight.prompt.frequency import LowFreqPrompt


def make_records(n, seed=0, size=16):
    rng = np.random.default_rng(seed)
    return DayRecordSet(
        [
            DayRecord(
                image=rng.uniform(size=(1, size, size)),
                prompt=LowFreqPrompt(np.ones((1, 1, 1)), 0.05).frozen(),
                pseudo_label=rng.uniform(size=(1, size, size)),
                index=i,
            )
            for i in range(n)
        ]
    )


def test_agreement_truth_table():
    pseudo = np.array([0.9, 0.9, 0.1, 0.1, 0.9])
    p_global = np.array([0.8, 0.2, 0.3, 0.1, 0.6])
    p_teacher = np.array([0.7, 0.9, 0.2, 0.9, 0.5])
    mask = agreement_mask(pseudo, p_global, p_teacher, 0.5)
    assert mask.tolist() == [1.0, 0.0, 1.0, 0.0, 0.0]


def test_agreement_without_global_student():
    mask = agreement_mask(np.array([0.9, 0.1]), None, np.array([0.8, 0.7]))
    assert mask.tolist() == [1.0, 0.0]


def test_agreement_shapes_must_match():
    with pytest.raises(ShapeError):
        agreement_mask(np.zeros(3), np.zeros(3), np.zeros(4))


def test_student_loss_at_one_half():
    p = Variable(np.full((1, 1, 4, 4), 0.5))
    refs = np.random.default_rng(0).uniform(size=(1, 1, 4, 4))
    loss = student_loss(p, refs, refs, refs, np.ones((1, 1, 4, 4)))
    assert float(loss.value) == pytest.approx(3 * math.log(2))
    two_terms = student_loss(p, None, refs, refs, np.ones((1, 1, 4, 4)))
    assert float(two_terms.value) == pytest.approx(2 * math.log(2))


def test_student_loss_needs_a_binary_mask():
    p = Variable(np.full((2,), 0.5))
    with pytest.raises(DomainError):
        student_loss(p, None, np.ones(2), np.ones(2), np.array([1.0, 0.5]))


def test_trio_alpha_domain(model):
    with pytest.raises(DomainError):
        TrioModels.from_source(model, 1.5)
    trio = TrioModels.from_source(model, 0.9)
    assert trio.r == 1
    assert trio.teacher.same_as(model)


def test_night_inputs_share_geometry():
    records = make_records(3)
    cfg = NightConfig(binarize_pseudo=True)
    strong, weak, labels = night_inputs(list(records), np.random.default_rng(0), cfg)
    assert strong.shape == weak.shape == labels.shape == (3, 1, 16, 16)
    assert set(np.unique(labels)) <= {0.0, 1.0}


def test_night_iteration_bookkeeping(model):
    trio = TrioModels.from_source(model, 0.9)
    loss = night_iteration(
        trio, list(make_records(2)), NightConfig(), np.random.default_rng(0)
    )
    assert np.isfinite(loss)
    assert trio.r == 2
    assert not trio.student.same_as(model)
    assert not trio.teacher.same_as(model)


@pytest.mark.parametrize(
    "cfg",
    [
        NightConfig(epochs=1, teacher_update_source="student"),
        NightConfig(epochs=1, use_global_student=False),
        NightConfig(epochs=1, binarize_pseudo=True),
    ],
)
def test_night_variants_run(model, cfg):
    teacher = run_night(model, make_records(3), cfg)
    assert not teacher.same_as(model)


def test_run_night_leaves_source_and_clears_records(model):
    frozen = model.copy()
    records = make_records(5)
    seen = []
    cfg = NightConfig(epochs=2, batch_size=2)
    run_night(model, records, cfg, on_iteration=lambda t: seen.append(t.r))
    assert model.same_as(frozen)
    assert len(records) == 0
    assert seen == [2, 3, 4, 5, 6, 7]


def test_zero_epochs_returns_a_source_copy(model):
    teacher = run_night(model, make_records(2), NightConfig(epochs=0))
    assert teacher.same_as(model)
    assert teacher is not model


def test_run_night_is_deterministic(model):
    cfg = NightConfig(epochs=1, batch_size=2)
    a = run_night(model, make_records(4), cfg, seed=[3, 1])
    b = run_night(model, make_records(4), cfg, seed=[3, 1])
    assert a.same_as(b)


def test_run_night_errors(model):
    with pytest.raises(EmptyDataError):
        run_night(model, DayRecordSet(), NightConfig())
    with pytest.raises(DomainError):
        run_night(model, make_records(1), NightConfig(batch_size=0))


@pytest.mark.parametrize(
    ("handoff", "attribute"),
    [("teacher", "teacher"), ("global", "global_student"), ("student", "student")],
)
def test_handoff_returns_the_named_trio_member(model, handoff, attribute):
    trios = []
    cfg = NightConfig(epochs=1, batch_size=2, handoff=handoff)
    handed = run_night(model, make_records(4), cfg, on_iteration=trios.append)
    assert handed is getattr(trios[-1], attribute)


def test_handoff_must_name_a_trio_member(model):
    with pytest.raises(DomainError):
        run_night(model, make_records(1), NightConfig(handoff="source"))
    with pytest.raises(DomainError):
        TrioModels.from_source(model, 0.9).member("source")


def test_alpha_one_freezes_the_teacher(model):
    cfg = NightConfig(epochs=1, batch_size=2, alpha=1.0)
    teacher = run_night(model, make_records(4), cfg)
    assert teacher.same_as(model)
