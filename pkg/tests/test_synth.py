import numpy as np
import pytest

from daynight.data.synth import (
    FOREGROUND_FRACTION,
    TARGET_SPECS,
    DomainSpec,
    apply_shift,
    benchmark_suite,
    gen_domain,
    render,
    stream_order,
    target_stream,
)
from daynight.errors import DomainError, EmptyDataError


def test_render_is_deterministic():
    a_image, a_mask = render(4, 17, size=32)
    b_image, b_mask = render(4, 17, size=32)
    assert np.array_equal(a_image, b_image)
    assert np.array_equal(a_mask, b_mask)
    other_image, _ = render(4, 18, size=32)
    assert not np.array_equal(a_image, other_image)


def test_identity_spec_is_the_renderer():
    assert DomainSpec(seed=5).is_identity
    image, mask = render(5, 2, size=32)
    [sample] = gen_domain(1, DomainSpec(seed=5), size=32, start=2)
    assert np.array_equal(sample.image, image)
    assert np.array_equal(sample.mask, mask)
    assert sample.index == 2


def test_masks_are_binary_with_bounded_foreground():
    lo, hi = FOREGROUND_FRACTION
    for sample in gen_domain(20, DomainSpec(seed=1), size=32):
        assert set(np.unique(sample.mask)) <= {0.0, 1.0}
        assert lo <= sample.foreground_fraction <= hi
        assert sample.image.min() >= 0.0
        assert sample.image.max() <= 1.0


@pytest.mark.parametrize("name", sorted(TARGET_SPECS))
def test_shifts_keep_masks_and_stay_in_range(name):
    spec = TARGET_SPECS[name]
    assert not spec.is_identity
    shifted = gen_domain(5, spec, size=32, start=9)
    source = gen_domain(5, DomainSpec(seed=spec.seed), size=32, start=9)
    for s, t in zip(source, shifted):
        assert np.array_equal(s.mask, t.mask)
        assert not np.allclose(s.image, t.image)
        assert t.image.min() >= 0.0
        assert t.image.max() <= 1.0


def test_contrast_pivots_about_one_half():
    image = np.array([[[0.25, 0.5, 0.75]]])
    out = apply_shift(image, DomainSpec(contrast=2.0))
    assert out.tolist() == [[[0.0, 0.5, 1.0]]]


def test_targets_share_scenes_in_their_own_order(tiny_suite):
    a = sorted(tiny_suite.target_a, key=lambda s: s.index)
    b = sorted(tiny_suite.target_b, key=lambda s: s.index)
    assert [s.index for s in a] == list(range(12, 22))
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.mask, sb.mask)
    assert [s.index - 12 for s in tiny_suite.target_a] == stream_order(0, "A", 10).tolist()
    assert [s.index - 12 for s in tiny_suite.target_b] == stream_order(0, "B", 10).tolist()


def test_suite_sizes(tiny_suite):
    assert len(tiny_suite.source_train) == 8
    assert len(tiny_suite.source_val) == 4
    assert len(tiny_suite.target("A")) == len(tiny_suite.target("B")) == 10
    assert tiny_suite.source_val[0].index == 8
    assert tiny_suite.source_train[0].image.shape == (1, 32, 32)


def test_suite_is_reproducible():
    a = benchmark_suite(seed=2, n_source_train=2, n_source_val=1, n_target=3, size=16)
    b = benchmark_suite(seed=2, n_source_train=2, n_source_val=1, n_target=3, size=16)
    for sa, sb in zip(a.target_b, b.target_b):
        assert sa.index == sb.index
        assert np.array_equal(sa.image, sb.image)


def test_unknown_targets(tiny_suite):
    with pytest.raises(DomainError):
        tiny_suite.target("C")
    with pytest.raises(DomainError):
        target_stream(0, "C", 2, size=16)


def test_empty_domain():
    with pytest.raises(EmptyDataError):
        gen_domain(0, DomainSpec())
