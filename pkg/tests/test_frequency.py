import numpy as np
import pytest

from daynight.errors import DomainError, NonFiniteError, ShapeError
from daynight.harness.selftest import central_difference, relative_error
from daynight.numerics.autodiff import GradTape, Variable
from daynight.numerics.fourier import mirror_centered
from daynight.numerics.layers import abs_diff_mean
from daynight.prompt.frequency import (
    LowFreqPrompt,
    apply_prompt,
    low_freq_key,
    pad_one,
    prompt_extent,
    prompt_shape,
    recombine,
    spectral_decompose,
)


@pytest.mark.parametrize(
    ("size", "beta", "extent"),
    [(512, 0.01, 5), (64, 0.05, 3), (64, 0.001, 1), (8, 1.0, 8), (10, 0.25, 3)],
)
def test_prompt_extent(size, beta, extent):
    assert prompt_extent(size, beta) == extent


@pytest.mark.parametrize("beta", [0.0, -0.1, 1.5])
def test_prompt_extent_rejects_bad_ratios(beta):
    with pytest.raises(DomainError):
        prompt_extent(64, beta)


def test_prompt_shape():
    assert prompt_shape(1, 64, 64, 0.05) == (1, 3, 3)
    assert prompt_shape(2, 512, 64, 0.01) == (2, 5, 1)


def test_constant_image_amplitude_and_phase():
    amplitude, phase = spectral_decompose(np.full((1, 8, 8), 0.5))
    assert amplitude[0, 4, 4] == pytest.approx(32.0)
    assert phase[0, 4, 4] == 0.0
    off_center = amplitude.copy()
    off_center[0, 4, 4] = 0.0
    assert off_center.max() < 1e-9


def test_decompose_recombine_roundtrip(rng):
    x = rng.uniform(size=(2, 16, 12))
    assert np.max(np.abs(recombine(*spectral_decompose(x)) - x)) < 1e-9


def test_amplitude_is_shift_invariant(rng):
    x = rng.uniform(size=(1, 8, 8))
    shifted = np.roll(x, shift=(2, 3), axis=(-2, -1))
    assert np.max(np.abs(spectral_decompose(x)[0] - spectral_decompose(shifted)[0])) < 1e-9


def test_key_is_the_centered_crop():
    amplitude = np.arange(64.0 * 64).reshape(1, 64, 64)
    key = low_freq_key(amplitude, 0.05, image_id=7)
    assert key.image_id == 7
    assert key.values.tolist() == amplitude[0, 31:34, 31:34].ravel().tolist()


def test_key_of_a_constant_image_has_one_nonzero_entry():
    amplitude, _ = spectral_decompose(np.full((1, 64, 64), 0.3))
    key = low_freq_key(amplitude, 0.05)
    assert key.values.shape == (9,)
    assert int(np.sum(np.abs(key.values) > 1e-9)) == 1
    assert key.values[4] == pytest.approx(64 * 64 * 0.3)


def test_key_needs_a_three_dimensional_amplitude():
    with pytest.raises(ShapeError):
        low_freq_key(np.ones((8, 8)), 0.1)


def test_pad_one_places_the_prompt_at_the_center():
    multiplier = pad_one(np.full((1, 1, 1), 3.0), 4, 4)
    expected = np.ones((1, 4, 4))
    expected[0, 2, 2] = 3.0
    assert np.array_equal(multiplier, expected)


def test_identity_prompt_is_a_no_op(rng):
    x = rng.uniform(size=(1, 64, 64))
    prompt = LowFreqPrompt.identity((1, 3, 3), 0.05)
    assert np.max(np.abs(apply_prompt(x, prompt) - x)) < 1e-9


def test_full_spectrum_prompt_scales_the_image(rng):
    x = rng.uniform(size=(1, 8, 8))
    prompt = LowFreqPrompt(np.full((1, 8, 8), 2.0), 1.0)
    assert np.max(np.abs(apply_prompt(x, prompt) - 2 * x)) < 1e-9


def test_dc_prompt_adds_the_mean(rng):
    x = rng.uniform(size=(1, 8, 8))
    prompt = LowFreqPrompt(np.full((1, 1, 1), 2.0), 0.1)
    assert np.max(np.abs(apply_prompt(x, prompt) - (x + x.mean()))) < 1e-9


def test_batched_application_matches_single_images(rng):
    batch = rng.uniform(size=(3, 1, 16, 16))
    prompt = LowFreqPrompt(rng.uniform(0.5, 1.5, size=(1, 3, 3)), 0.2)
    together = apply_prompt(batch, prompt)
    for i in range(3):
        assert np.allclose(together[i], apply_prompt(batch[i], prompt))


def test_variable_prompt_returns_a_taped_variable(rng):
    x = rng.uniform(size=(1, 16, 16))
    tape = GradTape()
    values = Variable(np.ones((1, 3, 3)), requires_grad=True)
    out = apply_prompt(x, values, tape)
    assert isinstance(out, Variable)
    assert np.allclose(out.value, x)
    loss = abs_diff_mean(out, np.zeros_like(x), tape)
    (grad,) = tape.gradient(loss, [values])
    assert grad.shape == (1, 3, 3)
    assert np.any(grad != 0)


def test_symmetric_prompt_gradient_stays_symmetric(rng):
    x = rng.uniform(size=(1, 16, 16))
    tape = GradTape()
    values = Variable(np.ones((1, 3, 3)), requires_grad=True)
    loss = abs_diff_mean(apply_prompt(x, values, tape), np.full_like(x, 0.2), tape)
    (grad,) = tape.gradient(loss, [values])
    assert np.allclose(grad, grad[:, ::-1, ::-1])


def test_prompt_errors(rng):
    x = rng.uniform(size=(1, 4, 4))
    with pytest.raises(NonFiniteError):
        apply_prompt(x, np.full((1, 1, 1), np.inf))
    with pytest.raises(ShapeError):
        apply_prompt(x, np.ones((1, 5, 5)))
    with pytest.raises(ShapeError):
        apply_prompt(x, np.ones((2, 1, 1)))


def test_frozen_prompt_is_read_only():
    prompt = LowFreqPrompt.identity((1, 3, 3), 0.05).frozen()
    with pytest.raises(ValueError):
        prompt.values[0, 0, 0] = 2.0


def amplitude_ratio(x, prompt):
    before, _ = spectral_decompose(x)
    after, _ = spectral_decompose(apply_prompt(x, prompt))
    return after / before


def test_even_extent_multiplier_is_point_symmetric():
    multiplier = pad_one(np.array([[[1.05, 1.05], [1.05, 0.95]]]), 32, 32)
    assert np.array_equal(multiplier, mirror_centered(multiplier))
    assert multiplier[0, 15, 15] == multiplier[0, 17, 17] == 1.05
    assert multiplier[0, 16, 16] == 0.95


def test_even_extent_prompt_applies_in_full(rng):
    x = rng.uniform(size=(1, 32, 32))
    values = np.array([[[1.05, 1.05], [1.05, 0.95]]])
    ratio = amplitude_ratio(x, LowFreqPrompt(values, 0.05))
    assert np.allclose(ratio[:, 15:17, 15:17], values, atol=1e-9)
    assert ratio[0, 17, 17] == pytest.approx(1.05)
    assert ratio[0, 17, 16] == pytest.approx(1.05)
    assert ratio[0, 16, 17] == pytest.approx(1.05)


def test_window_pairs_share_their_mean():
    values = np.ones((1, 3, 3))
    values[0, 0, 0] = 2.0
    multiplier = pad_one(values, 8, 8)
    assert multiplier[0, 3, 3] == multiplier[0, 5, 5] == 1.5


def test_phase_is_preserved(rng):
    x = rng.uniform(size=(2, 16, 16))
    prompt = LowFreqPrompt(rng.uniform(0.5, 1.5, size=(2, 2, 2)), 0.1)
    amplitude, phase = spectral_decompose(x)
    _, prompted_phase = spectral_decompose(apply_prompt(x, prompt))
    keep = amplitude > 1e-12
    drift = np.abs(np.exp(1j * phase) - np.exp(1j * prompted_phase))
    assert np.max(drift[keep]) < 1e-8


@pytest.mark.parametrize("extent", [2, 3, 4])
def test_prompt_gradient_matches_finite_differences(rng, extent):
    x = rng.uniform(size=(1, 16, 16))
    target = rng.uniform(size=(1, 16, 16))
    start = rng.uniform(0.8, 1.2, size=(1, extent, extent))

    def loss_of(values, tape=None):
        return abs_diff_mean(apply_prompt(x, values, tape), target, tape)

    tape = GradTape()
    variable = Variable(start.copy(), requires_grad=True)
    (analytic,) = tape.gradient(loss_of(variable, tape), [variable])
    numeric = central_difference(lambda v: float(loss_of(Variable(v)).value), start)
    assert relative_error(analytic, numeric) < 1e-5
