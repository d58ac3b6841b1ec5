import numpy as np
import pytest

from daynight.adaptation.augment import (
    AugmentSpec,
    Geometric,
    QUARTER_TURNS,
    apply_geometric,
    apply_photometric,
    invert_geometric,
    sample_augment,
)
from daynight.errors import ShapeError


@pytest.mark.parametrize("g", list(Geometric))
def test_inverse_undoes_every_transform(rng, g):
    x = rng.uniform(size=(2, 8, 8))
    assert np.array_equal(invert_geometric(apply_geometric(x, g), g), x)


@pytest.mark.parametrize("g", [Geometric.identity, Geometric.hflip, Geometric.vflip])
def test_flips_work_on_rectangles(rng, g):
    x = rng.uniform(size=(1, 4, 6))
    assert np.array_equal(invert_geometric(apply_geometric(x, g), g), x)


@pytest.mark.parametrize("g", list(QUARTER_TURNS))
def test_quarter_turns_need_square_grids(rng, g):
    with pytest.raises(ShapeError):
        apply_geometric(rng.uniform(size=(1, 4, 6)), g)


def test_geometric_is_a_permutation(rng):
    x = rng.uniform(size=(1, 6, 6))
    for g in Geometric:
        moved = apply_geometric(x, g)
        assert np.array_equal(np.sort(moved, axis=None), np.sort(x, axis=None))


def test_rot90_direction():
    x = np.arange(4.0).reshape(1, 2, 2)
    assert apply_geometric(x, Geometric.rot90)[0].tolist() == [[1.0, 3.0], [0.0, 2.0]]


def test_non_square_sampling_never_turns():
    rng = np.random.default_rng(3)
    drawn = {sample_augment(rng, square=False).geometric for _ in range(200)}
    assert drawn == {Geometric.identity, Geometric.hflip, Geometric.vflip}


def test_sampling_is_reproducible():
    a = [sample_augment(np.random.default_rng(7)) for _ in range(3)]
    b = [sample_augment(np.random.default_rng(7)) for _ in range(3)]
    assert a == b


def test_photometric_is_deterministic(rng):
    x = rng.uniform(size=(1, 8, 8))
    spec = AugmentSpec(
        Geometric.identity,
        (("brightness", 0.1), ("noise", 0.03), ("blur", 0.7), ("gamma", 1.2)),
        noise_seed=11,
    )
    assert np.array_equal(apply_photometric(x, spec), apply_photometric(x, spec))


def test_photometric_ops(rng):
    x = rng.uniform(size=(1, 8, 8))
    brighter = apply_photometric(x, AugmentSpec(photometric=(("brightness", 0.1),)))
    assert np.allclose(brighter, x + 0.1)
    contrast = apply_photometric(x, AugmentSpec(photometric=(("contrast", 2.0),)))
    assert np.allclose(contrast, 2.0 * x - 0.5)
    constant = np.full((1, 8, 8), 0.4)
    blurred = apply_photometric(constant, AugmentSpec(photometric=(("blur", 0.9),)))
    assert np.allclose(blurred, constant)
    assert np.array_equal(apply_photometric(x, AugmentSpec()), x)


def test_unknown_photometric_op(rng):
    with pytest.raises(ValueError, match="sharpen"):
        apply_photometric(
            rng.uniform(size=(1, 4, 4)),
            AugmentSpec(photometric=(("sharpen", 1.0),)),
        )
