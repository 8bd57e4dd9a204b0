import numpy as np
import pytest

from smal.features import (
    Frame,
    ModalityConfig,
    downsample_color,
    encode,
    gradient_histogram,
)

SMALL_CFG = ModalityConfig(color_downsample=(2, 2), gradient_bins=4,
                           gradient_downsample=(1, 1))


def _gray(h, w, value=0.5):
    return Frame(np.full((h, w, 3), value))


def _step_frame():
    # 4x4, left half 0, right half 1 (vertical edge)
    px = np.zeros((4, 4, 3))
    px[:, 2:, :] = 1.0
    return Frame(px)


def _random_frame(rng, h=16, w=16):
    return Frame(rng.random((h, w, 3)))


def test_downsample_uniform_gray():
    out = downsample_color(_gray(4, 4), 2, 2)
    assert out.shape == (12,)
    assert np.allclose(out, 0.5)


def test_downsample_identity_case():
    rng = np.random.default_rng(3)
    px = rng.random((2, 2, 3))
    out = downsample_color(Frame(px), 2, 2)
    assert np.array_equal(out, px.ravel())


def test_downsample_block_means_forced():
    out = downsample_color(_step_frame(), 1, 2)
    assert np.allclose(out, [0, 0, 0, 1, 1, 1])


def test_downsample_rejects_oversize():
    with pytest.raises(ValueError):
        downsample_color(_gray(2, 2), 3, 1)


def test_gradient_constant_frame_zero():
    out = gradient_histogram(_gray(8, 8), SMALL_CFG)
    assert np.allclose(out, 0.0)


def test_gradient_vertical_step_hand_computed():
    # central differences on the 4x4 step: gx = 0.5 at the 8 pixels in the
    # two middle columns, gy = 0 everywhere, orientation 0 -> bin 0,
    # total mass 8 * 0.5 = 4
    out = gradient_histogram(_step_frame(), SMALL_CFG)
    assert np.allclose(out, [4.0, 0.0, 0.0, 0.0])


def test_gradient_rotated_step_permutes_bins():
    rotated = Frame(np.transpose(_step_frame().pixels, (1, 0, 2)))
    out = gradient_histogram(rotated, SMALL_CFG)
    # same mass, now at orientation pi/2 -> bin 2 of 4
    assert np.allclose(out, [0.0, 0.0, 4.0, 0.0])


def test_gradient_nonnegative():
    rng = np.random.default_rng(11)
    out = gradient_histogram(_random_frame(rng), ModalityConfig())
    assert out.min() >= 0.0


def test_encode_blocks_unit_norm():
    rng = np.random.default_rng(5)
    vec = encode(_random_frame(rng), ModalityConfig())
    for i in range(2):
        assert abs(np.linalg.norm(vec.block(i)) - 1.0) <= 1e-9


def test_encode_constant_frame():
    vec = encode(_gray(16, 16), ModalityConfig())
    assert np.allclose(vec.block(1), 0.0)  # gradient block all zero
    assert abs(np.linalg.norm(vec.block(0)) - 1.0) <= 1e-9


def test_encode_deterministic():
    rng = np.random.default_rng(7)
    px = rng.random((16, 16, 3))
    a = encode(Frame(px), ModalityConfig())
    b = encode(Frame(px.copy()), ModalityConfig())
    assert np.array_equal(a.values, b.values)
    assert a.modality_offsets == b.modality_offsets


def test_encode_scale_invariant_color_direction():
    rng = np.random.default_rng(9)
    px = rng.random((16, 16, 3))
    for c in (0.25, 0.5, 1.0):
        a = encode(Frame(px), ModalityConfig())
        b = encode(Frame(c * px), ModalityConfig())
        cos = float(a.block(0) @ b.block(0))
        assert cos >= 1.0 - 1e-9


def test_encode_constant_length():
    rng = np.random.default_rng(13)
    cfg = ModalityConfig()
    lengths = {
        encode(_random_frame(rng, 16 + i, 16 + 2 * i), cfg).values.size
        for i in range(5)
    }
    assert lengths == {cfg.feature_length}


def test_encode_offsets_cover_vector():
    rng = np.random.default_rng(17)
    cfg = ModalityConfig()
    vec = encode(_random_frame(rng), cfg)
    assert vec.modality_offsets[0] == 0
    assert vec.modality_offsets[-1] == vec.values.size
    assert list(vec.modality_offsets) == sorted(set(vec.modality_offsets))


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(np.zeros((4, 4)))  # missing channel axis
    with pytest.raises(ValueError):
        Frame(np.full((2, 2, 3), 2.0))  # out of range
    with pytest.raises(ValueError):
        Frame(np.full((2, 2, 3), np.nan))


def test_modality_config_validation():
    with pytest.raises(ValueError):
        ModalityConfig(gradient_bins=1)
    with pytest.raises(ValueError):
        ModalityConfig(color_downsample=(0, 4))
