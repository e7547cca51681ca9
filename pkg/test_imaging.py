#!/usr/bin/env python3
"""
Image loading/saving and paired augmentation tests
"""

import numpy as np
import pytest
from PIL import Image

from relic_sketch.errors import ContractError, DataError, DimensionError, ImageFormatError, ParameterError
from relic_sketch.parsers.image_parser import GrayImage, load_gray, save_gray
from relic_sketch.utils.augmentation import AugmentationSpec, CropSpec, augment


def test_gray_image_rejects_out_of_range():
    with pytest.raises(ContractError):
        GrayImage([[0.0, 1.5]])
    with pytest.raises(ContractError):
        GrayImage([[np.nan]])
    with pytest.raises(DimensionError):
        GrayImage(np.zeros(4))


def test_png_round_trip_is_8bit_exact(tmp_path):
    levels = np.arange(256, dtype=np.float64).reshape(16, 16) / 255.0
    path = tmp_path / "levels.png"
    save_gray(GrayImage(levels), path)
    assert np.array_equal(load_gray(path).pixels, levels)


def test_pgm_round_trip(tmp_path):
    pixels = np.round(np.linspace(0, 1, 12).reshape(3, 4) * 255) / 255
    path = tmp_path / "ramp.pgm"
    save_gray(GrayImage(pixels), path)
    assert np.allclose(load_gray(path).pixels, pixels)


def test_display_invert_flips_polarity(tmp_path):
    lines = np.zeros((4, 4))
    lines[1, :] = 1.0
    path = tmp_path / "sketch.png"
    save_gray(GrayImage(lines), path, display_invert=True)
    stored = np.asarray(Image.open(path))
    assert stored[1].tolist() == [0, 0, 0, 0]
    assert stored[0].tolist() == [255, 255, 255, 255]
    assert load_gray(path, display_invert=True) == GrayImage(lines)


def test_rgb_converted_to_luminance(tmp_path):
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0] = 255
    path = tmp_path / "red.png"
    Image.fromarray(rgb).save(path)
    assert np.allclose(load_gray(path).pixels, 0.299, atol=1e-12)


def test_sixteen_bit_png(tmp_path):
    raw = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
    path = tmp_path / "deep.png"
    Image.fromarray(raw).save(path)
    assert np.allclose(load_gray(path).pixels, raw / 65535.0)


def test_unsupported_format(tmp_path):
    path = tmp_path / "photo.bmp"
    Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(path)
    with pytest.raises(ImageFormatError):
        load_gray(path)
    with pytest.raises(ImageFormatError):
        save_gray(GrayImage(np.zeros((2, 2))), tmp_path / "out.jpg")


def test_missing_and_corrupt_files(tmp_path):
    with pytest.raises(DataError):
        load_gray(tmp_path / "nope.png")
    corrupt = tmp_path / "corrupt.png"
    corrupt.write_bytes(b"not an image")
    with pytest.raises(ImageFormatError):
        load_gray(corrupt)


def test_default_augmentation_variants():
    rng = np.random.default_rng(0)
    image = GrayImage(rng.random((5, 7)))
    label = GrayImage((rng.random((5, 7)) > 0.8).astype(float))
    spec = AugmentationSpec.default()
    pairs = augment(image, label, spec)
    assert len(pairs) == spec.variant_count == 8
    assert pairs[0][0] == image and pairs[0][1] == label
    for augmented, augmented_label in pairs:
        assert augmented.shape == augmented_label.shape
        assert sorted(augmented.pixels.ravel()) == sorted(image.pixels.ravel())


def test_augmentation_keeps_pixel_correspondence():
    rng = np.random.default_rng(1)
    values = rng.random((6, 6))
    spec = AugmentationSpec(horizontal_flip=True, vertical_flip=True, rotations=[0, 1, 2, 3],
                            crop=CropSpec(size=4, count=3, seed=5))
    for augmented, label in augment(GrayImage(values), GrayImage(values), spec):
        assert augmented == label
        assert augmented.shape == (4, 4)


def test_identity_spec():
    image = GrayImage(np.eye(3))
    assert augment(image, image, AugmentationSpec()) == [(image, image)]


def test_augmentation_errors():
    image = GrayImage(np.zeros((4, 4)))
    with pytest.raises(ContractError):
        augment(image, GrayImage(np.zeros((4, 5))), AugmentationSpec())
    with pytest.raises(ParameterError):
        augment(image, image, AugmentationSpec(rotations=[5]))
    with pytest.raises(ContractError):
        augment(image, image, AugmentationSpec(crop=CropSpec(size=8, count=1)))
