import math

import numpy as np
import pytest
from PIL import Image as PILImage

from pixeldeflect.images import (
    ImageFormatError,
    load_f32grid,
    load_image,
    normalized_rmse,
    rgb_to_ycbcr,
    save_f32grid,
    save_image,
    ycbcr_to_rgb,
)


def random_image(rng, h=16, w=16, c=3):
    return rng.random((h, w, c))


class TestPngIO:
    def test_byte_scale_endpoints(self, tmp_path):
        raw = np.array([[[255, 0, 128]]], dtype=np.uint8)
        path = tmp_path / "px.png"
        PILImage.fromarray(np.repeat(raw, 3, axis=1), mode="RGB").save(path)
        img = load_image(path)
        assert img[0, 0, 0] == 1.0
        assert img[0, 0, 1] == 0.0
        # independent oracle: exact rational division
        assert img[0, 0, 2] == pytest.approx(128 / 255, abs=0)

    def test_round_trip_bit_identical_for_quantized(self, tmp_path):
        # every representable byte value appears
        values = np.arange(256, dtype=np.float64) / 255.0
        img = np.stack([values.reshape(16, 16)] * 3, axis=-1)
        path = tmp_path / "rt.png"
        save_image(img, path)
        again = load_image(path)
        assert np.array_equal(img, again)

    def test_half_rounds_up(self, tmp_path):
        img = np.full((4, 4, 3), 0.5)
        path = tmp_path / "half.png"
        save_image(img, path)
        assert np.asarray(PILImage.open(path))[0, 0, 0] == 128

    def test_alpha_dropped(self, tmp_path):
        rgba = np.zeros((4, 4, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 7
        path = tmp_path / "a.png"
        PILImage.fromarray(rgba, mode="RGBA").save(path)
        img = load_image(path)
        assert img.shape == (4, 4, 3)
        assert img[0, 0, 0] == pytest.approx(200 / 255, abs=0)

    def test_grayscale_loads_single_channel(self, tmp_path):
        path = tmp_path / "g.png"
        PILImage.fromarray(np.full((5, 6), 9, dtype=np.uint8), mode="L").save(path)
        img = load_image(path)
        assert img.shape == (5, 6, 1)

    def test_16bit_rejected(self, tmp_path):
        path = tmp_path / "deep.png"
        PILImage.fromarray(np.zeros((4, 4), dtype=np.uint16), mode="I;16").save(path)
        with pytest.raises(ImageFormatError, match="bit depth"):
            load_image(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(Exception):
            load_image(tmp_path / "nope.png")

    def test_out_of_range_rejected_on_save(self, tmp_path):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            save_image(np.full((2, 2, 3), 1.5), tmp_path / "bad.png")


class TestF32Grid:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        img = rng.random((5, 7, 3)).astype(np.float32).astype(np.float64)
        path = tmp_path / "img.f32"
        save_image(img, path)
        again = load_image(path)
        assert np.array_equal(img, again)

    def test_two_dimensional_maps(self, tmp_path):
        amap = np.linspace(0, 1, 12).reshape(3, 4)
        path = tmp_path / "map.f32"
        save_f32grid(amap, path)
        again = load_f32grid(path)
        assert again.shape == (3, 4, 1)
        assert np.allclose(again[:, :, 0], amap, atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.f32"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ImageFormatError, match="f32grid"):
            load_f32grid(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.f32"
        save_f32grid(np.ones((4, 4)), path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ImageFormatError, match="truncated"):
            load_f32grid(path)

    def test_dimension_overflow(self, tmp_path):
        import struct

        path = tmp_path / "huge.f32"
        path.write_bytes(b"F32G" + struct.pack("<III", 2**20, 2**20, 3))
        with pytest.raises(ImageFormatError, match="overflow"):
            load_f32grid(path)


class TestColorConversion:
    def test_black(self):
        out = rgb_to_ycbcr(np.zeros((1, 1, 3)))
        assert np.allclose(out[0, 0], [0.0, 0.5, 0.5], atol=0)

    def test_white(self):
        out = rgb_to_ycbcr(np.ones((1, 1, 3)))
        assert np.allclose(out[0, 0], [1.0, 0.5, 0.5], atol=1e-12)

    def test_pure_red(self):
        out = rgb_to_ycbcr(np.array([[[1.0, 0.0, 0.0]]]))
        # independent oracle: direct matrix evaluation
        assert out[0, 0, 0] == pytest.approx(0.299, abs=1e-12)
        assert out[0, 0, 2] == pytest.approx(0.5 + 0.701 * 0.5 / 1.402, abs=1e-12)

    def test_neutral_gray_fixed_point(self):
        gray = np.full((2, 2, 3), 0.5)
        assert np.allclose(ycbcr_to_rgb(gray), gray, atol=1e-12)

    def test_inverse_pair_on_random_images(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            img = random_image(rng)
            there = rgb_to_ycbcr(img)
            back = ycbcr_to_rgb(there)
            assert np.abs(back - img).max() < 1e-6

    def test_red_inverts(self):
        red = np.array([[[1.0, 0.0, 0.0]]])
        back = ycbcr_to_rgb(rgb_to_ycbcr(red))
        assert np.abs(back - red).max() < 1e-6

    def test_grayscale_rejected(self):
        with pytest.raises(ValueError, match="3-channel"):
            rgb_to_ycbcr(np.zeros((4, 4, 1)))
        with pytest.raises(ValueError, match="3-channel"):
            ycbcr_to_rgb(np.zeros((4, 4, 1)))


class TestNormalizedRmse:
    def test_identical(self):
        img = np.full((3, 3, 3), 0.25)
        assert normalized_rmse(img, img) == 0.0

    def test_maximal(self):
        assert normalized_rmse(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == 1.0

    def test_constant_difference(self):
        # independent oracle: constant-difference closed form
        assert normalized_rmse(np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.04)) == pytest.approx(
            0.04, abs=1e-15
        )

    def test_metric_properties(self):
        rng = np.random.default_rng(3)
        a, b, c = (random_image(rng, 8, 8) for _ in range(3))
        dab, dba = normalized_rmse(a, b), normalized_rmse(b, a)
        assert dab == dba
        assert dab >= 0
        assert normalized_rmse(a, c) <= dab + normalized_rmse(b, c) + 1e-9
        assert normalized_rmse(a, a) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            normalized_rmse(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


def test_rmse_scale_matches_fgsm_budget():
    # an everywhere-epsilon perturbation has RMSE exactly epsilon
    base = np.full((8, 8, 3), 0.5)
    assert normalized_rmse(base, base + 0.03) == pytest.approx(0.03, abs=1e-12)
