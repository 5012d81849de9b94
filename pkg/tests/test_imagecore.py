import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from tigerlight.imagecore import (
    ImageLoadError,
    RasterImage,
    ScalarMap,
    compose_enhanced,
    concat_generator_input,
    illumination_map,
    load_image,
    save_image,
    self_regularized_map,
    to_uint8,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def images(max_side=8):
    return st.tuples(st.integers(1, max_side), st.integers(1, max_side)).flatmap(
        lambda hw: arrays(np.float64, (hw[0], hw[1], 3), elements=unit))


def _png(tmp_path, pixels, mode="RGB", name="x.png"):
    p = tmp_path / name
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode=mode).save(p)
    return p


class TestLoadImage:
    def test_white_pixel_is_all_ones(self, tmp_path):
        img = load_image(_png(tmp_path, [[[255, 255, 255]]]))
        assert img.shape == (1, 1, 3)
        assert np.array_equal(img.data, np.ones((1, 1, 3)))

    def test_black_pixel_is_all_zeros(self, tmp_path):
        img = load_image(_png(tmp_path, [[[0, 0, 0]]]))
        assert np.array_equal(img.data, np.zeros((1, 1, 3)))

    def test_scaling_by_255(self, tmp_path):
        img = load_image(_png(tmp_path, [[[128, 0, 0], [0, 64, 0]]]))
        assert img.width == 2 and img.height == 1
        assert img.data[0, 0].tolist() == [128 / 255, 0.0, 0.0]
        assert img.data[0, 1].tolist() == [0.0, 64 / 255, 0.0]

    def test_grayscale_replicated(self, tmp_path):
        img = load_image(_png(tmp_path, [[10, 200]], mode="L"))
        assert img.data[0, 1].tolist() == [200 / 255] * 3

    def test_jpeg_supported(self, tmp_path):
        p = tmp_path / "a.jpg"
        Image.new("RGB", (4, 3), (255, 255, 255)).save(p)
        assert load_image(p).shape == (3, 4, 3)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(ImageLoadError, match="nope.png"):
            load_image(tmp_path / "nope.png")

    def test_corrupt_file_names_path(self, tmp_path):
        p = tmp_path / "bad.png"
        p.write_bytes(b"not an image at all")
        with pytest.raises(ImageLoadError, match="bad.png"):
            load_image(p)

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "a.bmp"
        Image.new("RGB", (2, 2)).save(p)
        with pytest.raises(ImageLoadError, match="unsupported"):
            load_image(p)

    def test_save_rounds_half_away_from_zero(self, tmp_path):
        img = RasterImage(np.array([[[0.5 / 255, 1.5 / 255, 1.0]]]))
        assert to_uint8(img).tolist() == [[[1, 2, 255]]]
        p = save_image(RasterImage(np.array([[[128 / 255, 0, 1]]])), tmp_path / "o.png")
        assert np.array_equal(load_image(p).data, np.array([[[128 / 255, 0, 1]]]))


class TestTypes:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RasterImage(np.full((1, 1, 3), 1.5))
        with pytest.raises(ValueError):
            ScalarMap(np.full((2, 2), -0.1))

    def test_rejects_wrong_channels_and_empty(self):
        with pytest.raises(ValueError):
            RasterImage(np.zeros((2, 2, 4)))
        with pytest.raises(ValueError):
            RasterImage(np.zeros((0, 2, 3)))

    def test_immutable(self):
        img = RasterImage(np.zeros((2, 2, 3)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0


class TestIllumination:
    def test_black_and_white(self):
        assert np.array_equal(illumination_map(RasterImage(np.zeros((3, 2, 3)))).data, np.zeros((3, 2)))
        assert np.array_equal(illumination_map(RasterImage(np.ones((3, 2, 3)))).data, np.ones((3, 2)))

    def test_max_channel(self):
        m = illumination_map(RasterImage(np.array([[[0.2, 0.4, 0.6]]])))
        assert m.data[0, 0] == 0.6

    def test_self_regularized_values(self):
        out = self_regularized_map(ScalarMap(np.array([[0.0, 1.0, 0.3]]))).data
        assert out[0, 0] == 1.0 and out[0, 1] == 0.0
        assert out[0, 2] == pytest.approx(0.7, abs=1e-15)

    @given(images())
    def test_illumination_bounds_and_dominates_channels(self, arr):
        m = illumination_map(RasterImage(arr)).data
        assert m.shape == arr.shape[:2]
        assert np.all((m >= 0) & (m <= 1))
        assert np.all(m[:, :, None] >= arr)

    @given(images())
    def test_self_regularized_involution(self, arr):
        m = ScalarMap(arr[:, :, 0])
        back = self_regularized_map(self_regularized_map(m)).data
        assert np.max(np.abs(back - m.data)) <= 1e-12


class TestCompose:
    def test_zero_residual_returns_input(self):
        a = RasterImage(np.random.default_rng(0).random((4, 5, 3)))
        i = ScalarMap(np.random.default_rng(1).random((4, 5)))
        for sel in ("illumination", "self-regularized"):
            assert compose_enhanced(a, RasterImage(np.zeros((4, 5, 3))), i, sel) == a

    def test_zero_illumination_returns_input(self):
        a = RasterImage(np.random.default_rng(0).random((4, 5, 3)))
        r = RasterImage(np.random.default_rng(2).random((4, 5, 3)))
        assert compose_enhanced(a, r, ScalarMap(np.zeros((4, 5))), "illumination") == a

    def test_scalar_case(self):
        a = RasterImage(np.full((1, 1, 3), 0.5))
        r = RasterImage(np.full((1, 1, 3), 0.8))
        i = ScalarMap(np.full((1, 1), 0.5))
        assert np.allclose(compose_enhanced(a, r, i).data, 0.9, atol=1e-15)
        # self-regularized uses 1 - I = 0.5 here too
        assert np.allclose(compose_enhanced(a, r, i, "self-regularized").data, 0.9, atol=1e-15)

    def test_self_regularized_selector_uses_complement(self):
        a = RasterImage(np.full((1, 1, 3), 0.1))
        r = RasterImage(np.full((1, 1, 3), 0.5))
        i = ScalarMap(np.full((1, 1), 0.8))
        assert compose_enhanced(a, r, i, "illumination").data[0, 0, 0] == pytest.approx(0.5)
        assert compose_enhanced(a, r, i, "self-regularized").data[0, 0, 0] == pytest.approx(0.2)

    def test_clamps_to_one(self):
        one = RasterImage(np.ones((2, 2, 3)))
        assert compose_enhanced(one, one, ScalarMap(np.ones((2, 2)))) == one

    def test_dimension_mismatch_reports_all_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 2, 3\).*\(3, 2, 3\).*\(2, 2\)"):
            compose_enhanced(RasterImage(np.zeros((2, 2, 3))), RasterImage(np.zeros((3, 2, 3))),
                             ScalarMap(np.zeros((2, 2))))

    def test_bad_selector(self):
        z = RasterImage(np.zeros((1, 1, 3)))
        with pytest.raises(ValueError):
            compose_enhanced(z, z, ScalarMap(np.zeros((1, 1))), "both")

    @settings(max_examples=50)
    @given(images(6), st.data())
    def test_monotone_in_residual(self, arr, data):
        h, w = arr.shape[:2]
        r = data.draw(arrays(np.float64, (h, w, 3), elements=unit))
        bump = data.draw(arrays(np.float64, (h, w, 3), elements=unit))
        i = ScalarMap(arr.max(axis=2))
        a = RasterImage(arr)
        lo = compose_enhanced(a, RasterImage(r), i).data
        hi = compose_enhanced(a, RasterImage(np.maximum(r, bump)), i).data
        assert np.all(hi >= lo)
        assert np.all((lo >= 0) & (lo <= 1))


class TestConcat:
    def test_single_pixel(self):
        out = concat_generator_input(RasterImage(np.array([[[0.1, 0.2, 0.3]]])), ScalarMap(np.array([[0.9]])))
        assert out.reshape(-1).tolist() == [0.1, 0.2, 0.3, 0.9]

    def test_zeros(self):
        out = concat_generator_input(RasterImage(np.zeros((3, 3, 3))), ScalarMap(np.zeros((3, 3))))
        assert out.shape == (3, 3, 4) and not out.any()

    def test_interleaving_index_formula(self):
        rng = np.random.default_rng(5)
        rgb, att = rng.random((2, 2, 3)), rng.random((2, 2))
        flat = concat_generator_input(RasterImage(rgb), ScalarMap(att)).reshape(-1)
        assert flat.size == 16
        w = 2
        for y in range(2):
            for x in range(2):
                for c in range(4):
                    expected = rgb[y, x, c] if c < 3 else att[y, x]
                    assert flat[(y * w + x) * 4 + c] == expected

    def test_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            concat_generator_input(RasterImage(np.zeros((2, 2, 3))), ScalarMap(np.zeros((2, 3))))
