import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from conftest import make_cube, wide_axis
from hsirecon.hypercube import (
    Hypercube, band_index_nearest, calibrate_reflectance, read_bil, render_rgb,
    select_bands, write_bil,
)


def uniform(value, shape=(2, 3, 4), wavelengths=None):
    return make_cube(np.full(shape, value), wavelengths)


class TestHypercube:
    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError, match="3-D"):
            Hypercube(np.zeros((2, 3)), [1.0, 2.0, 3.0])

    def test_rejects_wavelength_count(self):
        with pytest.raises(ValueError, match="wavelengths"):
            Hypercube(np.zeros((1, 1, 3)), [1.0, 2.0])

    def test_rejects_non_increasing_axis(self):
        with pytest.raises(ValueError, match="increasing"):
            Hypercube(np.zeros((1, 1, 3)), [1.0, 3.0, 2.0])

    def test_data_is_read_only_copy(self):
        src = np.zeros((1, 2, 2))
        cube = Hypercube(src, [1.0, 2.0])
        src[0, 0, 0] = 5.0
        assert cube.data[0, 0, 0] == 0.0
        with pytest.raises(ValueError):
            cube.data[0, 0, 0] = 1.0

    def test_dimensions(self):
        cube = uniform(0.1, (2, 3, 4))
        assert (cube.height, cube.width, cube.bands) == (2, 3, 4)
        assert cube.data.size == cube.height * cube.width * cube.bands


class TestCalibration:
    def test_identity_denominator(self):
        out = calibrate_reflectance(uniform(0.5), uniform(1.0), uniform(0.0))
        np.testing.assert_allclose(out.data, 0.5)

    def test_raw_equals_dark_gives_zero(self):
        dark = uniform(0.2)
        out = calibrate_reflectance(dark, uniform(0.9), dark)
        assert np.all(out.data == 0.0)

    def test_hand_value(self):
        out = calibrate_reflectance(uniform(0.6), uniform(0.9), uniform(0.1))
        np.testing.assert_allclose(out.data, 0.625, rtol=1e-12)

    def test_white_over_white_is_one(self, rng):
        white = make_cube(rng.uniform(0.5, 1.0, (3, 3, 5)))
        dark = make_cube(rng.uniform(0.0, 0.1, (3, 3, 5)))
        np.testing.assert_allclose(calibrate_reflectance(white, white, dark).data, 1.0)

    def test_clamps_and_counts(self):
        raw = make_cube(np.array([[[-0.5, 0.5, 3.0]]]))
        out, stats = calibrate_reflectance(raw, uniform(1.0, (1, 1, 3)), uniform(0.0, (1, 1, 3)),
                                           return_stats=True)
        np.testing.assert_array_equal(out.data.ravel(), [0.0, 0.5, 2.0])
        assert stats == {"clamped_low": 1, "clamped_high": 1}

    def test_zero_denominator_names_voxel(self):
        white = np.ones((2, 2, 3))
        white[1, 0, 2] = 0.0
        with pytest.raises(ValueError, match=r"line=1, sample=0, band=2"):
            calibrate_reflectance(uniform(0.5, (2, 2, 3)), make_cube(white), uniform(0.0, (2, 2, 3)))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions"):
            calibrate_reflectance(uniform(0.5, (2, 2, 3)), uniform(1.0, (2, 3, 3)),
                                  uniform(0.0, (2, 2, 3)))

    def test_axis_mismatch(self):
        other = uniform(1.0, (2, 2, 3), [1.0, 2.0, 4.0])
        with pytest.raises(ValueError, match="wavelength"):
            calibrate_reflectance(uniform(0.5, (2, 2, 3)), other, uniform(0.0, (2, 2, 3)))

    def test_output_finite(self, rng):
        raw = make_cube(rng.normal(0.5, 1.0, (4, 4, 6)))
        out = calibrate_reflectance(raw, uniform(1.0, (4, 4, 6)), uniform(0.0, (4, 4, 6)))
        assert np.all(np.isfinite(out.data))
        assert out.data.min() >= 0.0 and out.data.max() <= 2.0


class TestBilIO:
    def test_round_trip_small(self, tmp_path, rng):
        cube = make_cube(rng.random((2, 2, 3)).astype(np.float32))
        hdr = write_bil(cube, tmp_path / "c.hdr")
        assert read_bil(hdr) == cube

    def test_single_voxel_payload(self, tmp_path):
        write_bil(uniform(0.25, (1, 1, 1)), tmp_path / "one")
        assert (tmp_path / "one.bil").stat().st_size == 4

    def test_payload_size(self, tmp_path):
        write_bil(uniform(0.1, (64, 64, 7)), tmp_path / "big.hdr")
        assert (tmp_path / "big.bil").stat().st_size == 114688

    def test_bil_byte_order(self, tmp_path):
        # line 0 holds band 0 for every sample, then band 1
        data = np.arange(2 * 3 * 2, dtype=np.float64).reshape(2, 3, 2)
        write_bil(make_cube(data), tmp_path / "o.hdr")
        flat = np.frombuffer((tmp_path / "o.bil").read_bytes(), dtype="<f4")
        np.testing.assert_array_equal(flat[:6], [0, 2, 4, 1, 3, 5])

    def test_band_count_mismatch(self, tmp_path):
        hdr = write_bil(uniform(0.1, (1, 1, 3)), tmp_path / "x.hdr")
        text = hdr.read_text().replace("wavelength = {400.0, 410.0, 420.0}",
                                       "wavelength = {400.0, 410.0}")
        hdr.write_text(text)
        with pytest.raises(ValueError, match="bands = 3"):
            read_bil(hdr)

    def test_bsq_rejected(self, tmp_path):
        hdr = write_bil(uniform(0.1, (1, 1, 3)), tmp_path / "x.hdr")
        hdr.write_text(hdr.read_text().replace("interleave = bil", "interleave = bsq"))
        with pytest.raises(ValueError, match="interleave"):
            read_bil(hdr)

    def test_truncated_payload(self, tmp_path):
        hdr = write_bil(uniform(0.1, (2, 2, 3)), tmp_path / "x.hdr")
        bil = tmp_path / "x.bil"
        bil.write_bytes(bil.read_bytes()[:-4])
        with pytest.raises(ValueError, match="bytes"):
            read_bil(hdr)

    def test_missing_field(self, tmp_path):
        hdr = write_bil(uniform(0.1, (1, 1, 2)), tmp_path / "x.hdr")
        hdr.write_text("\n".join(l for l in hdr.read_text().splitlines() if not l.startswith("lines")))
        with pytest.raises(ValueError, match="lines"):
            read_bil(hdr)

    def test_missing_header(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_bil(tmp_path / "nope.hdr")

    def test_unknown_keys_ignored(self, tmp_path):
        cube = uniform(0.5, (1, 2, 2))
        hdr = write_bil(cube, tmp_path / "x.hdr")
        hdr.write_text(hdr.read_text() + "sensor type = whatever\n")
        assert read_bil(hdr) == cube

    @settings(max_examples=25, deadline=None)
    @given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=3, max_dims=3, max_side=5),
                      elements=st.floats(-10, 10, width=32)))
    def test_round_trip_bit_exact(self, tmp_path_factory, data):
        path = tmp_path_factory.mktemp("bil") / "c.hdr"
        cube = make_cube(data)
        assert read_bil(write_bil(cube, path)) == cube


class TestBandLookup:
    def test_nearest(self):
        assert band_index_nearest([400.0, 500.0, 600.0], 505) == 1

    def test_tie_goes_low(self):
        assert band_index_nearest([400.0, 500.0, 600.0], 450) == 0

    def test_wide_axis(self):
        wl = wide_axis()
        idx = band_index_nearest(wl, 602)
        assert np.abs(wl[idx] - 602) == np.abs(wl - 602).min()

    def test_select_seven(self):
        wl = wide_axis()
        cube = make_cube(np.zeros((4, 4, 204)), wl)
        out = select_bands(cube, [406, 412, 478, 655, 709, 817, 832])
        assert out.shape == (4, 4, 7)
        assert set(out.wavelengths) <= set(wl)

    def test_select_full_axis_identity(self, rng):
        cube = make_cube(rng.random((2, 2, 5)))
        assert select_bands(cube, cube.wavelengths) == cube

    def test_select_duplicate(self):
        with pytest.raises(ValueError, match="both resolve"):
            select_bands(uniform(0.1), [500, 500])

    def test_select_sorted_output(self, rng):
        cube = make_cube(rng.random((2, 2, 5)))
        out = select_bands(cube, [430, 400, 420])
        np.testing.assert_array_equal(out.wavelengths, [400, 420, 430])
        np.testing.assert_array_equal(out.band(0), cube.band(0))


class TestRenderRgb:
    axis = np.arange(440.0, 611.0, 10.0)

    def test_white(self):
        img = render_rgb(uniform(1.0, (2, 2, self.axis.size), self.axis), gamma=1.4)
        assert img.dtype == np.uint8 and np.all(img == 255)

    def test_black(self):
        assert np.all(render_rgb(uniform(0.0, (2, 2, self.axis.size), self.axis)) == 0)

    def test_hand_value(self):
        # 255 * 0.25 ** (1 / 1.4) = 94.73
        img = render_rgb(uniform(0.25, (1, 1, self.axis.size), self.axis), gamma=1.4)
        assert np.all(img == 95)

    def test_channel_order(self):
        data = np.zeros((1, 1, self.axis.size))
        data[0, 0, band_index_nearest(self.axis, 599)] = 1.0
        img = render_rgb(make_cube(data, self.axis))
        np.testing.assert_array_equal(img[0, 0], [255, 0, 0])

    def test_narrow_axis(self):
        wl = np.arange(500.0, 700.0, 10.0)
        with pytest.raises(ValueError, match="449"):
            render_rgb(uniform(0.5, (1, 1, wl.size), wl))

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-0.5, 1.5), st.floats(-0.5, 1.5), st.floats(1.0, 3.0))
    def test_monotone(self, a, b, gamma):
        lo, hi = sorted((a, b))
        n = self.axis.size
        dark = render_rgb(uniform(lo, (1, 1, n), self.axis), gamma)
        bright = render_rgb(uniform(hi, (1, 1, n), self.axis), gamma)
        assert np.all(bright >= dark)
