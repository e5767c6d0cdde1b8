import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import brute_brackets, brute_dmas, brute_mdmas, direct_cf
from pabeam.beamform import (
    DegenerateImageError,
    MethodSpec,
    beamform_image,
    beamform_samples,
    bracket_terms,
    coherence_factor,
    das_pixel,
    dmas_pixel,
    envelope,
    gather_delayed,
    log_compress,
    mdmas_pixel,
    reconstruct,
    sample_at,
    signed_sqrt,
    time_of_flight,
)
from pabeam.core import (
    Absorber,
    AlignedSamples,
    BeamformedImage,
    FrameValidationError,
    InvalidArgumentError,
    Phantom,
    RfFrame,
    build_grid,
    build_linear_array,
)
from pabeam.forward import NoiseSpec, add_gaussian_noise, simulate_frame

FS, C = 50e6, 1540.0
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


class TestTimeOfFlight:
    def test_on_axis_25mm(self):
        t = time_of_flight((0.0, 25e-3), (0.0, 0.0), C)
        assert t == pytest.approx(16.2338e-6, abs=1e-10)
        assert t * FS == pytest.approx(811.69, abs=0.01)

    def test_coincident(self):
        assert time_of_flight((1e-3, 0.0), (1e-3, 0.0), C) == 0.0

    @given(x0=st.floats(1e-4, 1e-2), z=st.floats(1e-3, 6e-2))
    def test_symmetric_elements(self, x0, z):
        assert time_of_flight((0, z), (-x0, 0), C) == time_of_flight((0, z), (x0, 0), C)

    def test_bad_speed(self):
        with pytest.raises(InvalidArgumentError):
            time_of_flight((0, 1e-3), (0, 0), 0.0)


class TestSampleAt:
    frame = RfFrame(np.array([[0.0, 2.0, 4.0, 6.0]]), 1.0, 1.0)

    def test_on_sample(self):
        assert sample_at(self.frame, 0, 2.0) == 4.0
        assert sample_at(self.frame, 0, 3.0) == 6.0

    def test_midway(self):
        assert sample_at(self.frame, 0, 1.5) == 3.0

    def test_past_end(self):
        assert sample_at(self.frame, 0, 3.0001) == 0.0

    def test_negative(self):
        with pytest.raises(InvalidArgumentError):
            sample_at(self.frame, 0, -0.1)


@pytest.fixture(scope="module")
def on_axis_frame(default_array):
    clean = simulate_frame(Phantom((Absorber(0.0, 25e-3),)), default_array, FS, C)
    return add_gaussian_noise(clean, NoiseSpec(50, 1))


class TestGather:
    def test_zero_frame(self, default_array):
        a = gather_delayed(RfFrame(np.zeros((128, 100)), FS, C), default_array, (0, 1e-3))
        assert len(a) == 128 and not a.values.any()

    def test_focused_on_absorber(self, default_array, on_axis_frame):
        a = gather_delayed(on_axis_frame, default_array, (0.0, 25e-3)).values
        channel_max = np.abs(on_axis_frame.samples).max(axis=1)
        central = slice(32, 96)
        assert np.all(np.abs(a[central]) >= 0.9 * channel_max[central])

    def test_far_from_absorber(self, default_array, on_axis_frame):
        a = gather_delayed(on_axis_frame, default_array, (0.0, 10e-3)).values
        # the shallow pixel reads before any arrival: noise only
        assert np.abs(a).max() < 1e-2 * np.abs(on_axis_frame.samples).max()

    def test_matches_scalar_path(self, default_array, on_axis_frame):
        pixel = (1.3e-3, 24.1e-3)
        a = gather_delayed(on_axis_frame, default_array, pixel).values
        ref = [
            sample_at(on_axis_frame, i, time_of_flight(pixel, tuple(e), C))
            for i, e in enumerate(default_array.element_positions)
        ]
        np.testing.assert_allclose(a, ref, rtol=0, atol=1e-12)


class TestDas:
    def test_examples(self):
        assert das_pixel([1, 2, 3]) == 6
        assert das_pixel(np.zeros(5)) == 0
        assert das_pixel(AlignedSamples([1.5, -0.5])) == 1.0

    def test_random_vs_fsum(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a = rng.standard_normal(rng.integers(1, 129))
            ref = math.fsum(a)
            assert abs(das_pixel(a) - ref) <= 1e-12 * max(abs(ref), np.abs(a).sum() * 1e-3)

    @given(arrays(np.float64, st.integers(1, 64), elements=finite), st.floats(-100, 100))
    def test_scale(self, a, lam):
        assert das_pixel(lam * a) == pytest.approx(lam * das_pixel(a), rel=1e-9, abs=1e-6)


class TestCoherenceFactor:
    def test_equal_channels(self):
        assert coherence_factor(np.full(16, -0.7)) == pytest.approx(1.0, abs=1e-12)

    def test_single_channel(self):
        a = np.zeros(8)
        a[3] = 2.5
        assert coherence_factor(a) == pytest.approx(0.125, abs=1e-12)

    def test_zero(self):
        assert coherence_factor(np.zeros(8)) == 0.0

    def test_random_vs_direct(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            a = rng.standard_normal(rng.integers(2, 129))
            assert rel_err(coherence_factor(a), direct_cf(list(a))) <= 1e-12

    @given(arrays(np.float64, st.integers(1, 64), elements=finite))
    def test_unit_interval(self, a):
        cf = coherence_factor(a)
        assert 0.0 <= cf <= 1.0 + 1e-12

    @given(arrays(np.float64, st.integers(2, 64), elements=finite), st.floats(0.01, 100))
    def test_scale_invariant(self, a, lam):
        assume(np.abs(a).max() > 1e-6)
        for s in (lam, -lam):
            assert coherence_factor(s * a) == pytest.approx(coherence_factor(a), rel=1e-9, abs=1e-12)

    @given(arrays(np.float64, st.integers(2, 32), elements=st.floats(-10, 10)))
    def test_one_only_when_coherent(self, a):
        if coherence_factor(a) == pytest.approx(1.0, abs=1e-12):
            assert np.allclose(a, a[0]) and a[0] != 0


class TestSignedSqrt:
    @pytest.mark.parametrize("v, out", [(4, 2), (-4, -2), (0, 0), (2.25, 1.5)])
    def test_values(self, v, out):
        assert signed_sqrt(v) == out

    def test_array(self):
        np.testing.assert_array_equal(signed_sqrt(np.array([9.0, -1.0, 0.0])), [3.0, -1.0, 0.0])


class TestDmas:
    def test_single_pair(self):
        assert dmas_pixel([1.0, -4.0]) == -2.0

    def test_all_minus_two(self):
        # 6 pairs, each sign(+4) * sqrt(4) = 2
        assert dmas_pixel([-2.0] * 4) == pytest.approx(12.0, abs=1e-12)

    def test_random_vs_double_loop(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            a = rng.standard_normal(rng.integers(3, 33))
            assert rel_err(dmas_pixel(a), brute_dmas(list(a))) <= 1e-9

    def test_too_few_channels(self):
        with pytest.raises(InvalidArgumentError):
            dmas_pixel([1.0])

    @given(finite, finite)
    def test_two_channels_exact(self, u, v):
        assert dmas_pixel([u, v]) == signed_sqrt(u * v)

    @given(arrays(np.float64, st.integers(2, 32), elements=finite), st.floats(0.01, 100))
    def test_positive_scale(self, a, lam):
        assert dmas_pixel(lam * a) == pytest.approx(lam * dmas_pixel(a), rel=1e-8, abs=1e-6)


class TestMdmas:
    def test_zero(self):
        assert mdmas_pixel(np.zeros(10)) == 0.0

    def test_hand_example(self):
        np.testing.assert_allclose(bracket_terms(np.array([1.0, 1.0, 4.0])), [3.0, 2.0])
        assert mdmas_pixel([1.0, 1.0, 4.0]) == pytest.approx(math.sqrt(6), abs=1e-12)
        assert math.sqrt(6) == pytest.approx(2.449, abs=1e-3)

    def test_brackets_vs_loop(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            a = rng.standard_normal(rng.integers(3, 17))
            np.testing.assert_allclose(bracket_terms(a), brute_brackets(list(a)), rtol=1e-9, atol=1e-12)

    def test_random_vs_nested_loops(self):
        rng = np.random.default_rng(4)
        for _ in range(500):
            a = rng.standard_normal(rng.integers(3, 17))
            assert rel_err(mdmas_pixel(a), brute_mdmas(list(a))) <= 1e-9

    @pytest.mark.parametrize("a", [[1.0], [1.0, 2.0]])
    def test_too_few_channels(self, a):
        with pytest.raises(InvalidArgumentError):
            mdmas_pixel(a)

    @given(arrays(np.float64, st.integers(3, 24), elements=finite), st.floats(0.01, 100))
    def test_positive_scale(self, a, lam):
        assert mdmas_pixel(lam * a) == pytest.approx(lam * mdmas_pixel(a), rel=1e-7, abs=1e-5)


class TestMethodSpec:
    def test_parse(self):
        assert MethodSpec.parse("das") == MethodSpec("das", False)
        assert MethodSpec.parse("mdmas-cf") == MethodSpec("mdmas", True)
        assert MethodSpec.parse("dmas-cf").name == "dmas-cf"

    @pytest.mark.parametrize("name", ["mv", "das-", "cf", "DAS"])
    def test_unknown(self, name):
        with pytest.raises(InvalidArgumentError):
            MethodSpec.parse(name)


SMALL_GRID = build_grid(-2e-3, 2e-3, 23e-3, 27e-3, 0.1e-3, 0.1e-3)


class TestBeamformImage:
    def test_zero_frame(self, default_array):
        img = beamform_image(RfFrame(np.zeros((128, 2500)), FS, C), default_array, SMALL_GRID, "mdmas-cf")
        assert img.stage == "raw" and img.values.shape == SMALL_GRID.shape
        assert not img.values.any()

    def test_das_localizes(self, default_array, on_axis_frame):
        env = envelope(beamform_image(on_axis_frame, default_array, SMALL_GRID, "das"))
        iz, ix = np.unravel_index(np.argmax(env.values), SMALL_GRID.shape)
        x, z = SMALL_GRID.coord(ix, iz)
        assert abs(x) <= 0.1e-3 + 1e-12 and abs(z - 25e-3) <= 0.1e-3 + 1e-12

    @pytest.mark.parametrize("kernel", ["das", "dmas", "mdmas"])
    def test_cf_never_amplifies(self, default_array, on_axis_frame, kernel):
        plain = beamform_image(on_axis_frame, default_array, SMALL_GRID, MethodSpec(kernel, False)).values
        weighted = beamform_image(on_axis_frame, default_array, SMALL_GRID, MethodSpec(kernel, True)).values
        assert np.all(np.abs(weighted) <= np.abs(plain) + 1e-12 * np.abs(plain).max())

    def test_rejects_mismatched_frame(self, default_array):
        with pytest.raises(FrameValidationError, match="channel-count"):
            beamform_image(RfFrame(np.zeros((64, 100)), FS, C), default_array, SMALL_GRID, "das")

    def test_mdmas_needs_three_channels(self):
        geo = build_linear_array(2, 1e-3)
        with pytest.raises(InvalidArgumentError):
            beamform_image(RfFrame(np.zeros((2, 100)), FS, C), geo, SMALL_GRID, "mdmas")

    @pytest.mark.parametrize("method", ["das", "das-cf", "dmas", "dmas-cf"])
    def test_channel_permutation(self, default_array, on_axis_frame, method):
        perm = np.random.default_rng(5).permutation(128)
        spec = MethodSpec.parse(method)
        ref = beamform_samples(on_axis_frame.samples, default_array.x, FS, C, SMALL_GRID, spec)
        shuffled = beamform_samples(on_axis_frame.samples[perm], default_array.x[perm], FS, C, SMALL_GRID, spec)
        np.testing.assert_allclose(shuffled, ref, rtol=1e-9, atol=1e-9 * np.abs(ref).max())

    @pytest.mark.parametrize("method", ["das", "mdmas-cf"])
    def test_thread_count_independent(self, default_array, on_axis_frame, method):
        grid = build_grid(-3e-3, 3e-3, 20e-3, 30e-3, 0.1e-3, 0.1e-3)
        one = beamform_image(on_axis_frame, default_array, grid, method, threads=1).values
        four = beamform_image(on_axis_frame, default_array, grid, method, threads=4).values
        assert one.tobytes() == four.tobytes()


class TestEnvelope:
    def test_zero(self):
        assert not envelope(BeamformedImage(np.zeros((50, 4)))).values.any()

    @given(arrays(np.float64, (32, 3), elements=st.floats(-10, 10)))
    @settings(max_examples=30)
    def test_sign_symmetry(self, s):
        np.testing.assert_allclose(
            envelope(BeamformedImage(s)).values, envelope(BeamformedImage(-s)).values, atol=1e-12
        )

    @pytest.mark.parametrize("amp", [1.0, 3.5])
    def test_tone_amplitude(self, amp):
        z = np.arange(601) * 0.1e-3
        tone = amp * np.cos(2 * np.pi * 7e6 * z / C)
        env = envelope(BeamformedImage(np.tile(tone[:, None], (1, 3)))).values
        interior = env[150:-150]
        assert np.all(np.abs(interior - amp) <= 0.01 * amp)

    def test_requires_raw(self):
        with pytest.raises(InvalidArgumentError):
            envelope(BeamformedImage(np.ones((4, 4)), "envelope"))


class TestLogCompress:
    def image(self, vals):
        return BeamformedImage(np.array(vals, dtype=float), "envelope")

    def test_values(self):
        db = log_compress(self.image([[2.0, 0.2, 0.0]]), 60).values
        assert db[0, 0] == 0.0
        assert db[0, 1] == pytest.approx(-20.0, abs=1e-12)
        assert db[0, 2] == -60.0

    def test_custom_range(self):
        out = log_compress(self.image([[1.0, 1e-9]]), 100)
        assert out.stage == "db" and out.dynamic_range_db == 100
        assert out.values[0, 1] == -100.0

    def test_all_zero(self):
        with pytest.raises(DegenerateImageError):
            log_compress(self.image([[0.0, 0.0]]))

    def test_reconstruct_pipeline(self, default_array, on_axis_frame):
        img = reconstruct(on_axis_frame, default_array, SMALL_GRID, "dmas", 60)
        assert img.values.max() == 0.0 and img.values.min() >= -60.0
