import math

import numpy as np
import pytest

from pixeldeflect.wavelets import (
    ShrinkageRule,
    WaveletSpec,
    bayes_threshold,
    denoise_channel,
    dwt2,
    estimate_noise_mad,
    hard_threshold,
    idwt2,
    max_levels,
    soft_threshold,
    sure_threshold,
    visu_threshold,
)


def pyramid_energy(pyr) -> float:
    total = float(np.sum(pyr.ll**2))
    for band in pyr.detail_bands():
        total += float(np.sum(band**2))
    return total


class TestTransform:
    def test_constant_2x2_haar_by_hand(self):
        # hand-applied orthonormal haar: each separable low-pass pass scales
        # a constant by sqrt(2), so LL = 2c and all details vanish
        c = 0.37
        pyr = dwt2(np.full((2, 2), c), WaveletSpec("haar", 1))
        assert pyr.ll.shape == (1, 1)
        assert pyr.ll[0, 0] == pytest.approx(2 * c, abs=1e-12)
        for band in pyr.detail_bands():
            assert np.abs(band).max() < 1e-12

    def test_constant_2x2_inverts(self):
        c = 0.37
        spec = WaveletSpec("haar", 1)
        back = idwt2(dwt2(np.full((2, 2), c), spec), spec)
        assert np.allclose(back, c, atol=1e-12)

    def test_zero_input_zero_pyramid(self):
        pyr = dwt2(np.zeros((8, 8)), WaveletSpec("db2", 2))
        assert np.abs(pyr.ll).max() == 0.0
        for band in pyr.detail_bands():
            assert np.abs(band).max() == 0.0

    @pytest.mark.parametrize("family", ["haar", "db1", "db2"])
    @pytest.mark.parametrize("levels", [1, 2, 3])
    def test_energy_preserved_even_sizes(self, family, levels):
        rng = np.random.default_rng(5)
        x = rng.random((32, 32))
        pyr = dwt2(x, WaveletSpec(family, levels))
        assert pyramid_energy(pyr) == pytest.approx(float(np.sum(x**2)), rel=1e-9)

    @pytest.mark.parametrize("family", ["haar", "db2"])
    @pytest.mark.parametrize("shape", [(16, 16), (32, 32), (31, 37), (29, 16)])
    def test_perfect_reconstruction(self, family, shape):
        rng = np.random.default_rng(9)
        x = rng.random(shape)
        for levels in range(1, min(4, max_levels(*shape)) + 1):
            spec = WaveletSpec(family, levels)
            back = idwt2(dwt2(x, spec), spec)
            assert np.abs(back - x).max() < 1e-6

    def test_coefficient_count(self):
        rng = np.random.default_rng(2)
        even = dwt2(rng.random((32, 32)), WaveletSpec("db2", 3))
        assert even.coefficient_count() == 32 * 32
        odd = dwt2(rng.random((31, 37)), WaveletSpec("db2", 2))
        assert odd.coefficient_count() >= 31 * 37

    def test_too_many_levels(self):
        with pytest.raises(ValueError, match="levels"):
            dwt2(np.zeros((8, 8)), WaveletSpec("haar", 4))

    def test_auto_levels_cap(self):
        assert WaveletSpec("db1", None).resolve_levels(8, 300) == 3
        assert WaveletSpec("db1", None).resolve_levels(299, 299) == 4

    def test_unknown_family(self):
        with pytest.raises(ValueError, match="family"):
            WaveletSpec("sym4", 1)


class TestPointwiseThresholds:
    def test_soft_examples(self):
        assert soft_threshold(np.array([0.5]), 0.2)[0] == pytest.approx(0.3)
        assert soft_threshold(np.array([-0.1]), 0.2)[0] == 0.0
        x = np.array([-0.4, 0.0, 0.7])
        assert np.array_equal(soft_threshold(x, 0.0), x)

    def test_hard_examples(self):
        assert hard_threshold(np.array([0.5]), 0.2)[0] == 0.5
        # boundary is strict: |x| == T zeroes out
        assert hard_threshold(np.array([0.2]), 0.2)[0] == 0.0
        x = np.array([-0.4, 0.0, 0.7])
        assert np.array_equal(hard_threshold(x, 0.0) == 0, x == 0)

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            soft_threshold(np.array([1.0]), -0.1)
        with pytest.raises(ValueError):
            hard_threshold(np.array([1.0]), -0.1)

    def test_soft_is_contraction(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=200)
        y = rng.normal(size=200)
        for t in (0.0, 0.1, 0.5, 2.0):
            sx, sy = soft_threshold(x, t), soft_threshold(y, t)
            assert (np.abs(sx) <= np.abs(x) + 1e-15).all()
            # pointwise 1-Lipschitz between any two inputs
            assert (np.abs(sx - sy) <= np.abs(x - y) + 1e-12).all()


class TestBayes:
    def test_zero_sigma(self):
        assert bayes_threshold(np.array([0.5, -0.2]), 0.0) == 0.0

    def test_degenerate_band_killed(self):
        band = np.array([0.3, -0.3, 0.3, -0.3])
        # mean square equals sigma^2 exactly, so sigma_x = 0
        assert bayes_threshold(band, 0.3) == pytest.approx(0.3)

    def test_hand_computed_value(self):
        band = np.array([0.3, -0.3, 0.3, -0.3])
        # independent oracle: sigma_x = sqrt(0.09 - 0.01), T = 0.01 / sigma_x
        expected = 0.01 / math.sqrt(0.08)
        assert bayes_threshold(band, 0.1) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.035355, abs=5e-7)

    def test_monotone_in_sigma(self):
        rng = np.random.default_rng(17)
        band = rng.normal(0, 0.5, size=128)
        rms = math.sqrt(float(np.mean(band**2)))
        sigmas = np.linspace(0.0, rms * 0.999, 25)
        values = [bayes_threshold(band, s) for s in sigmas]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))

    def test_empty_band(self):
        with pytest.raises(ValueError, match="empty"):
            bayes_threshold(np.array([]), 0.1)

    def test_matches_direct_recomputation(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            band = rng.normal(0, rng.uniform(0.05, 0.5), size=rng.integers(4, 200))
            sigma = rng.uniform(0.0, 0.3)
            got = bayes_threshold(band, sigma)
            # independent recomputation straight from the formula
            sig_x2 = max(np.mean(band**2) - sigma**2, 0.0)
            want = (sigma**2 / math.sqrt(sig_x2)) if sig_x2 > 0 else (np.abs(band).max() if sigma else 0.0)
            if sigma == 0.0:
                want = 0.0
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


class TestVisu:
    def test_single_sample(self):
        assert visu_threshold(0.3, 1) == 0.0

    def test_zero_sigma(self):
        assert visu_threshold(0.0, 10_000) == 0.0

    def test_reference_image_size(self):
        # independent oracle: sigma * sqrt(2 ln N) at N = 299^2
        expected = 0.04 * math.sqrt(2.0 * math.log(299**2))
        got = visu_threshold(0.04, 299**2)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(0.1910005, abs=1e-6)

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            visu_threshold(0.1, 0)


def sure_bruteforce(band: np.ndarray) -> float:
    """Naive exhaustive SURE minimization, the independent oracle."""
    mags = np.abs(np.asarray(band, dtype=np.float64).ravel())
    n = mags.size
    best_t, best_risk = None, None
    for t in sorted({0.0, *mags.tolist()}):
        risk = n - 2 * int(np.sum(mags <= t)) + float(np.sum(np.minimum(mags, t) ** 2))
        if best_risk is None or risk < best_risk:
            best_t, best_risk = t, risk
    return best_t


class TestSure:
    def test_all_zero(self):
        assert sure_threshold(np.zeros(16)) == 0.0

    def test_single_coefficient(self):
        for value in (0.4, 1.3, -2.0):
            band = np.array([value])
            assert sure_threshold(band) == sure_bruteforce(band)

    def test_matches_bruteforce(self):
        rng = np.random.default_rng(29)
        for _ in range(60):
            n = int(rng.integers(1, 257))
            band = rng.normal(0, 1, size=n)
            if rng.random() < 0.3:
                band[rng.random(n) < 0.5] = 0.0
            assert sure_threshold(band) == sure_bruteforce(band)

    def test_empty(self):
        with pytest.raises(ValueError, match="empty"):
            sure_threshold(np.array([]))


class TestNoiseEstimate:
    def test_zero_image(self):
        pyr = dwt2(np.zeros((16, 16)), WaveletSpec("haar", 1))
        assert estimate_noise_mad(pyr) == 0.0

    def test_scale_calibration(self):
        pyr = dwt2(np.zeros((16, 16)), WaveletSpec("haar", 1))
        pyr.levels[0].hh = np.full_like(pyr.levels[0].hh, 0.6745)
        assert estimate_noise_mad(pyr) == pytest.approx(1.0, rel=1e-12)

    def test_recovers_known_sigma(self):
        sigma = 0.1
        spec = WaveletSpec("db2", 1)
        estimates = []
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            noise = rng.normal(0, sigma, size=(64, 64))
            estimates.append(estimate_noise_mad(dwt2(noise, spec)))
        assert abs(np.mean(estimates) - sigma) < 0.2 * sigma


class TestDenoiseChannel:
    def test_rule_none_is_round_trip(self):
        rng = np.random.default_rng(31)
        x = rng.random((32, 32))
        out = denoise_channel(x, WaveletSpec("db1", 3), ShrinkageRule(kind="none"))
        assert np.abs(out - x).max() < 1e-6

    def test_zero_sigma_bayes_identity(self):
        rng = np.random.default_rng(37)
        x = rng.random((32, 32))
        out = denoise_channel(x, WaveletSpec("db2", 2), ShrinkageRule(kind="soft", sigma=0.0))
        assert np.abs(out - x).max() < 1e-6

    def test_constant_image_unchanged(self):
        x = np.full((31, 33), 0.6)
        for selector in ("bayes", "visu", "sure", "fixed"):
            rule = ShrinkageRule(kind="soft", selector=selector, sigma=0.04, fixed_threshold=0.1)
            out = denoise_channel(x, WaveletSpec("db1", 2), rule)
            assert np.abs(out - x).max() < 1e-6

    def test_energy_never_grows(self):
        rng = np.random.default_rng(41)
        x = rng.random((32, 32))
        for kind in ("soft", "hard"):
            for selector in ("bayes", "visu", "fixed"):
                rule = ShrinkageRule(kind=kind, selector=selector, sigma=0.1, fixed_threshold=0.05)
                out = denoise_channel(x, WaveletSpec("haar", 3), rule)
                assert float(np.sum(out**2)) <= float(np.sum(x**2)) + 1e-9

    def test_huge_fixed_threshold_keeps_only_approximation(self):
        rng = np.random.default_rng(43)
        x = rng.random((16, 16))
        spec = WaveletSpec("haar", 2)
        rule = ShrinkageRule(kind="hard", selector="fixed", fixed_threshold=1e9)
        out = denoise_channel(x, spec, rule)
        pyr = dwt2(x, spec)
        for bands in pyr.levels:
            bands.lh[:] = 0.0
            bands.hl[:] = 0.0
            bands.hh[:] = 0.0
        assert np.allclose(out, idwt2(pyr, spec), atol=1e-12)

    def test_sure_selector_denoises_noisy_constant(self):
        rng = np.random.default_rng(47)
        sigma = 0.05
        x = 0.5 + rng.normal(0, sigma, size=(32, 32))
        rule = ShrinkageRule(kind="soft", selector="sure", sigma=sigma)
        out = denoise_channel(x, WaveletSpec("db1", 3), rule)
        assert float(np.mean((out - 0.5) ** 2)) < float(np.mean((x - 0.5) ** 2))
