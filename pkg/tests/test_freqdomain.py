import math

import numpy as np
import pytest

from psdkit.freqdomain import (
    DEFAULT_CWT_SCALES,
    ScalogramMask,
    Spectrum,
    build_scalogram_mask,
    convolve_same_batch,
    cwt_matrix,
    dft_factor,
    fga_factor,
    fs_factor,
    haar_kernel,
    marr_kernel,
    periodogram,
    sd_factor,
    sd_factor_batch,
    sdcc_factor,
    wt1_factor,
    wt2_factor,
)
from psdkit.pulse import Dataset, Pulse, SynthParams, synthesize_dataset


def P(values, dt=1.0):
    return Pulse(samples=np.asarray(values, dtype=float), dt=dt)


def random_pulse(seed, length=128):
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=float)
    v = (np.exp(-t / 5.0) + 0.3 * np.exp(-t / 30.0)) * (1 - np.exp(-t / 2.0))
    return P(np.roll(v, 10) + rng.normal(0, 0.002, length))


def conv_same_direct(x, kernel):
    """Brute-force O(N*s) same-length convolution, independent of the FFT path."""
    n, m = len(x), len(kernel)
    full = [0.0] * (n + m - 1)
    for i in range(n):
        for j in range(m):
            full[i + j] += x[i] * kernel[j]
    start = (m - 1) // 2
    return np.array(full[start: start + n])


class TestDft:
    def test_single_sample(self):
        # trims to [1]: |DFT|^2 = 1, DCT0 = 1, DST0 = sin(pi/2) = 1, sum = 1
        assert dft_factor(P([1.0])) == pytest.approx(1.0, rel=1e-12)

    def test_parseval_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            v = rng.uniform(0.01, 1.0, rng.integers(4, 64))
            lhs = float((np.abs(np.fft.fft(v)) ** 2).sum())
            rhs = v.size * float((v ** 2).sum())
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_inverse_scale_law(self):
        p = random_pulse(1)
        base = dft_factor(p)
        for c in (0.5, 2.0, 9.0):
            assert dft_factor(P(p.samples * c)) == pytest.approx(base / c, rel=1e-9)

    def test_zero_sum_rejected(self):
        with pytest.raises(ValueError):
            dft_factor(P([1.0, -1.0, 0.0]))


class TestFga:
    def test_constant_pulse(self):
        # cosine/sine sums vanish over a full period: F = L * |4c| / f_s
        for c in (1.0, 2.5):
            f = fga_factor(P(np.full(4, c), dt=1.0))
            assert f == pytest.approx(16.0 * c, abs=1e-12)

    def test_zero_pulse(self):
        assert fga_factor(P(np.zeros(8))) == 0.0

    def test_homogeneous(self):
        p = random_pulse(2)
        base = fga_factor(p)
        for c in (0.1, 7.0):
            assert fga_factor(P(p.samples * c)) == pytest.approx(c * base, rel=1e-9)

    def test_magnitude_variant(self):
        p = random_pulse(3)
        lit = fga_factor(p, variant="literal")
        mag = fga_factor(p, variant="magnitude")
        assert lit != mag  # the variants genuinely differ on generic pulses
        with pytest.raises(ValueError):
            fga_factor(p, variant="bogus")

    def test_sample_rate_scaling(self):
        v = random_pulse(4).samples
        f1 = fga_factor(P(v, dt=1.0))
        f2 = fga_factor(P(v, dt=2.0))
        assert f2 == pytest.approx(2.0 * f1, rel=1e-12)


class TestFractalSpectrum:
    def test_power_law_slope_recovered(self):
        freqs = np.arange(0, 33) * 0.25
        values = np.ones(33)
        values[1:] = freqs[1:] ** -2.0
        spec = Spectrum(values=values, df=0.25)
        assert fs_factor(spec, a=1.0, b=1.0) == pytest.approx(3.0, rel=1e-9)

    def test_flat_spectrum(self):
        spec = Spectrum(values=np.full(16, 2.0), df=1.0)
        assert fs_factor(spec, a=2.0, b=1.0) == pytest.approx(0.5, rel=1e-12)

    def test_exponent_sweep(self):
        # the log-log estimator recovers arbitrary exponents exactly
        freqs = np.arange(1, 65) * 0.5
        for exponent in (-3.0, -1.5, 0.7):
            values = np.concatenate([[1.0], freqs ** exponent])
            spec = Spectrum(values=values, df=0.5)
            slope = 1.0 - fs_factor(spec, a=1.0, b=1.0)
            assert slope == pytest.approx(exponent, abs=1e-9)

    def test_a_zero_rejected(self):
        spec = Spectrum(values=np.ones(4), df=1.0)
        with pytest.raises(ValueError):
            fs_factor(spec, a=0.0)

    def test_too_few_bins(self):
        spec = Spectrum(values=np.array([1.0, 1.0]), df=1.0)
        with pytest.raises(ValueError):
            fs_factor(Spectrum(values=np.array([5.0]), df=1.0))
        assert spec  # sanity

    def test_periodogram_matches_definition(self):
        v = random_pulse(5).samples
        spec = periodogram(P(v, dt=0.5))
        direct = np.abs(np.fft.rfft(v)) ** 2 / v.size
        assert np.allclose(spec.values, direct, rtol=1e-12)
        assert spec.df == pytest.approx(1.0 / (v.size * 0.5))


class TestScalogram:
    def build_small_mask(self):
        p_n = SynthParams(tail_ratio=0.5, noise_sigma=0.0, length=64, seed=1)
        p_g = SynthParams(tail_ratio=0.02, noise_sigma=0.0, length=64, seed=2)
        ds = synthesize_dataset(8, 8, p_n, p_g)
        refs_n = ds.subset(ds.label_indices("neutron"))
        refs_g = ds.subset(ds.label_indices("gamma"))
        return build_scalogram_mask(refs_n, refs_g, threshold=0.2,
                                    scales=np.geomspace(1, 16, 8))

    def test_mask_builds_and_factor_bounded(self):
        mask = self.build_small_mask()
        assert mask.mask.any()
        for seed in range(5):
            f = sd_factor(random_pulse(seed, length=64), mask)
            assert 0.0 <= f <= 1.0

    def test_all_masked_cells_lit_gives_one(self):
        # choose the mask to be exactly the pulse's own binarized cells
        p = random_pulse(7, length=64)
        scales = np.geomspace(1, 16, 6)
        coeffs = cwt_matrix(p.samples[None, :], scales)[0]
        b = coeffs >= 0.3 * coeffs.max()
        mask = ScalogramMask(mask=b, threshold=0.3, scales=scales)
        assert sd_factor(p, mask) == pytest.approx(1.0)

    def test_zero_pulse_gives_zero(self):
        mask = self.build_small_mask()
        assert sd_factor(P(np.zeros(64)), mask) == 0.0

    def test_single_cell_mask_direct_lookup(self):
        p = random_pulse(8, length=64)
        scales = np.geomspace(1, 16, 6)
        # oracle: brute-force convolution scalogram, binarized by hand
        coeffs = np.stack([np.abs(conv_same_direct(p.samples, marr_kernel(s))) for s in scales])
        b = coeffs >= 0.4 * coeffs.max()
        cell = (3, 20)
        mask = np.zeros_like(b)
        mask[cell] = True
        got = sd_factor(p, ScalogramMask(mask=mask, threshold=0.4, scales=scales))
        assert got == float(b[cell])

    def test_batch_matches_single(self):
        mask = self.build_small_mask()
        mat = np.stack([random_pulse(s, length=64).samples for s in range(4)])
        batch = sd_factor_batch(mat, mask)
        single = [sd_factor(P(row), mask) for row in mat]
        assert np.allclose(batch, single, rtol=0, atol=0)

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError, match="no true cells"):
            ScalogramMask(mask=np.zeros((2, 4), dtype=bool), threshold=0.5,
                          scales=np.array([1.0, 2.0]))

    def test_length_mismatch(self):
        mask = self.build_small_mask()
        with pytest.raises(ValueError, match="length"):
            sd_factor(P(np.ones(32)), mask)


class TestSdcc:
    def test_two_ones(self):
        assert sdcc_factor(P([1.0, 1.0])) == pytest.approx(math.log(2.0), rel=1e-12)

    def test_single_e(self):
        assert sdcc_factor(P([math.e])) == pytest.approx(2.0, rel=1e-12)

    def test_log_shift_law(self):
        p = random_pulse(9)
        base = sdcc_factor(p)
        for c in (0.25, 4.0):
            shifted = sdcc_factor(P(p.samples * c))
            assert shifted - base == pytest.approx(2.0 * math.log(c), abs=1e-9)

    def test_zero_pulse_rejected(self):
        with pytest.raises(ValueError):
            sdcc_factor(P(np.zeros(4)))


class TestWt1:
    def test_zero_pulse_rejected(self):
        with pytest.raises(ValueError):
            wt1_factor(P(np.zeros(64)))

    def test_equal_scales_give_one(self):
        p = random_pulse(10)
        assert wt1_factor(p, 16, 16) == pytest.approx(1.0, rel=1e-12)

    def test_matches_direct_convolution_oracle(self):
        p = random_pulse(11)
        t = np.arange(len(p), dtype=float)
        num = np.abs(t * conv_same_direct(p.samples, haar_kernel(28))).sum()
        den = np.abs(t * conv_same_direct(p.samples, haar_kernel(40))).sum()
        assert wt1_factor(p, 28, 40) == pytest.approx(math.sqrt(num / den), rel=1e-9)

    def test_haar_kernel_shape(self):
        k = haar_kernel(4)
        assert np.allclose(k, [0.5, 0.5, -0.5, -0.5])
        k5 = haar_kernel(5)
        assert k5.size == 5 and k5[2] == 0.0 and abs(k5.sum()) < 1e-15


class TestWt2:
    # length-9 vector solved so its Marr transform (scale 2) is <= 0
    # everywhere while the plain sum stays positive
    DEGENERATE = np.array([
        134.44296052, -415.66261181, 777.07954975, -1037.07609977,
        1095.83038882, -919.40214875, 613.31806046, -293.93785202,
        85.49556577,
    ])

    def test_vanishing_positive_part_gives_two(self):
        w = conv_same_direct(self.DEGENERATE, marr_kernel(2.0))
        assert self.DEGENERATE.sum() > 0
        assert w.max() < 0  # premise checked with the independent oracle
        assert wt2_factor(P(self.DEGENERATE), 2.0) == pytest.approx(2.0, abs=1e-12)

    def test_equal_parts_give_one(self):
        # bisect a mix of pulse and constant offset until the positive part
        # of the oracle transform equals the plain sum, then F must be 1
        raw = random_pulse(12, length=64).samples
        base = raw - raw.mean()  # near-zero sum, sizeable transform
        kernel = marr_kernel(4.0)

        def parts(offset):
            v = base + offset
            w = conv_same_direct(v, kernel)
            return v.sum(), np.clip(w, 0, None).sum()

        lo, hi = 1e-4, 5.0
        s_lo, p_lo = parts(lo)
        assert p_lo > s_lo  # transform-heavy at vanishing offset
        for _ in range(80):
            mid = (lo + hi) / 2
            s, p = parts(mid)
            if p > s:
                lo = mid
            else:
                hi = mid
        v = base + (lo + hi) / 2
        assert wt2_factor(P(v), 4.0) == pytest.approx(1.0, abs=1e-6)

    def test_matches_direct_convolution_oracle(self):
        p = random_pulse(13)
        w = conv_same_direct(p.samples, marr_kernel(8.0))
        expected = 2.0 * p.samples.sum() / (p.samples.sum() + np.clip(w, 0, None).sum())
        assert wt2_factor(p, 8.0) == pytest.approx(expected, rel=1e-9)

    def test_scale_invariance(self):
        p = random_pulse(14)
        base = wt2_factor(p)
        for c in (0.3, 6.0):
            assert wt2_factor(P(p.samples * c)) == pytest.approx(base, rel=1e-9)

    def test_non_positive_sum_rejected(self):
        with pytest.raises(ValueError):
            wt2_factor(P([-1.0, 0.5]))


class TestConvolutionHelper:
    def test_matches_numpy_convolve(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            x = rng.standard_normal(rng.integers(8, 64))
            k = rng.standard_normal(rng.integers(2, 17))
            ours = convolve_same_batch(x[None, :], k)[0]
            ref = np.convolve(x, k, mode="same")
            assert np.allclose(ours, ref, rtol=1e-10, atol=1e-10)

    def test_marr_kernel_properties(self):
        for s in (1.0, 3.5, 8.0):
            k = marr_kernel(s)
            assert (k ** 2).sum() == pytest.approx(1.0, rel=1e-12)
            assert k.size == 2 * math.ceil(4 * s) + 1
            assert k[k.size // 2] == k.max()

    def test_default_scales(self):
        assert DEFAULT_CWT_SCALES.size == 50
        assert DEFAULT_CWT_SCALES[0] == pytest.approx(1.0)
        assert DEFAULT_CWT_SCALES[-1] == pytest.approx(64.0)
