import math

import numpy as np
import pytest

from eitstore.counting import (
    CoincidenceHistogram,
    DetectionRecord,
    beamsplit,
    coherence_time_fwhm,
    coincidence_histogram,
    detect,
    estimate_g2_zero,
    merge_histograms,
    normalize_g2,
    normalize_g2_pulsed,
)
from eitstore.errors import NoPeakError, NormalizationError
from eitstore.sources import (
    SourceModel,
    g2_squeezed_vacuum,
    g2_time_averaged,
    sample_photon_emissions,
    trial_rng,
)


def pdc_chain(r, coherence, window_s, seed, efficiency=1.0, jitter=0.0,
              bin_s=None, range_s=None):
    """sources -> beamsplit -> detect -> histogram, stationary pdc stream."""
    model = SourceModel.pdc(r, coherence)
    rng = trial_rng(seed)
    times = sample_photon_emissions(model, (0.0, window_s), rng)
    a, b = beamsplit(times, rng)
    rec_a = detect(a, efficiency, jitter, rng, label="D1")
    rec_b = detect(b, efficiency, jitter, rng, label="D2")
    return coincidence_histogram(
        rec_a, rec_b, bin_s=bin_s, range_s=range_s, duration_s=window_s
    )


class TestBeamsplit:
    def test_empty(self):
        a, b = beamsplit(np.empty(0), 1)
        assert a.size == 0 and b.size == 0

    def test_binomial_split(self):
        n = 1_000_000
        a, b = beamsplit(np.arange(n, dtype=float), 2)
        assert abs(a.size - n / 2) < 3 * math.sqrt(n * 0.25)

    def test_conservation_as_multiset(self):
        rng = trial_rng(3)
        times = np.sort(rng.random(10_000))
        a, b = beamsplit(times, 4)
        assert a.size + b.size == times.size
        assert np.array_equal(np.sort(np.concatenate([a, b])), times)


class TestDetect:
    def test_identity(self):
        times = np.sort(trial_rng(5).random(1000))
        rec = detect(times, 1.0, 0.0, 6)
        assert np.array_equal(rec.timestamps, times)

    def test_thinning_statistics(self):
        n = 1_000_000
        rec = detect(np.arange(n, dtype=float), 0.62, 0.0, 7)
        assert abs(len(rec) - 0.62 * n) < 3 * math.sqrt(n * 0.62 * 0.38)

    def test_jitter_spread(self):
        times = np.full(100_000, 1.0)
        rec = detect(times, 1.0, 0.35e-9, 8)
        assert rec.timestamps.std() == pytest.approx(0.35e-9, rel=0.02)
        assert np.all(np.diff(rec.timestamps) >= 0)

    def test_validation(self):
        with pytest.raises(ValueError):
            detect(np.empty(0), 1.3, 0.0, 1)
        with pytest.raises(ValueError):
            detect(np.empty(0), 0.5, -1.0, 1)


class TestDetectionRecord:
    def test_sorted_enforced(self):
        with pytest.raises(ValueError):
            DetectionRecord(np.array([2.0, 1.0]))
        with pytest.raises(ValueError):
            DetectionRecord(np.array([-1.0, 1.0]))


class TestCoincidenceHistogram:
    def test_single_equal_tags(self):
        h = coincidence_histogram(
            np.array([5.0]), np.array([5.0]), bin_s=1.0, range_s=10.0, duration_s=10.0
        )
        assert h.counts.sum() == 1
        assert h.counts[h.n_bins // 2] == 1

    def test_poisson_streams_flat_and_accidental_rate(self):
        rng = trial_rng(10)
        duration = 1.0
        r1, r2 = 40_000.0, 30_000.0
        starts = np.sort(rng.random(rng.poisson(r1 * duration)) * duration)
        stops = np.sort(rng.random(rng.poisson(r2 * duration)) * duration)
        bin_s = 1e-4
        h = coincidence_histogram(starts, stops, bin_s=bin_s, range_s=30 * bin_s,
                                  duration_s=duration)
        expected = r1 * r2 * bin_s * duration
        sigma = math.sqrt(expected)
        assert np.all(np.abs(h.counts - expected) < 4 * sigma)
        g2 = normalize_g2(h)
        value, err = estimate_g2_zero(g2)
        assert abs(value - 1.0) < 3 * err

    def test_gate_filters_both_channels(self):
        starts = np.array([0.1, 0.5, 0.9])
        stops = np.array([0.1, 0.5, 0.9])
        h = coincidence_histogram(
            starts, stops, bin_s=0.01, range_s=0.2, gate=(0.4, 0.6), duration_s=1.0
        )
        assert h.total_starts == 1 and h.total_stops == 1
        assert h.counts.sum() == 1

    def test_periodic_gate(self):
        starts = np.array([0.5, 1.5, 2.5, 3.2])
        stops = np.array([0.5, 1.5, 2.5, 3.2])
        h = coincidence_histogram(
            starts, stops, bin_s=0.01, range_s=0.2, gate=(0.4, 0.6, 1.0),
            duration_s=4.0,
        )
        assert h.total_starts == 3  # 3.2 falls outside the per-period gate

    def test_first_stop_mode_subset_of_all_pairs(self):
        rng = trial_rng(11)
        starts = np.sort(rng.random(500))
        stops = np.sort(rng.random(500))
        h_all = coincidence_histogram(starts, stops, 0.01, 0.2, duration_s=1.0)
        h_first = coincidence_histogram(
            starts, stops, 0.01, 0.2, duration_s=1.0, mode="first_stop"
        )
        assert h_first.counts.sum() <= h_all.counts.sum()
        assert h_first.counts.sum() <= starts.size

    def test_pulsed_pdc_sharp_peak_on_pedestal(self):
        # Pulse-shaped pdc emission: the raw histogram shows the double
        # structure of a sharp pair peak on a pulse-wide pedestal.
        rng = trial_rng(12)
        period, pulse_len, n_pulses = 1.09e-6, 0.2e-6, 400
        model = SourceModel.pdc(0.9, 0.2e-9)
        chunks = []
        for k in range(n_pulses):
            t = sample_photon_emissions(model, (0.0, pulse_len), rng)
            chunks.append(t + k * period)
        times = np.concatenate(chunks)
        a, b = beamsplit(times, rng)
        h = coincidence_histogram(a, b, bin_s=1.6e-9, range_s=300e-9,
                                  duration_s=n_pulses * period)
        k0 = h.n_bins // 2
        peak = h.counts[k0]
        pedestal = h.counts[k0 + 10 : k0 + 40].mean()  # 16-64 ns: pedestal only
        far = h.counts[:20].mean()  # |tau| ~ 0.3 us: beyond the pulse ACF
        assert peak > 3 * pedestal
        assert pedestal > 3 * far

    def test_range_must_cover_20_bins(self):
        with pytest.raises(ValueError):
            coincidence_histogram(np.array([1.0]), np.array([1.0]), 1.0, 5.0)

    def test_empty_records_give_zero_histogram(self):
        h = coincidence_histogram(np.empty(0), np.empty(0), 1.0, 20.0, duration_s=1.0)
        assert h.counts.sum() == 0
        assert h.n_bins >= 20


class TestMergeHistograms:
    def test_associative_commutative_bitwise(self):
        rng = trial_rng(13)
        hs = []
        for _ in range(3):
            starts = np.sort(rng.random(300))
            stops = np.sort(rng.random(300))
            hs.append(coincidence_histogram(starts, stops, 0.01, 0.2, duration_s=1.0))
        m1 = merge_histograms([hs[0], hs[1], hs[2]])
        m2 = merge_histograms([hs[2], hs[0], hs[1]])
        m3 = merge_histograms([merge_histograms([hs[0], hs[1]]), hs[2]])
        assert np.array_equal(m1.counts, m2.counts)
        assert np.array_equal(m1.counts, m3.counts)
        assert m1.total_starts == m2.total_starts == m3.total_starts

    def test_mismatched_bins_rejected(self):
        h1 = coincidence_histogram(np.array([1.0]), np.array([1.0]), 0.01, 0.2,
                                   duration_s=1.0)
        h2 = coincidence_histogram(np.array([1.0]), np.array([1.0]), 0.02, 0.4,
                                   duration_s=1.0)
        with pytest.raises(ValueError):
            merge_histograms([h1, h2])


class TestNormalize:
    def test_flat_histogram_is_unity(self):
        h = CoincidenceHistogram(
            bin_s=1.0,
            counts=np.full(41, 1000),
            total_starts=100,
            total_stops=100,
            duration_s=1.0,
        )
        g2 = normalize_g2(h)
        assert np.allclose(g2.g2, 1.0)

    def test_zero_baseline_raises(self):
        h = CoincidenceHistogram(
            bin_s=1.0,
            counts=np.zeros(41, dtype=np.int64),
            total_starts=0,
            total_stops=0,
            duration_s=1.0,
        )
        with pytest.raises(NormalizationError):
            normalize_g2(h)

    def test_pulsed_normalization_flattens_pedestal(self):
        # Coherent pulsed light: the raw histogram carries the envelope ACF,
        # the shifted-pulse normalization must return a flat unity g2.
        rng = trial_rng(14)
        period, n_pulses = 1.0e-6, 3000
        chunks = []
        for k in range(n_pulses):
            n = rng.poisson(30.0)
            local = 675e-9 + np.sort(rng.random(n)) * 70e-9
            chunks.append(local + k * period)
        times = np.concatenate(chunks)
        a, b = beamsplit(times, rng)
        sig = coincidence_histogram(a, b, 2.3e-9, 30e-9, duration_s=n_pulses * period)
        acc = coincidence_histogram(a, b - period, 2.3e-9, 30e-9,
                                    duration_s=n_pulses * period)
        g2 = normalize_g2_pulsed(sig, acc)
        value, err = estimate_g2_zero(g2)
        assert abs(value - 1.0) < 3 * err
        # Raw histogram is pedestal-shaped (non-flat) across this range.
        inner = sig.counts[sig.n_bins // 2]
        outer = sig.counts[:3].mean()
        assert inner > 1.3 * outer


class TestEstimateAndCoherenceTime:
    def test_all_zero_histogram_error_propagates(self):
        h = CoincidenceHistogram(
            bin_s=1.0,
            counts=np.zeros(41, dtype=np.int64),
            total_starts=0,
            total_stops=0,
            duration_s=1.0,
        )
        with pytest.raises(NormalizationError):
            normalize_g2(h)

    def test_flat_array_has_no_peak(self):
        h = CoincidenceHistogram(
            bin_s=1.0,
            counts=np.full(41, 5000),
            total_starts=100,
            total_stops=100,
            duration_s=1.0,
        )
        with pytest.raises(NoPeakError):
            coherence_time_fwhm(normalize_g2(h))

    def test_known_gaussian_peak_width(self):
        delays = (np.arange(81) - 40) * 0.1e-9
        fwhm = 1.2e-9
        profile = 1.0 + 3.0 * np.exp(-4 * math.log(2) * delays**2 / fwhm**2)
        counts = np.round(profile * 10_000).astype(np.int64)
        h = CoincidenceHistogram(
            bin_s=0.1e-9, counts=counts, total_starts=1, total_stops=1, duration_s=1.0
        )
        measured = coherence_time_fwhm(normalize_g2(h))
        assert measured == pytest.approx(fwhm, rel=0.05)


class TestMonteCarloClosure:
    def test_perfect_resolution_reproduces_g2_of_source(self):
        r = 0.17
        h = pdc_chain(r, 0.2e-9, 6e-5, seed=20, bin_s=0.05e-9, range_s=1.5e-9)
        value, err = estimate_g2_zero(normalize_g2(h))
        expected = g2_time_averaged(g2_squeezed_vacuum(r), 0.2e-9, 0.05e-9)
        assert abs(value - expected) < 3 * err

    @pytest.mark.parametrize("r", [0.17, 0.3, 0.5])
    @pytest.mark.parametrize("res_factor", [0.5, 2.0, 10.0])
    def test_grid_against_time_averaged_closed_form(self, r, res_factor):
        coherence = 0.2e-9
        bin_s = res_factor * coherence
        window = 4e-5 * max(1.0, res_factor)
        h = pdc_chain(r, coherence, window, seed=int(100 * r + res_factor),
                      bin_s=bin_s, range_s=25 * bin_s)
        value, err = estimate_g2_zero(normalize_g2(h))
        expected = g2_time_averaged(g2_squeezed_vacuum(r), coherence, bin_s)
        assert abs(value - expected) < 3 * max(err, 1e-6)

    @pytest.mark.parametrize("efficiency", [0.1, 0.62, 1.0])
    def test_loss_invariance(self, efficiency):
        r = 0.3
        window = 2e-5 / efficiency**2
        h = pdc_chain(r, 0.2e-9, window, seed=21, efficiency=efficiency,
                      bin_s=0.46e-9, range_s=12e-9)
        value, err = estimate_g2_zero(normalize_g2(h))
        expected = g2_time_averaged(g2_squeezed_vacuum(r), 0.2e-9, 0.46e-9)
        assert abs(value - expected) < 3 * err

    def test_duplicate_world_rate_invariance(self):
        # Doubling the acquisition leaves g2 unchanged within errors.
        r = 0.3
        h1 = pdc_chain(r, 0.2e-9, 2e-5, seed=22, bin_s=0.46e-9, range_s=12e-9)
        h2 = pdc_chain(r, 0.2e-9, 4e-5, seed=23, bin_s=0.46e-9, range_s=12e-9)
        v1, e1 = estimate_g2_zero(normalize_g2(h1))
        v2, e2 = estimate_g2_zero(normalize_g2(h2))
        assert abs(v1 - v2) < 3 * math.hypot(e1, e2)

    def test_thinning_preserves_g2_estimate(self):
        # Same emission stream, g2 before vs after 10% efficiency.
        r = 0.4
        rng = trial_rng(24)
        model = SourceModel.pdc(r, 0.2e-9)
        times = sample_photon_emissions(model, (0.0, 4e-5), rng)
        a, b = beamsplit(times, rng)
        h_full = coincidence_histogram(a, b, 0.46e-9, 12e-9, duration_s=4e-5)
        a_thin = detect(a, 0.1, 0.0, rng).timestamps
        b_thin = detect(b, 0.1, 0.0, rng).timestamps
        h_thin = coincidence_histogram(a_thin, b_thin, 0.46e-9, 12e-9, duration_s=4e-5)
        v1, e1 = estimate_g2_zero(normalize_g2(h_full))
        v2, e2 = estimate_g2_zero(normalize_g2(h_thin))
        assert abs(v1 - v2) < 3 * math.hypot(e1, e2)
