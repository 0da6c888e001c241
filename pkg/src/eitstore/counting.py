"""Photodetection and coincidence analysis.

Detection records are time-tag lists per detector after beamsplitting,
Bernoulli thinning by the detector efficiency and Gaussian timing jitter.
Coincidences are binned start-stop delays.  The default correlator pairs
every start with every stop inside the delay range (all-pairs); at the count
rates simulated here pile-up is negligible and all-pairs is unbiased.  A
strict first-stop mode mirroring multi-channel-scaler electronics is
available behind a flag.

Normalization of pulsed (periodically gated) acquisitions divides by an
accidental histogram built by pairing starts with the stops of the following
pulse, which removes the pulse-envelope pedestal bin by bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoPeakError, NormalizationError
from .sources import trial_rng


@dataclass(frozen=True)
class DetectionRecord:
    """Sorted detection timestamps for one detector."""

    timestamps: np.ndarray
    label: str = ""
    efficiency: float = 1.0
    jitter_sigma: float = 0.0

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps, dtype=float)
        if ts.ndim != 1:
            raise ValueError("timestamps must be a 1-D array")
        if ts.size and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be sorted ascending")
        if ts.size and ts[0] < 0:
            raise ValueError("timestamps must be non-negative")
        object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return int(self.timestamps.size)


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Binned start-stop delay counts.

    Delay bins are centered on zero: an odd number of bins of width bin_s
    covering [-edge, +edge] exactly.
    """

    bin_s: float
    counts: np.ndarray
    total_starts: int
    total_stops: int
    duration_s: float
    gate: tuple | None = None

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size % 2 == 0:
            raise ValueError("counts must be a 1-D array with an odd number of bins")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def delays(self) -> np.ndarray:
        k = self.n_bins // 2
        return (np.arange(self.n_bins) - k) * self.bin_s

    @property
    def edge_s(self) -> float:
        return (self.n_bins / 2.0) * self.bin_s


@dataclass(frozen=True)
class G2Result:
    """Normalized coincidence rate with per-bin statistical errors."""

    delays: np.ndarray
    g2: np.ndarray
    errors: np.ndarray
    baseline_counts: float

    @property
    def bin_s(self) -> float:
        return float(self.delays[1] - self.delays[0])


def beamsplit(times, rng_seed) -> tuple[np.ndarray, np.ndarray]:
    """50/50 beamsplitter: each photon goes to output A or B independently."""
    times = np.asarray(times, dtype=float)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else trial_rng(rng_seed)
    to_a = rng.random(times.size) < 0.5
    return times[to_a], times[~to_a]


def detect(
    times,
    efficiency: float,
    jitter_sigma: float,
    rng_seed,
    label: str = "",
) -> DetectionRecord:
    """Bernoulli thinning by the efficiency, then Gaussian timing jitter.

    Jittered tags are re-sorted; tags jittered below zero are clamped to
    zero (sources keep their windows well away from the origin, so this
    affects a negligible fraction).
    """
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError("efficiency must lie in [0, 1]")
    if jitter_sigma < 0:
        raise ValueError("jitter_sigma must be non-negative")
    times = np.asarray(times, dtype=float)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else trial_rng(rng_seed)
    if efficiency < 1.0:
        times = times[rng.random(times.size) < efficiency]
    else:
        times = times.copy()
    if jitter_sigma > 0.0 and times.size:
        times = times + rng.normal(0.0, jitter_sigma, times.size)
        times.sort()
        np.clip(times, 0.0, None, out=times)
    return DetectionRecord(
        timestamps=times,
        label=label,
        efficiency=efficiency,
        jitter_sigma=jitter_sigma,
    )


def _gated(ts: np.ndarray, gate) -> np.ndarray:
    if gate is None:
        return ts
    if len(gate) == 2:
        t0, t1 = gate
        return ts[(ts >= t0) & (ts <= t1)]
    t0, t1, period = gate
    if period <= 0:
        raise ValueError("gate period must be positive")
    local = np.mod(ts, period)
    return ts[(local >= t0) & (local <= t1)]


def coincidence_histogram(
    starts,
    stops,
    bin_s: float,
    range_s: float,
    gate=None,
    duration_s: float | None = None,
    mode: str = "all_pairs",
) -> CoincidenceHistogram:
    """Histogram of (stop - start) delays.

    gate is None, (t0, t1), or (t0, t1, period) for per-pulse gating applied
    to both channels before pairing.  mode 'all_pairs' (default) counts every
    pair inside the range; 'first_stop' counts, per start, only the earliest
    stop inside the range, mirroring start-stop scaler electronics.
    """
    if bin_s <= 0:
        raise ValueError("bin width must be positive")
    if range_s < 10 * bin_s:
        raise ValueError("delay range must cover at least 20 bins")
    ts_start = starts.timestamps if isinstance(starts, DetectionRecord) else np.asarray(starts, float)
    ts_stop = stops.timestamps if isinstance(stops, DetectionRecord) else np.asarray(stops, float)
    ts_start = _gated(ts_start, gate)
    ts_stop = _gated(ts_stop, gate)

    k = int(np.floor(range_s / bin_s))
    n_bins = 2 * k + 1
    edge = (k + 0.5) * bin_s

    lo = np.searchsorted(ts_stop, ts_start - edge, side="left")
    hi = np.searchsorted(ts_stop, ts_start + edge, side="right")
    if mode == "all_pairs":
        per_start = hi - lo
        total = int(per_start.sum())
        if total:
            offsets = np.repeat(np.cumsum(per_start) - per_start, per_start)
            stop_idx = np.repeat(lo, per_start) + np.arange(total) - offsets
            delays = ts_stop[stop_idx] - np.repeat(ts_start, per_start)
        else:
            delays = np.empty(0)
    elif mode == "first_stop":
        has = hi > lo
        delays = ts_stop[lo[has]] - ts_start[has]
    else:
        raise ValueError(f"unknown correlator mode {mode!r}")

    idx = np.floor((delays + edge) / bin_s).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    counts = np.bincount(idx, minlength=n_bins) if idx.size else np.zeros(n_bins, np.int64)

    if duration_s is None:
        all_ts = np.concatenate([ts_start, ts_stop])
        duration_s = float(all_ts.max() - all_ts.min()) if all_ts.size else 0.0
    return CoincidenceHistogram(
        bin_s=bin_s,
        counts=counts.astype(np.int64),
        total_starts=int(ts_start.size),
        total_stops=int(ts_stop.size),
        duration_s=duration_s,
        gate=tuple(gate) if gate is not None else None,
    )


def merge_histograms(histograms) -> CoincidenceHistogram:
    """Sum per-trial histograms; associative and commutative by construction."""
    histograms = list(histograms)
    if not histograms:
        raise ValueError("nothing to merge")
    first = histograms[0]
    counts = np.zeros_like(first.counts)
    starts = stops = 0
    duration = 0.0
    for h in histograms:
        if h.n_bins != first.n_bins or h.bin_s != first.bin_s:
            raise ValueError("histograms must share binning to merge")
        counts = counts + h.counts
        starts += h.total_starts
        stops += h.total_stops
        duration += h.duration_s
    return CoincidenceHistogram(
        bin_s=first.bin_s,
        counts=counts,
        total_starts=starts,
        total_stops=stops,
        duration_s=duration,
        gate=first.gate,
    )


def _baseline_region(n_bins: int) -> np.ndarray:
    k = n_bins // 2
    n_outer = max(1, int(np.ceil(0.25 * k)))
    mask = np.zeros(n_bins, dtype=bool)
    mask[:n_outer] = True
    mask[-n_outer:] = True
    return mask


def normalize_g2(hist: CoincidenceHistogram) -> G2Result:
    """Divide by the far-delay baseline (mean of the outer 25% of bins).

    Valid for stationary streams whose accidental floor is flat; per-bin
    errors are Poisson, with the baseline uncertainty folded in.
    """
    mask = _baseline_region(hist.n_bins)
    if mask.sum() < 10:
        raise NormalizationError(
            "need at least 10 far-delay baseline bins; enlarge the range"
        )
    baseline_counts = hist.counts[mask]
    baseline = baseline_counts.mean()
    if baseline <= 0:
        raise NormalizationError("far-delay baseline is empty; acquire more counts")
    rel_base = np.sqrt(baseline_counts.sum()) / baseline_counts.sum()
    g2 = hist.counts / baseline
    errors = np.sqrt(
        np.maximum(hist.counts, 1) / baseline**2 + (g2 * rel_base) ** 2
    )
    return G2Result(
        delays=hist.delays,
        g2=g2,
        errors=errors,
        baseline_counts=float(baseline_counts.sum()),
    )


def normalize_g2_pulsed(
    signal: CoincidenceHistogram, accidental: CoincidenceHistogram
) -> G2Result:
    """Divide a pulsed acquisition by its shifted-pulse accidental histogram.

    The accidental histogram pairs starts with the stops of the following
    pulse; both carry the same envelope pedestal, so the ratio is the
    normalized correlation bin by bin.
    """
    if signal.n_bins != accidental.n_bins or signal.bin_s != accidental.bin_s:
        raise ValueError("signal and accidental histograms must share binning")
    if np.any(accidental.counts <= 0):
        raise NormalizationError(
            "accidental histogram has empty bins; accumulate more pulses"
        )
    g2 = signal.counts / accidental.counts
    errors = g2 * np.sqrt(
        1.0 / np.maximum(signal.counts, 1) + 1.0 / accidental.counts
    )
    return G2Result(
        delays=signal.delays,
        g2=g2,
        errors=errors,
        baseline_counts=float(accidental.counts.sum()),
    )


def estimate_g2_zero(result: G2Result) -> tuple[float, float]:
    """Value and statistical error of the zero-delay bin."""
    i = int(np.argmin(np.abs(result.delays)))
    return float(result.g2[i]), float(result.errors[i])


def coherence_time_fwhm(result: G2Result) -> float:
    """FWHM of the zero-delay bunching feature above the unit baseline.

    Requires the peak to exceed the baseline by at least five combined
    standard errors; the width is found by linear interpolation at
    half-height on each side.
    """
    i0 = int(np.argmin(np.abs(result.delays)))
    peak, err = float(result.g2[i0]), float(result.errors[i0])
    if peak - 1.0 < 5.0 * err:
        raise NoPeakError(
            f"zero-delay bin exceeds baseline by {(peak - 1.0) / err if err else 0:.1f} "
            "standard errors (need >= 5)"
        )
    half = 1.0 + (peak - 1.0) / 2.0

    def crossing(direction: int) -> float:
        j = i0
        while 0 < j < result.g2.size - 1:
            nxt = j + direction
            if result.g2[nxt] <= half:
                frac = (result.g2[j] - half) / (result.g2[j] - result.g2[nxt])
                return float(
                    result.delays[j] + frac * (result.delays[nxt] - result.delays[j])
                )
            j = nxt
        raise ValueError("half-height crossing not bracketed; enlarge the delay range")

    return crossing(+1) - crossing(-1)
