"""Statistical models of the probe light.

Three source kinds are supported: coherent pulses (Poisson photon
statistics), degenerate parametric fluorescence in the low-gain regime
(squeezed-vacuum pair statistics, photon numbers sampled from the exact
distribution P(2m) = (2m)! tanh^(2m)r / (4^m (m!)^2 cosh r)), and mixtures.

Broadband light is approximated by temporal modes: mode centers form a
Poisson process in time, photon numbers are drawn per mode, and photons are
placed around the center with a Gaussian spread chosen so the pair-delay
profile has FWHM equal to the source coherence time.  The mode pitch carries
a (g2-1)/g2 factor that removes the same-mode accidental share, which makes
the normalized coincidence estimate reproduce the closed-form g2 exactly in
expectation at any detector resolution.

Mixtures of parametric fluorescence with a mutually incoherent (phase
averaged) coherent field can be sampled jointly per mode from the displaced
squeezed-vacuum photon distribution, which reproduces the beat-noise cross
term of `g2_mixture(..., beat_resolved=True)`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import SamplingResolutionError
from .propagation import PulseEnvelope

_LN2 = math.log(2.0)
# Gaussian profile of FWHM w has peak density 1/(PROFILE_WIDTH_FACTOR * w).
_PROFILE_WIDTH_FACTOR = math.sqrt(math.pi / (4.0 * _LN2))
# Photon placement spread: pair-delay FWHM equals the coherence FWHM.
_PLACEMENT_SIGMA_FACTOR = 1.0 / (2.0 * math.sqrt(2.0 * _LN2) * math.sqrt(2.0))
_PHASE_GRID = 32  # uniform relative-phase grid for displaced sampling
_DEFAULT_NMAX = 32


def g2_squeezed_vacuum(r: float) -> float:
    """Zero-delay intensity correlation of squeezed vacuum: 3 + 1/sinh^2 r."""
    if r <= 0:
        raise ValueError("squeeze parameter must be positive (vacuum has no g2)")
    return 3.0 + 1.0 / math.sinh(r) ** 2


def g2_mixture(components, beat_resolved: bool = False) -> float:
    """g2(0) of a sum of mutually independent fields.

    components are (mean_intensity, g2_zero) pairs.  The cross term between
    distinct components is (1 + beta) I_i I_j with beta = 1 when the beat
    note falls inside the detection bandwidth (beat_resolved) and beta = 0
    otherwise.
    """
    comps = [(float(i), float(g)) for i, g in components]
    if not comps:
        raise ValueError("mixture needs at least one component")
    if any(i < 0 for i, _ in comps):
        raise ValueError("intensities must be non-negative")
    total = sum(i for i, _ in comps)
    if total <= 0:
        raise ValueError("total intensity must be positive")
    beta = 1.0 if beat_resolved else 0.0
    self_term = sum(g * i**2 for i, g in comps)
    cross = sum(
        (1.0 + beta) * ia * ib
        for k, (ia, _) in enumerate(comps)
        for l, (ib, _) in enumerate(comps)
        if k != l
    )
    return (self_term + cross) / total**2


def g2_time_averaged(
    g2_zero: float, coherence_fwhm: float, resolution_fwhm: float
) -> float:
    """g2(0) seen by a detector slower than the coherence time.

    The bunching profile is Gaussian with the given coherence FWHM; the
    detector averages it over a top-hat window of width resolution_fwhm:

        g2 = 1 + (g2_zero - 1) * sqrt(pi) * erf(x) / (2 x),
        x = sqrt(4 ln2) * resolution / (2 * coherence)
    """
    if g2_zero < 1.0:
        raise ValueError("g2_zero must be >= 1 for this bunching model")
    if coherence_fwhm <= 0 or resolution_fwhm <= 0:
        raise ValueError("widths must be positive")
    x = math.sqrt(4.0 * _LN2) * resolution_fwhm / (2.0 * coherence_fwhm)
    if x < 1e-8:
        overlap = 1.0
    else:
        overlap = math.sqrt(math.pi) * erf(x) / (2.0 * x)
    return 1.0 + (g2_zero - 1.0) * overlap


def coherence_fwhm_for_bandwidth(bandwidth_hz: float, shape: str = "lorentzian") -> float:
    """Pair-correlation FWHM of filtered light with the given spectral FWHM.

    Wiener-Khinchin for the two standard window shapes: lorentzian gives
    ln2 / (pi B), gaussian gives 2 sqrt(2) ln2 / (pi B).
    """
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if shape == "lorentzian":
        return _LN2 / (math.pi * bandwidth_hz)
    if shape == "gaussian":
        return 2.0 * math.sqrt(2.0) * _LN2 / (math.pi * bandwidth_hz)
    raise ValueError(f"unknown spectral shape {shape!r}")


def squeezed_vacuum_pmf(r: float, n_max: int = _DEFAULT_NMAX) -> np.ndarray:
    """Photon-number distribution of squeezed vacuum, n = 0..n_max.

    Only even photon numbers are populated (pair emission).
    """
    if r < 0:
        raise ValueError("squeeze parameter must be non-negative")
    pmf = np.zeros(n_max + 1)
    pmf[0] = 1.0 / math.cosh(r)
    t2 = math.tanh(r) ** 2
    m = 0
    while 2 * (m + 1) <= n_max:
        pmf[2 * (m + 1)] = pmf[2 * m] * t2 * (2 * m + 1) / (2 * m + 2)
        m += 1
    return pmf


def displaced_squeezed_pmf(
    r: float, alpha_mag: float, phase: float, n_max: int = _DEFAULT_NMAX
) -> np.ndarray:
    """Photon-number distribution of a displaced squeezed vacuum state.

    phase is the angle between the displacement and the squeezing axis.
    Computed from the Hermite-polynomial amplitudes and renormalized over
    the truncated Fock space.
    """
    if r < 0 or alpha_mag < 0:
        raise ValueError("r and alpha_mag must be non-negative")
    if r < 1e-12:
        # Poisson limit
        n = np.arange(n_max + 1)
        lam = alpha_mag**2
        if lam == 0.0:
            pmf = np.zeros(n_max + 1)
            pmf[0] = 1.0
            return pmf
        log_pmf = n * math.log(lam) - lam - [math.lgamma(k + 1) for k in n]
        pmf = np.exp(log_pmf)
        return pmf / pmf.sum()
    mu = math.cosh(r)
    nu = math.sinh(r)
    alpha = alpha_mag * complex(math.cos(phase), math.sin(phase))
    beta = mu * alpha + nu * np.conj(alpha)
    x = beta / math.sqrt(2.0 * mu * nu)
    # Hermite recursion H_{n+1}(x) = 2x H_n - 2n H_{n-1} with complex x,
    # folded with the prefactors to avoid overflow.
    pref = np.exp(-0.5 * abs(alpha) ** 2 - (nu / (2.0 * mu)) * alpha**2)
    amp = np.zeros(n_max + 1, dtype=complex)
    h_prev = complex(1.0)  # H_0
    h_curr = 2.0 * x  # H_1
    ratio = nu / (2.0 * mu)
    amp[0] = pref / math.sqrt(mu)
    if n_max >= 1:
        amp[1] = amp[0] * math.sqrt(ratio) * h_curr / math.sqrt(1.0)
    for n in range(2, n_max + 1):
        h_next = 2.0 * x * h_curr - 2.0 * (n - 1) * h_prev
        h_prev, h_curr = h_curr, h_next
        amp[n] = (
            amp[0]
            * ratio ** (n / 2.0)
            * h_curr
            / math.sqrt(math.gamma(n + 1))
        )
    pmf = np.abs(amp) ** 2
    total = pmf.sum()
    if not np.isfinite(total) or total <= 0:
        raise ValueError("displaced squeezed pmf overflowed; reduce r or alpha")
    return pmf / total


def mode_pitch(coherence_fwhm: float, g2_zero: float) -> float:
    """Temporal-mode pitch making the sampled g2 exact in expectation.

    The Gaussian pair profile of FWHM w has peak density 1/(1.0645 w); the
    (g2-1)/g2 factor removes the same-mode accidental share so that the
    normalized coincidence peak equals g2_zero.
    """
    if coherence_fwhm <= 0:
        raise ValueError("coherence_fwhm must be positive")
    if g2_zero <= 1.0:
        raise ValueError("mode sampling needs g2_zero > 1")
    return _PROFILE_WIDTH_FACTOR * coherence_fwhm * (g2_zero - 1.0) / g2_zero


def pair_moment_mixture(i_coherent: float, i_pdc: float) -> tuple[float, float]:
    """Per-mode <n> and <n(n-1)> of pdc light plus phase-averaged coherent."""
    n1 = i_coherent + i_pdc
    n2 = i_coherent**2 + 4.0 * i_coherent * i_pdc + 3.0 * i_pdc**2 + i_pdc
    return n1, n2


def sample_mode_occupations(pmf: np.ndarray, n_modes: int, rng) -> np.ndarray:
    """Inverse-CDF draw of photon numbers for n_modes temporal modes."""
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n_modes), side="right").astype(np.int64)


def place_mode_photons(
    centers: np.ndarray, counts: np.ndarray, coherence_fwhm: float, rng
) -> np.ndarray:
    """Gaussian placement of photons around their mode centers (unsorted)."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    sigma = _PLACEMENT_SIGMA_FACTOR * coherence_fwhm
    return np.repeat(centers, counts) + rng.normal(0.0, sigma, total)


def trial_rng(seed: int, trial_index: int = 0) -> np.random.Generator:
    """Deterministic per-trial generator.

    Splitting rule: the entropy of trial k is the pair (seed, k) fed to
    numpy's SeedSequence, so distinct trials are statistically independent
    and reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(trial_index))))


@dataclass(frozen=True)
class SourceModel:
    """Statistical description of the probe light.

    kind is one of coherent | pdc | mixture.  envelope is the intensity
    profile; None means flat over any sampled window.  For coherent sources
    mean_photons is the expected photon count in the sampled window.  For pdc
    sources the flux follows from squeeze_r and coherence_fwhm (mean photons
    per temporal mode is sinh^2 of the local squeeze parameter, which tracks
    the envelope amplitude).  Mixture components are (SourceModel, weight)
    pairs; weights scale component intensities.
    """

    kind: str
    envelope: PulseEnvelope | None = None
    mean_photons: float | None = None
    squeeze_r: float | None = None
    coherence_fwhm: float | None = None
    components: tuple = ()
    beat_resolved: bool = False

    def __post_init__(self) -> None:
        if self.kind == "coherent":
            if self.mean_photons is None or self.mean_photons < 0:
                raise ValueError("coherent source needs mean_photons >= 0")
        elif self.kind == "pdc":
            if self.squeeze_r is None or self.squeeze_r <= 0:
                raise ValueError("pdc source needs squeeze_r > 0")
            if self.coherence_fwhm is None or self.coherence_fwhm <= 0:
                raise ValueError("pdc source needs coherence_fwhm > 0")
        elif self.kind == "mixture":
            if not self.components:
                raise ValueError("mixture needs at least one component")
            if any(w < 0 for _, w in self.components):
                raise ValueError("mixture weights must be non-negative")
            if not any(w > 0 for _, w in self.components):
                raise ValueError("at least one mixture weight must be positive")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def coherent(cls, mean_photons: float, envelope: PulseEnvelope | None = None):
        return cls(kind="coherent", envelope=envelope, mean_photons=mean_photons)

    @classmethod
    def pdc(
        cls,
        squeeze_r: float,
        coherence_fwhm: float,
        envelope: PulseEnvelope | None = None,
    ):
        return cls(
            kind="pdc",
            envelope=envelope,
            squeeze_r=squeeze_r,
            coherence_fwhm=coherence_fwhm,
        )

    @classmethod
    def mixture(cls, components, beat_resolved: bool = False):
        return cls(
            kind="mixture",
            components=tuple(components),
            beat_resolved=beat_resolved,
        )

    def pair_amplitude(self) -> float | None:
        """Two-photon amplitude of the low-gain pair state, tanh(r)/sqrt(2).

        The pdc state at low gain is |0> + eps |2> with eps given by this
        amplitude; None for non-pdc sources.
        """
        if self.kind != "pdc":
            return None
        return math.tanh(self.squeeze_r) / math.sqrt(2.0)


def _envelope_profile(model: SourceModel, window) -> tuple[np.ndarray, np.ndarray]:
    """Times and relative amplitudes (peak 1) across the window."""
    t0, t1 = window
    env = model.envelope
    if env is None:
        t = np.linspace(t0, t1, 2)
        return t, np.ones(2)
    if t0 < env.t0 - 1e-15 or t1 > env.t_end + 1e-15:
        raise ValueError("sampling window must lie within the envelope support")
    amps = np.abs(env.samples)
    peak = amps.max()
    if peak == 0:
        raise ValueError("envelope is identically zero")
    mask = (env.times >= t0) & (env.times <= t1)
    if mask.sum() < 2:
        raise ValueError("window must span at least two envelope samples")
    return env.times[mask], amps[mask] / peak


def _inhomogeneous_times(t, density, rng) -> np.ndarray:
    """Poisson sample with piecewise-linear density over the grid t."""
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(t))])
    total = cum[-1]
    n = rng.poisson(total)
    if n == 0:
        return np.empty(0)
    u = rng.random(n) * total
    return np.interp(u, cum, t)


def _sample_coherent(model, window, rng, rate_scale=1.0) -> np.ndarray:
    t, amps = _envelope_profile(model, window)
    intensity = amps**2
    weight = np.trapezoid(intensity, t)
    if weight == 0.0:
        return np.empty(0)
    mean = model.mean_photons * rate_scale
    density = intensity * (mean / weight)
    return _inhomogeneous_times(t, density, rng)


def _local_squeeze(model, window, intensity_scale=1.0):
    """Grid of (times, r_local) across the window, envelope-modulated."""
    t, amps = _envelope_profile(model, window)
    if model.envelope is not None and np.ptp(amps) > 0:
        if model.coherence_fwhm < 10.0 * model.envelope.dt:
            raise SamplingResolutionError(
                "envelope grid too coarse to modulate temporal modes: need "
                "coherence_fwhm >= 10 x envelope dt"
            )
    r_local = model.squeeze_r * amps
    if intensity_scale != 1.0:
        r_local = np.arcsinh(np.sqrt(intensity_scale) * np.sinh(r_local))
    return t, r_local


def _quantize(values: np.ndarray, n_levels: int = 64):
    """Map values to representative levels; returns (levels, index_per_value)."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo < 1e-12 * max(hi, 1.0):
        return np.array([0.5 * (lo + hi)]), np.zeros(values.size, dtype=np.int64)
    levels = np.linspace(lo, hi, n_levels)
    idx = np.clip(np.round((values - lo) / (hi - lo) * (n_levels - 1)), 0, n_levels - 1)
    return levels, idx.astype(np.int64)


def _sample_pdc(model, window, rng, intensity_scale=1.0) -> np.ndarray:
    t, r_local = _local_squeeze(model, window, intensity_scale)
    tau = model.coherence_fwhm
    sinh2 = np.sinh(r_local) ** 2
    with np.errstate(divide="ignore"):
        g2z = 3.0 + 1.0 / np.where(sinh2 > 0, sinh2, np.inf)
    pitch = _PROFILE_WIDTH_FACTOR * tau * (g2z - 1.0) / g2z
    density = np.where(sinh2 > 0, 1.0 / pitch, 0.0)
    centers = _inhomogeneous_times(t, density, rng)
    if centers.size == 0:
        return np.empty(0)
    r_at = np.interp(centers, t, r_local)
    levels, idx = _quantize(r_at)
    counts = np.zeros(centers.size, dtype=np.int64)
    for k, r_k in enumerate(levels):
        members = idx == k
        if not members.any():
            continue
        pmf = squeezed_vacuum_pmf(float(r_k), _nmax_for(float(r_k)))
        counts[members] = sample_mode_occupations(pmf, int(members.sum()), rng)
    times = place_mode_photons(centers, counts, tau, rng)
    t0, t1 = window
    return times[(times >= t0) & (times <= t1)]


def _nmax_for(r: float) -> int:
    mean = math.sinh(r) ** 2
    return int(max(_DEFAULT_NMAX, min(4096, 8 * mean + 32)))


def _sample_displaced_mixture(pdc_model, ratio, window, rng, pdc_scale=1.0) -> np.ndarray:
    """Joint per-mode sampling of pdc + phase-averaged coherent light.

    ratio is the coherent-to-pdc mean intensity ratio, applied per mode.
    """
    t, r_local = _local_squeeze(pdc_model, window, pdc_scale)
    tau = pdc_model.coherence_fwhm
    sinh2 = np.sinh(r_local) ** 2
    i_coh = ratio * sinh2
    n1, n2 = pair_moment_mixture(i_coh, sinh2)
    with np.errstate(divide="ignore", invalid="ignore"):
        g2z = np.where(n1 > 0, n2 / np.where(n1 > 0, n1, 1.0) ** 2, np.inf)
    pitch = _PROFILE_WIDTH_FACTOR * tau * np.where(g2z > 1, (g2z - 1.0) / g2z, 1.0)
    density = np.where(n1 > 0, 1.0 / pitch, 0.0)
    centers = _inhomogeneous_times(t, density, rng)
    if centers.size == 0:
        return np.empty(0)
    r_at = np.interp(centers, t, r_local)
    levels, idx = _quantize(r_at)
    phases = rng.integers(0, _PHASE_GRID, centers.size)
    counts = np.zeros(centers.size, dtype=np.int64)
    phase_angles = 2.0 * np.pi * np.arange(_PHASE_GRID) / _PHASE_GRID
    for k, r_k in enumerate(levels):
        members = idx == k
        if not members.any():
            continue
        alpha = math.sqrt(ratio) * math.sinh(float(r_k))
        # the factorial in the Hermite amplitudes overflows beyond n ~ 170
        n_max = min(_nmax_for(float(r_k)), 128)
        cdfs = np.empty((_PHASE_GRID, n_max + 1))
        for p, phi in enumerate(phase_angles):
            cdf = np.cumsum(displaced_squeezed_pmf(float(r_k), alpha, phi, n_max))
            cdfs[p] = cdf / cdf[-1]
        u = rng.random(int(members.sum()))
        rows = cdfs[phases[members]]
        counts[members] = (u[:, None] > rows).sum(axis=1)
    times = place_mode_photons(centers, counts, tau, rng)
    t0, t1 = window
    return times[(times >= t0) & (times <= t1)]


def expected_pdc_photons(model: SourceModel, window, intensity_scale=1.0) -> float:
    """Expected photon count of a pdc source over the window."""
    t, r_local = _local_squeeze(model, window, intensity_scale)
    tau = model.coherence_fwhm
    sinh2 = np.sinh(r_local) ** 2
    with np.errstate(divide="ignore"):
        g2z = 3.0 + 1.0 / np.where(sinh2 > 0, sinh2, np.inf)
    pitch = _PROFILE_WIDTH_FACTOR * tau * (g2z - 1.0) / g2z
    flux = np.where(sinh2 > 0, sinh2 / pitch, 0.0)
    return float(np.trapezoid(flux, t))


def sample_photon_emissions(model: SourceModel, window, rng_seed) -> np.ndarray:
    """Sample photon emission times over window = (t_start, t_end).

    Deterministic given (rng_seed, model, window); rng_seed may be an int or
    a numpy Generator.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not (np.isfinite(t0) and np.isfinite(t1)) or t1 <= t0:
        raise ValueError("window must be a finite (t_start, t_end) with t_end > t_start")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else trial_rng(rng_seed)
    times = _sample_any(model, (t0, t1), rng)
    return np.sort(times)


def _sample_any(model, window, rng, scale=1.0) -> np.ndarray:
    if model.kind == "coherent":
        return _sample_coherent(model, window, rng, scale)
    if model.kind == "pdc":
        return _sample_pdc(model, window, rng, scale)
    parts = _mixture_parts(model)
    if parts is not None:
        pdc_model, w_pdc, w_coh = parts
        return _sample_displaced_mixture(
            pdc_model, w_coh / w_pdc, window, rng, pdc_scale=scale * w_pdc
        )
    samples = [
        _sample_any(comp, window, rng, scale * weight)
        for comp, weight in model.components
        if weight > 0
    ]
    return np.concatenate(samples) if samples else np.empty(0)


def _mixture_parts(model: SourceModel):
    """(pdc, w_pdc, w_coh) when the mixture is a beat-resolved pdc+coherent pair."""
    if not model.beat_resolved:
        return None
    kinds = sorted(comp.kind for comp, _ in model.components)
    if kinds != ["coherent", "pdc"]:
        raise ValueError(
            "beat-resolved sampling supports exactly one pdc and one coherent component"
        )
    pdc_model, w_pdc = next(
        (c, w) for c, w in model.components if c.kind == "pdc"
    )
    coh_model, w_coh = next(
        (c, w) for c, w in model.components if c.kind == "coherent"
    )
    if coh_model.envelope is not None:
        raise ValueError(
            "beat-resolved coherent component tracks the pdc profile; "
            "give it a flat envelope (None)"
        )
    if w_pdc <= 0:
        raise ValueError("beat-resolved mixture needs a positive pdc weight")
    return pdc_model, w_pdc, w_coh
