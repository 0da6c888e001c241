"""Pulse transport through the medium.

Two propagation paths are provided.  `propagate_static` applies the
frequency-domain transfer function to the pulse spectrum and is exact for a
time-independent control field.  `propagate_dynamic` integrates the
weak-probe Maxwell-Bloch system on a normalized z-grid in the co-moving
frame,

    dE/dz = i * kappa * P
    dP/dt = -(gamma_ca - i*Delta) P + i E + i (Omega(t)/2) S
    dS/dt = -(gamma_bc(t) - i*Delta) S + i (Omega(t)/2) P

with kappa = optical_depth * gamma_ca / 2 over unit length, so the
constant-control steady state reproduces the transfer function exactly.
Delta is the carrier detuning of the pulse envelope (convention
exp(-i*Delta*t)); the ground-state decoherence rate is gated by the relative
control intensity so that the dark (storage) interval does not decohere
inside the integrator.  Decay during storage is the separate scalar factor
`apply_storage_decay`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AliasingError, IntegratorError
from .medium import MediumParams, transfer_function

_ALIAS_BAND_FRACTION = 0.1  # outermost band fraction checked for leakage
_ALIAS_ENERGY_TOL = 1e-6


@dataclass(frozen=True)
class PulseEnvelope:
    """Complex slowly-varying field envelope on a uniform time grid.

    samples are square-root intensity in arbitrary units; carrier_detuning is
    the angular offset (rad/s) of the envelope carrier from resonance, with
    the physical convention exp(-i*delta*t).
    """

    t0: float
    dt: float
    samples: np.ndarray
    carrier_detuning: float = 0.0

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("samples must be a 1-D array with at least 2 points")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.samples.size - 1)

    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def energy(self) -> float:
        """Integrated intensity (arbitrary units x seconds)."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def detuning_grid(self) -> np.ndarray:
        """Physical angular detuning offset of each FFT bin from the carrier."""
        return -2.0 * np.pi * np.fft.fftfreq(self.samples.size, self.dt)

    @classmethod
    def gaussian(
        cls,
        peak_time: float,
        fwhm: float,
        t_start: float,
        t_end: float,
        dt: float,
        amplitude: float = 1.0,
        carrier_detuning: float = 0.0,
    ) -> "PulseEnvelope":
        """Gaussian pulse whose *intensity* FWHM is `fwhm`."""
        if fwhm <= 0:
            raise ValueError("fwhm must be positive")
        t = np.arange(t_start, t_end, dt)
        samples = amplitude * np.exp(-2.0 * np.log(2.0) * ((t - peak_time) / fwhm) ** 2)
        return cls(t0=t_start, dt=dt, samples=samples.astype(complex),
                   carrier_detuning=carrier_detuning)


@dataclass(frozen=True)
class ControlSchedule:
    """Piecewise control intensity profile with linear ramps.

    breakpoints are (time_s, relative_intensity) pairs with strictly
    increasing times and intensities in [0, 1]; each breakpoint after the
    first starts a linear ramp of duration ramp_s from the previous level to
    its own.  The first breakpoint sets the initial level.
    """

    breakpoints: tuple
    ramp_s: float = 0.0

    def __post_init__(self) -> None:
        bps = tuple((float(t), float(u)) for t, u in self.breakpoints)
        if not bps:
            raise ValueError("schedule needs at least one breakpoint")
        times = [t for t, _ in bps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("breakpoint times must be strictly increasing")
        if self.ramp_s < 0:
            raise ValueError("ramp duration must be non-negative")
        if any(b - a < self.ramp_s for a, b in zip(times, times[1:])):
            raise ValueError("breakpoints closer than one ramp duration")
        if any(not 0.0 <= u <= 1.0 for _, u in bps):
            raise ValueError("relative intensities must lie in [0, 1]")
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, level: float = 1.0) -> "ControlSchedule":
        return cls(breakpoints=((0.0, level),))

    @classmethod
    def storage(
        cls,
        off_time: float = 300e-9,
        on_time: float = 650e-9,
        ramp_s: float = 50e-9,
    ) -> "ControlSchedule":
        """Full-on, ramp off at off_time, ramp back on at on_time."""
        return cls(
            breakpoints=((0.0, 1.0), (off_time, 0.0), (on_time, 1.0)),
            ramp_s=ramp_s,
        )

    def intensity(self, t) -> np.ndarray:
        """Relative control intensity at time(s) t."""
        knot_t, knot_u = [], []
        prev = self.breakpoints[0][1]
        knot_t.append(self.breakpoints[0][0] - 1.0)
        knot_u.append(prev)
        for tb, ub in self.breakpoints[1:]:
            knot_t.extend([tb, tb + self.ramp_s if self.ramp_s > 0 else tb + 1e-15])
            knot_u.extend([prev, ub])
            prev = ub
        return np.interp(np.asarray(t, dtype=float), knot_t, knot_u,
                         left=self.breakpoints[0][1], right=prev)

    def reactivation_time(self) -> float | None:
        """Start of the last ramp-up from zero, i.e. the retrieval onset."""
        out = None
        prev = self.breakpoints[0][1]
        for tb, ub in self.breakpoints[1:]:
            if ub > prev and prev == 0.0:
                out = tb
            prev = ub
        return out


@dataclass(frozen=True)
class SpinWave:
    """Ground-state coherence amplitudes over the normalized z-grid.

    Amplitudes are scaled so that norm() is the spin-wave energy in the same
    units as PulseEnvelope.energy().
    """

    z_grid: np.ndarray
    amplitudes: np.ndarray
    time: float

    def norm(self) -> float:
        w = np.ones_like(self.z_grid)
        w[0] = w[-1] = 0.5
        dz = self.z_grid[1] - self.z_grid[0]
        return float(np.sum(w * np.abs(self.amplitudes) ** 2) * dz)


@dataclass(frozen=True)
class EnergyLedger:
    """Where the input pulse energy went, as fractions of the input.

    transmitted covers output before the retrieval onset, retrieved after it;
    stored is the residual atomic excitation at the end of the window.
    stored_peak is a diagnostic: the atomic energy at the end of the control
    switch-off ramp (not part of the closure sum).
    """

    input_energy: float
    transmitted: float
    retrieved: float
    absorbed: float
    stored: float
    stored_peak: float = 0.0
    retrieval_start: float | None = None

    def closure(self) -> float:
        return self.transmitted + self.retrieved + self.absorbed + self.stored


@dataclass(frozen=True)
class PropagationResult:
    output: PulseEnvelope
    spinwaves: list
    ledger: EnergyLedger


def propagate_static(pulse: PulseEnvelope, m: MediumParams) -> PulseEnvelope:
    """Frequency-domain propagation for a constant control field."""
    if m.optical_depth == 0.0:
        return replace(pulse, samples=pulse.samples.copy())
    spectrum = np.fft.fft(pulse.samples)
    _check_aliasing(spectrum)
    h = transfer_function(pulse.carrier_detuning + pulse.detuning_grid(), m)
    out = np.fft.ifft(spectrum * h)
    return replace(pulse, samples=out)


def _check_aliasing(spectrum: np.ndarray) -> None:
    power = np.abs(np.fft.fftshift(spectrum)) ** 2
    total = power.sum()
    if total == 0.0:
        return
    n_edge = max(1, int(round(_ALIAS_BAND_FRACTION / 2 * power.size)))
    edge = power[:n_edge].sum() + power[-n_edge:].sum()
    if edge > _ALIAS_ENERGY_TOL * total:
        raise AliasingError(
            "pulse spectrum leaks into the outer "
            f"{_ALIAS_BAND_FRACTION:.0%} of the simulation band "
            f"({edge / total:.2e} of the energy); decrease dt"
        )


def propagate_dynamic(
    pulse: PulseEnvelope,
    m: MediumParams,
    schedule: ControlSchedule,
    nz: int = 128,
) -> PropagationResult:
    """Integrate the Maxwell-Bloch system under a time-dependent control.

    Method of lines: the field is slaved to the polarization through a
    cumulative-trapezoid integral over the z-grid and the atomic variables
    advance with fixed-step RK4 on the pulse's own time grid.  Returns the
    transmitted envelope, spin-wave snapshots at the control switch-off and
    switch-on instants, and the energy ledger.
    """
    if nz < 8:
        raise ValueError("nz must be at least 8")
    for tb, _ in schedule.breakpoints[1:]:
        if not (pulse.t0 <= tb and tb + schedule.ramp_s <= pulse.t_end):
            raise ValueError(
                f"schedule breakpoint at {tb} s (+ramp) falls outside the pulse window"
            )

    t = pulse.times
    dt = pulse.dt
    n_t = t.size
    kappa = m.optical_depth * m.gamma_ca / 2.0
    delta_c = pulse.carrier_detuning
    z = np.linspace(0.0, 1.0, nz)
    dz = z[1] - z[0]
    w = np.ones(nz)
    w[0] = w[-1] = 0.5

    e_in = pulse.samples
    e_in_half = 0.5 * (e_in[:-1] + e_in[1:])
    u = np.clip(schedule.intensity(t), 0.0, 1.0)
    u_half = np.clip(schedule.intensity(t[:-1] + dt / 2.0), 0.0, 1.0)
    omega = m.omega_c * np.sqrt(u)
    omega_half = m.omega_c * np.sqrt(u_half)

    p = np.zeros(nz, dtype=complex)
    s = np.zeros(nz, dtype=complex)
    e_out = np.zeros(n_t, dtype=complex)
    absorbed = 0.0

    def rhs(p, s, e_in_t, omega_t, gbc_t):
        cum = (np.cumsum(p) - 0.5 * p - 0.5 * p[0]) * dz
        e = e_in_t + 1j * kappa * cum
        dp = -(m.gamma_ca - 1j * delta_c) * p + 1j * e + 1j * (omega_t / 2.0) * s
        ds = -(gbc_t - 1j * delta_c) * s + 1j * (omega_t / 2.0) * p
        return dp, ds, e

    snapshot_times = _snapshot_times(schedule)
    snapshots: list[SpinWave] = []
    next_snap = 0
    stored_peak = 0.0

    for i in range(n_t):
        dp1, ds1, e_now = rhs(p, s, e_in[i], omega[i], m.gamma_bc * u[i])
        e_out[i] = e_now[-1]
        absorbed += (
            2.0 * kappa * dt
            * np.sum(w * (m.gamma_ca * np.abs(p) ** 2
                          + m.gamma_bc * u[i] * np.abs(s) ** 2))
            * dz
        )
        while next_snap < len(snapshot_times) and t[i] >= snapshot_times[next_snap]:
            snapshots.append(
                SpinWave(z_grid=z, amplitudes=np.sqrt(kappa) * s, time=float(t[i]))
            )
            if next_snap == 0:
                stored_peak = kappa * float(
                    np.sum(w * (np.abs(p) ** 2 + np.abs(s) ** 2)) * dz
                )
            next_snap += 1
        if i == n_t - 1:
            break
        gbc_h = m.gamma_bc * u_half[i]
        dp2, ds2, _ = rhs(p + 0.5 * dt * dp1, s + 0.5 * dt * ds1,
                          e_in_half[i], omega_half[i], gbc_h)
        dp3, ds3, _ = rhs(p + 0.5 * dt * dp2, s + 0.5 * dt * ds2,
                          e_in_half[i], omega_half[i], gbc_h)
        dp4, ds4, _ = rhs(p + dt * dp3, s + dt * ds3,
                          e_in[i + 1], omega[i + 1], m.gamma_bc * u[i + 1])
        p = p + (dt / 6.0) * (dp1 + 2 * dp2 + 2 * dp3 + dp4)
        s = s + (dt / 6.0) * (ds1 + 2 * ds2 + 2 * ds3 + ds4)

    stored_end = kappa * float(np.sum(w * (np.abs(p) ** 2 + np.abs(s) ** 2)) * dz)
    output = replace(pulse, samples=e_out)
    ledger = _build_ledger(pulse, output, schedule, absorbed, stored_end, stored_peak)
    _check_ledger(ledger)
    return PropagationResult(output=output, spinwaves=snapshots, ledger=ledger)


def _snapshot_times(schedule: ControlSchedule) -> list[float]:
    """End of each switch-off ramp and start of each switch-on ramp."""
    times = []
    prev = schedule.breakpoints[0][1]
    for tb, ub in schedule.breakpoints[1:]:
        if ub < prev:
            times.append(tb + schedule.ramp_s)
        elif ub > prev:
            times.append(tb)
        prev = ub
    return sorted(times)


def _build_ledger(pulse, output, schedule, absorbed, stored_end, stored_peak):
    e_in = pulse.energy()
    if e_in == 0.0:
        raise ValueError("input pulse has zero energy")
    t = pulse.times
    intensity_out = np.abs(output.samples) ** 2
    t_on = schedule.reactivation_time()
    if t_on is None:
        transmitted = float(np.sum(intensity_out) * pulse.dt)
        retrieved = 0.0
    else:
        late = t >= t_on
        retrieved = float(np.sum(intensity_out[late]) * pulse.dt)
        transmitted = float(np.sum(intensity_out[~late]) * pulse.dt)
    return EnergyLedger(
        input_energy=e_in,
        transmitted=transmitted / e_in,
        retrieved=retrieved / e_in,
        absorbed=absorbed / e_in,
        stored=stored_end / e_in,
        stored_peak=stored_peak / e_in,
        retrieval_start=t_on,
    )


def _check_ledger(ledger: EnergyLedger) -> None:
    closure = ledger.closure()
    if not np.isfinite(closure) or abs(closure - 1.0) > 0.01:
        raise IntegratorError(
            f"energy ledger closes to {closure:.4f} (should be 1 +- 0.01); "
            "decrease the pulse dt or increase nz"
        )
    if ledger.transmitted + ledger.retrieved > 1.0 + 1e-6:
        raise IntegratorError("output energy exceeds input energy; decrease dt")


def apply_storage_decay(stored_energy: float, storage_time: float, tau: float) -> float:
    """Exponential decay of a stored excitation over the storage time."""
    if tau <= 0:
        raise ValueError("decay time tau must be positive")
    if storage_time < 0:
        raise ValueError("storage time must be non-negative")
    return stored_energy * np.exp(-storage_time / tau)


def filtered_fraction(
    eit_fwhm_hz: float, input_bandwidth_hz: float, retrieval_eff: float
) -> float:
    """Throughput of frequency-filtered storage: width reduction x retrieval.

    The retrieved count fraction of a broadband input is the transparency
    window width over the input bandwidth, times the retrieval efficiency of
    an in-window pulse.
    """
    if eit_fwhm_hz <= 0:
        raise ValueError("EIT window width must be positive")
    if input_bandwidth_hz < eit_fwhm_hz:
        raise ValueError("input bandwidth must be at least the window width")
    if not 0.0 <= retrieval_eff <= 1.0:
        raise ValueError("retrieval efficiency must lie in [0, 1]")
    return (eit_fwhm_hz / input_bandwidth_hz) * retrieval_eff
