"""Exception types shared across the simulator modules."""


class SimulationError(Exception):
    """Base class for all errors raised by eitstore modules."""


class CalibrationError(SimulationError):
    """Medium calibration could not meet the requested targets."""


class GridResolutionError(SimulationError):
    """A detuning or time grid is too coarse for the requested measurement."""


class AliasingError(SimulationError):
    """Pulse spectrum does not fit inside the simulation band."""


class IntegratorError(SimulationError):
    """Dynamic propagation produced a non-physical energy ledger."""


class SamplingResolutionError(SimulationError):
    """Source envelope grid too coarse for the requested coherence time."""


class NoPeakError(SimulationError):
    """No statistically significant bunching peak in a g2 array."""


class NormalizationError(SimulationError):
    """Coincidence histogram cannot be normalized (empty baseline)."""


class StatisticsError(SimulationError):
    """Monte Carlo run accumulated too few coincidences for the target."""


class FitError(SimulationError):
    """Least-squares fit failed (singular system or bad input)."""


class ConfigError(SimulationError):
    """Configuration document failed validation; message lists all violations."""
