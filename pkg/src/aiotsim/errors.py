"""Exception hierarchy shared by all simulator modules."""


class AiotError(Exception):
    """Base class for every error raised by this package."""


class DegenerateImpedance(AiotError):
    """Load plus antenna impedance is (numerically) zero."""


class ConstellationUnrealizable(AiotError):
    """The impedance map cannot produce the reflection geometry a scheme needs."""


class LengthMismatch(AiotError):
    """Input buffer lengths are incompatible."""


class BadPayloadLength(AiotError):
    """Frame payload is not exactly the fixed payload size."""


class PreambleMismatch(AiotError):
    """Frame preamble bits differ from the configured pattern."""


class CrcFailure(AiotError):
    """Frame checksum does not verify."""


class NoSync(AiotError):
    """Preamble correlation peak stayed below the detection threshold."""


class ZeroReference(AiotError):
    """Reference waveform has zero energy; projection is undefined."""


class ZeroChannel(AiotError):
    """Channel estimate magnitude too small for coherent equalization."""


class MissingCsi(AiotError):
    """Successive cancellation requires channel state information."""


class InvalidShift(AiotError):
    """Frequency shift is zero or exceeds the Nyquist headroom."""


class NonOrthogonalSet(AiotError):
    """Spreading sequences are not pairwise orthogonal."""


class InsufficientFrequencies(AiotError):
    """More devices than available frequency offsets."""


class InsufficientPowerGap(AiotError):
    """Adjacent effective powers too close for power-domain separation."""


class InvalidScene(AiotError):
    """Topology scene violates its structural invariants."""


class ConfigError(AiotError):
    """Scenario configuration is malformed or out of range."""


class IoError(AiotError):
    """Result file could not be written."""
