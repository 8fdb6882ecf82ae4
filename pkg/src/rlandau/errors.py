"""Exception types shared across the package."""


class RLandauError(Exception):
    pass


class DegeneratePair(RLandauError, ValueError):
    """tau*rho vanishes numerically (p = q); the singular kernel is undefined."""


class ColinearPair(RLandauError, ValueError):
    """p and q are colinear so the closed-form eigenbasis is degenerate."""


class EmptyDistribution(RLandauError, ValueError):
    """The density has zero total mass."""


class ZeroMass(EmptyDistribution):
    pass


class NonpositiveDensity(RLandauError, ValueError):
    """log f requested on a grid with a non-positive node value."""


class StepRejected(RLandauError):
    """A time step produced a density below the negativity tolerance."""


class BlowUp(RLandauError):
    """The adaptive time step underflowed."""


class DiagnosticsFailure(RLandauError):
    """A monitored quantity left its admissible band during a run."""


class CorruptCheckpoint(RLandauError, ValueError):
    pass


class ConfigError(RLandauError, ValueError):
    pass
