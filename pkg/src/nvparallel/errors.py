"""Exception hierarchy shared by all nvparallel modules."""


class NVSimError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(NVSimError, ValueError):
    pass


class ConfigError(NVSimError, ValueError):
    """Invalid sequence, scenario or configuration file."""


class GeometryError(NVSimError, ValueError):
    """A spot or integration disk does not fit inside the frame."""


class FitError(NVSimError, RuntimeError):
    """Fit did not converge. ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateFitError(FitError):
    """Data cannot constrain the requested model (e.g. a single mode)."""


class AmbiguousThresholdError(NVSimError, ValueError):
    pass


class DegenerateReadoutError(NVSimError, ValueError):
    """Readout fidelities with f_nvm + f_nv0 <= 1 carry no information."""


class SingularModelError(NVSimError, ValueError):
    pass


class InsufficientSamplesError(NVSimError, ValueError):
    pass


class ZeroContrastError(NVSimError, ValueError):
    pass


class UndefinedCorrelationError(NVSimError, ValueError):
    def __init__(self, message, nv_id=None):
        super().__init__(message)
        self.nv_id = nv_id
