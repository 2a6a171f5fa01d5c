"""Exception hierarchy shared across the package."""


class MasterlabError(Exception):
    """Base class for all errors raised by masterlab."""


class ConfigError(MasterlabError, ValueError):
    """Invalid experiment configuration or parameter set."""


class NumericalError(MasterlabError, RuntimeError):
    """A numerical procedure failed (integration, fitting, diagonalization)."""


class StiffnessError(NumericalError):
    """The adaptive integrator could not make progress."""


class IntegrationError(NumericalError):
    """Propagation finished but violated a conserved quantity."""


class AdiabaticityError(NumericalError):
    """Instantaneous eigenvectors could not be matched between time steps."""


class FitError(NumericalError):
    """Exponential fit failed or the data shows no decay."""


class NotConvergedError(NumericalError):
    """A steady-state quantity was requested from an unsettled trajectory."""


class AmbiguousLabelError(MasterlabError, ValueError):
    """Two dressed states claim the same bare product state."""
