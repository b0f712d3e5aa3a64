"""Exception hierarchy shared by all modules."""


class ReflectedStableError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(ReflectedStableError, ValueError):
    """A parameter lies outside its admissible range."""


class ContractError(ReflectedStableError, ValueError):
    """A caller violated an operation's precondition."""


class SingularityError(ReflectedStableError, ValueError):
    """Evaluation hit the diagonal singularity of the jump kernel."""


class QuadratureError(ReflectedStableError):
    """A quadrature rule failed its built-in accuracy check."""

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class TightnessError(ReflectedStableError):
    """No compact core carries enough return mass on the probe set."""

    def __init__(self, message, worst_z=None, worst_mass=None):
        super().__init__(message)
        self.worst_z = worst_z
        self.worst_mass = worst_mass


class ConsistencyError(ReflectedStableError):
    """Two independent routes to the same quantity disagree."""


class SeriesError(ReflectedStableError):
    """The perturbation series violated its mass bound."""


class SpectralError(ReflectedStableError):
    """A spectral-radius certificate failed or did not converge."""


class ConvergenceError(ReflectedStableError):
    """An iteration hit its cap before reaching tolerance."""

    def __init__(self, message, last_increment=None):
        super().__init__(message)
        self.last_increment = last_increment


class ContractionError(ReflectedStableError):
    """A total-variation sequence increased under a Markov kernel."""
