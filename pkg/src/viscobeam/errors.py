"""Exception hierarchy.

Two families matter to callers: configuration problems (bad input, violated
preconditions) and numerical failures (non-convergence, instability).  The CLI
maps them to exit codes 2 and 3.
"""


class ViscobeamError(Exception):
    pass


class ConfigurationError(ViscobeamError):
    """Input or setup is invalid."""


class NumericalError(ViscobeamError):
    """A computation failed or produced untrustworthy output."""


# configuration-type
class DomainError(ConfigurationError):
    pass


class ArgumentError(ConfigurationError):
    pass


class PreconditionError(ConfigurationError):
    pass


class UnsupportedOrderError(ConfigurationError):
    pass


class UnsupportedConfigurationError(ConfigurationError):
    pass


class DataModelViolation(ConfigurationError):
    pass


class ResolutionError(ConfigurationError):
    pass


class CFLViolation(ConfigurationError):
    pass


# numerical-type
class ConvergenceError(NumericalError):
    pass


class SingularOperatorError(NumericalError):
    pass


class IdentifiabilityError(NumericalError):
    pass


class NonRealSpectrumError(NumericalError):
    pass


class TrappedRayError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class RiccatiBlowupError(NumericalError):
    def __init__(self, msg, sigma=None):
        super().__init__(msg)
        self.sigma = sigma


class DegeneracyError(NumericalError):
    pass


class DegenerateBeamError(NumericalError):
    pass


class NoArrivalError(NumericalError):
    pass


class CausticError(NumericalError):
    pass


class InstabilityError(NumericalError):
    def __init__(self, msg, step=None):
        super().__init__(msg)
        self.step = step
