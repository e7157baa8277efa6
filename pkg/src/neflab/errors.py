"""Exception types raised by neflab solvers and checks."""


class NeflabError(Exception):
    """Base class for all neflab errors."""


class NonConvergence(NeflabError, RuntimeError):
    """Newton iteration stalled before reaching the residual tolerance."""

    def __init__(self, message, last_residual=None, iterations=None, advice=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations
        self.advice = advice


class PositivityLoss(NonConvergence):
    """Line search could not keep the iterate inside the Kahler cone."""


class ConeLoss(NonConvergence):
    """Line search could not keep the iterate inside the Gamma_k cone."""


class AdmissibilityFailure(NeflabError, ValueError):
    """An input potential is not admissible for the requested cone."""


class BetaTooSmall(NeflabError, ValueError):
    """psi >= u_beta + 1 somewhere; beta must be increased."""


class ScheduleTooShort(NeflabError, ValueError):
    pass


class NoValidS0(NeflabError, ValueError):
    """No level s with 2 B0 tail(s)^delta0 <= 1 was found."""


class EmptyCandidates(NeflabError, ValueError):
    pass


class FieldFormatError(NeflabError, ValueError):
    """A binary field dump is truncated or carries the wrong header."""


class MissingArtifacts(NeflabError, FileNotFoundError):
    pass


class ConfigError(NeflabError, ValueError):
    pass
