"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each failure mode gets its own class.
"""


class NaloError(Exception):
    """Base class for all library errors."""


class DomainError(NaloError, ValueError):
    """Input violates a mathematical precondition (bad element, failed hypothesis)."""


class ResourceError(NaloError, RuntimeError):
    """An enumeration or convolution exceeded its configured size cap.

    ``partial`` carries whatever statistics were gathered before giving up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else {}


class NoFlatSegment(DomainError):
    """The dyadic descent ran out of indices without finding a flat window."""

    def __init__(self, message, chain=None):
        super().__init__(message)
        self.chain = chain or []


class NoStructureFound(NaloError):
    """No catalog candidate met the scoring contract.

    This is not a refutation: the catalog is finite and the search is heuristic.
    """

    def __init__(self, message, scores=None):
        super().__init__(message)
        self.scores = scores or []


class NormExceeded(NaloError):
    """An element was not reached by any dilate up to the configured lambda_max."""

    def __init__(self, message, lam_max=None):
        super().__init__(message)
        self.lam_max = lam_max
