"""Exception hierarchy shared by all fairtrade modules."""


class FairtradeError(Exception):
    """Base class for every error raised by this package."""


# scenario files

class ParseError(FairtradeError):
    """The scenario or results file could not be parsed at all."""


class SchemaError(FairtradeError):
    """A required field is missing or malformed.

    ``path`` is a dotted/indexed location such as ``links[0].to_hub``.
    """

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnitError(FairtradeError):
    """Unknown or incompatible unit tag."""


class IoError(FairtradeError):
    """Results could not be written."""


# numerics

class DimensionError(FairtradeError):
    pass


class NonConvexError(FairtradeError):
    pass


# hub model

class WeightError(FairtradeError):
    """CHP weights are not a point of the 4-simplex."""


class InfeasibleHub(FairtradeError):
    def __init__(self, hub_id, hour=None, detail=""):
        self.hub_id = hub_id
        self.hour = hour
        where = f" at hour {hour}" if hour is not None else ""
        super().__init__(f"hub {hub_id!r} infeasible{where}" + (f": {detail}" if detail else ""))


class InfeasibleNetwork(FairtradeError):
    pass


class MaxIterExceeded(FairtradeError):
    """Raised when the consensus loop runs out of iterations.

    The best iterate is attached as ``result``.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


# pricing

class DegenerateBaseline(FairtradeError):
    pass


class ProjectionInfeasible(FairtradeError):
    pass


class CertificateFailed(FairtradeError):
    pass


class ConfigError(FairtradeError):
    pass


class DisconnectedComponentHandled(UserWarning):
    """Informational: the realized trade graph was split into components."""
