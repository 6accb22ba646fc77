"""Exception types shared across the package."""


class LayeredBnError(Exception):
    """Base class for all layeredbn errors."""


class CyclicNetworkError(LayeredBnError):
    """A directed cycle was found where a DAG is required."""


class DisconnectedNetworkError(LayeredBnError):
    """The network is not a single undirected component."""

    def __init__(self, node: str, message: str | None = None):
        self.node = node
        super().__init__(message or f"disconnected network: node {node!r} unreachable")


class BackArcError(LayeredBnError):
    """An addition was rejected because it would create a back arc."""

    def __init__(self, out_min: int, in_max: int):
        self.out_min = out_min
        self.in_max = in_max
        super().__init__(
            f"back arc: outgoing target at level {out_min} not above "
            f"incoming source at level {in_max}"
        )


class StructuralError(LayeredBnError):
    """An internal structural invariant was violated."""


class CapacityError(LayeredBnError):
    """A state-space guard was exceeded."""


class InconsistentEvidenceError(LayeredBnError):
    """The evidence assigns probability zero to every configuration."""


class FormatError(LayeredBnError):
    """A file could not be parsed; carries a 1-based position."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        self.line = line
        self.column = column
        super().__init__(message)


class ScriptError(FormatError):
    """A script line could not be parsed or applied."""
