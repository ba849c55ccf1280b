"""Exception hierarchy shared across the package."""


class SpreadSimError(Exception):
    """Base class for all spreadsim errors."""


class GraphError(SpreadSimError):
    pass


class IndexOutOfRangeError(GraphError):
    pass


class DuplicateEdgeError(GraphError):
    pass


class NegativeWeightError(GraphError):
    pass


class SelfLoopError(GraphError):
    pass


class EmptyGraphError(GraphError):
    pass


class InfeasibleDegreeSequenceError(GraphError):
    pass


class GraphFileError(GraphError):
    pass


class InvalidMomentsError(SpreadSimError):
    pass


class ReconfigureAfterStartError(SpreadSimError):
    pass


class GridMismatchError(SpreadSimError):
    pass


class DegenerateFitError(SpreadSimError):
    pass


class InvalidConfigError(SpreadSimError):
    pass
