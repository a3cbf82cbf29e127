"""Exception types raised by the solvers."""


class ModelError(ValueError):
    """A model violates a structural invariant or a solver precondition."""


class RoutingError(ModelError):
    """Routing matrix is malformed, reducible, or yields a singular system."""


class UnstableStationError(ModelError):
    """An open-network station has utilization >= 1."""

    def __init__(self, station, utilization):
        self.station = station
        self.utilization = utilization
        super().__init__(
            f"unstable station {station!r}: utilization {utilization:.6g} >= 1"
        )


class UnsupportedStationError(ModelError):
    """The requested solver cannot handle a station kind present in the model."""


class StateSpaceTooLarge(ModelError):
    """Enumeration-based solver refused a model above its size guard."""


class SeriesDivergenceError(ArithmeticError):
    """A truncated Taylor series produced a non-positive normalisation term."""

    def __init__(self, order, population):
        self.order = order
        self.population = population
        super().__init__(
            f"series divergence: network too unbalanced for order {order} "
            f"at population {population}"
        )


class BoundDegeneracyError(ArithmeticError):
    """A bound formula hit a negative discriminant or similar degeneracy."""
