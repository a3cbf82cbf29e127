"""Closed queueing network toolkit: exact solvers, UJA aggregation, throughput bounds and PAM."""

from .aggregate import ThroughputCharacteristic, aggregate_balanced, fesc_to_station, replace_subnetwork
from .bounds import (
    BoundInterval,
    BoundModelView,
    aba,
    ae_bound,
    all_bounds,
    bjb,
    geometric_bounds,
    kriz,
    pbh,
    pbh_error_measure,
    pbh_interval,
    proportional_bounds,
)
from .errors import (
    BoundDegeneracyError,
    ModelError,
    RoutingError,
    SeriesDivergenceError,
    StateSpaceTooLarge,
    UnstableStationError,
    UnsupportedStationError,
)
from .exact import (
    convolution,
    convolution_two_class,
    mva,
    mva_multichain,
    oracle_enumerate,
    solve_convolution,
    solve_oracle,
)
from .model import ClosedModel, MultichainModel, RoutingSpec, Station, StationKind, analyze_open, visit_ratios
from .modelfile import load_model, parse_model, dump_model
from .pam import pam_basic, pam_improved, pam_two
from .uja import moments, t_series, uja_characteristic
from .uja2 import uja2_first_order

__version__ = "0.1.0"
