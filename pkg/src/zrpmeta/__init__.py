"""Critical zero-range processes on finite graphs: exact computation, simulation and checks."""

__version__ = "0.1.0"

from .errors import ArgumentError, ModelError, NumericError, ResourceError, ZrpError
from .walk import WalkSpec, capacity, coefficient_tables, complete_graph, equilibrium_potential, path_graph
from .zrp import ZrpModel, classify, g_rate, partition_tables, stationary_weight, well_measure

__all__ = [
    "__version__",
    "ArgumentError",
    "ModelError",
    "NumericError",
    "ResourceError",
    "ZrpError",
    "WalkSpec",
    "capacity",
    "coefficient_tables",
    "complete_graph",
    "equilibrium_potential",
    "path_graph",
    "ZrpModel",
    "classify",
    "g_rate",
    "partition_tables",
    "stationary_weight",
    "well_measure",
]
