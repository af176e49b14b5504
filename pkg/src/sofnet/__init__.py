"""Service overlay forest embedding for software-defined cloud networks."""

from .core import (
    CostModelParams,
    InfeasibleError,
    Network,
    ServiceForest,
    ServiceWalk,
    ShortestPaths,
    SofInstance,
    StructureError,
    element_cost,
    forest_cost,
    shortest_path,
    validate_forest,
)

__all__ = [
    "CostModelParams",
    "InfeasibleError",
    "Network",
    "ServiceForest",
    "ServiceWalk",
    "ShortestPaths",
    "SofInstance",
    "StructureError",
    "element_cost",
    "forest_cost",
    "shortest_path",
    "validate_forest",
]

__version__ = "0.1.0"
