"""Dynamic average consensus: continuous, discrete and event-triggered estimators."""

from .graph import (
    GRAPH_A,
    GRAPH_B,
    TopologySchedule,
    WeightedDigraph,
    algebraic_connectivity,
    disagreement_basis,
    is_strongly_connected,
    is_weight_balanced,
    laplacian,
    scale_weights,
    spectrum,
)
from .trajectory import Trajectory

__all__ = [
    "GRAPH_A",
    "GRAPH_B",
    "TopologySchedule",
    "Trajectory",
    "WeightedDigraph",
    "algebraic_connectivity",
    "disagreement_basis",
    "is_strongly_connected",
    "is_weight_balanced",
    "laplacian",
    "scale_weights",
    "spectrum",
]

__version__ = "0.1.0"
