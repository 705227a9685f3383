"""Simulation and analysis of the state-independent Yu-Oh contextuality test on a photonic qutrit."""

from qutritks.core import (
    CompatibilityGraph,
    DensityMatrix,
    Ket,
    Observable,
    Projector,
    Ray,
    compatibility,
    evaluate_ineq2,
    evaluate_ineq3,
    expectation,
    h_projector_sum,
    observable,
    projector,
    s_operator,
    yu_oh_rays,
)

__version__ = "0.1.0"

__all__ = [
    "CompatibilityGraph",
    "DensityMatrix",
    "Ket",
    "Observable",
    "Projector",
    "Ray",
    "compatibility",
    "evaluate_ineq2",
    "evaluate_ineq3",
    "expectation",
    "h_projector_sum",
    "observable",
    "projector",
    "s_operator",
    "yu_oh_rays",
]
