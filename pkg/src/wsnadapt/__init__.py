"""Adaptive strategies for spatially correlated sensor fields.

Library layout:

- ``numerics``: dense SPD solves and dominant-eigenvalue estimation
- ``fieldgen``: spatial covariance construction and seeded stream synthesis
- ``ada``: steepest-descent accuracy estimation and node selection
- ``stdp``: the dual-prediction transmission-suppression protocol
- ``malicious``: weight-variance anomaly tracing
- ``sim``: experiment orchestration and CSV-ready reports
- ``cli``: the ``wsnadapt`` command-line tool
"""

from . import ada, cli, errors, fieldgen, malicious, numerics, sim, stdp
from .fieldgen import CovariancePair, FieldParams, NodeLayout, ObservationBlock
from .sim import RunReport, Scenario, default_scenario
from .stdp import Thresholds

__version__ = "0.1.0"

__all__ = [
    "CovariancePair",
    "FieldParams",
    "NodeLayout",
    "ObservationBlock",
    "RunReport",
    "Scenario",
    "Thresholds",
    "ada",
    "cli",
    "default_scenario",
    "errors",
    "fieldgen",
    "malicious",
    "numerics",
    "sim",
    "stdp",
]
