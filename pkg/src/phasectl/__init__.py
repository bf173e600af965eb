"""Phase-field optimal control toolkit.

Simulates controlled Allen-Cahn / Cahn-Hilliard microstructure dynamics on
periodic 2D grids and drives them to target patterns via a decoupled
data-based pipeline: model-free trajectory optimization, time-varying
linear system identification, and Riccati feedback, plus shrinking-horizon
MPC replanning and an analytic steady-state baseline controller.
"""

__version__ = "0.1.0"

from .dynamics import (
    ALLEN_CAHN,
    CAHN_HILLIARD,
    ControlBounds,
    ModelParams,
    PhaseFieldSystem,
)
from .grid import ControlField, GoalPattern, GridSpec, PhaseField, make_goal

__all__ = [
    "ALLEN_CAHN",
    "CAHN_HILLIARD",
    "ControlBounds",
    "ControlField",
    "GoalPattern",
    "GridSpec",
    "ModelParams",
    "PhaseField",
    "PhaseFieldSystem",
    "make_goal",
    "__version__",
]
