"""Wigner-function propagators for one-degree-of-freedom systems.

Three levels of approximation share one set of grids and conventions:

* :mod:`wignerprop.vanvleck`: trajectory pairs and their symplectic-area action;
* :mod:`wignerprop.pathint`: the uniform (Airy) spot from the cubic Fourier kernel;
* :mod:`wignerprop.exact`: a spectral reference on a hard-wall box.

Phase points are ordered ``r = (p, q)`` throughout.
"""

__version__ = "0.1.0"

from .classical import AiryCoefficients, TrajectoryRecord, integrate, stability_angle
from .errors import AccuracyError, ValidationError, WignerPropError
from .fields import GridSpec, PhaseSpaceField, centered_grid
from .model import CUBIC_WELL, PhasePoint, PolynomialPotential, hamiltonian, potential_eval

__all__ = [
    "__version__",
    "AiryCoefficients",
    "TrajectoryRecord",
    "integrate",
    "stability_angle",
    "AccuracyError",
    "ValidationError",
    "WignerPropError",
    "GridSpec",
    "PhaseSpaceField",
    "centered_grid",
    "CUBIC_WELL",
    "PhasePoint",
    "PolynomialPotential",
    "hamiltonian",
    "potential_eval",
]
