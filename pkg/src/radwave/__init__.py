"""Radial numerical lab for quadratic semilinear wave equations in 3D.

Radial fields are evolved in the reduced variable v = r*u on a half-line
(whole space) or outside a ball with a Dirichlet wall.  The package checks
the linear space-time estimates behind almost global existence, runs the
Picard schemes with their diagnostics, measures blow-up times against data
size, and measures local energy decay outside the ball.
"""

from .errors import (InsufficientData, IntegrationFailure, InvalidArgument, InvalidSequence,
                     LocalExistenceFailure, RadwaveError, ResourceLimit, UnsupportedProfile)
from .model import (NULL_FORM, Bump, DataProfile, Gaussian, Geometry, QuadraticForm,
                    RadialGrid, SmoothBox, make_grid, parse_form, parse_profile)

__all__ = [
    "Bump", "DataProfile", "Gaussian", "Geometry", "NULL_FORM", "QuadraticForm", "RadialGrid",
    "SmoothBox", "make_grid", "parse_form", "parse_profile",
    "RadwaveError", "InvalidArgument", "ResourceLimit", "IntegrationFailure",
    "UnsupportedProfile", "InvalidSequence", "LocalExistenceFailure", "InsufficientData",
]
