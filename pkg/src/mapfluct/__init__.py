"""Fluctuation identities for Markov additive processes."""

from .model import (JumpLaw, LevyComponent, MapSpec, ValidatedModel, builtin, load_builtin, make_spec,
                    stationary, validate)
from .cumulant import cgm, kappa, perron, phi_inverse
from .transform import reverse, tilt

__all__ = [
    "JumpLaw", "LevyComponent", "MapSpec", "ValidatedModel", "builtin", "load_builtin", "make_spec",
    "stationary", "validate", "cgm", "kappa", "perron", "phi_inverse", "reverse", "tilt",
]
