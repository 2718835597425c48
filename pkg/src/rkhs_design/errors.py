"""Exception types raised across the package."""

import numpy as np


class ConfigurationError(ValueError):
    """Invalid arm sets, kernels or experiment configuration."""


class UnsupportedModeError(ValueError):
    """The requested computation is not available for this feature representation."""


class InsufficientSamplesError(ValueError):
    """Too few samples for the requested robust estimate."""


class SingularDesignError(np.linalg.LinAlgError):
    """The (unregularized) information matrix of a design is singular."""
