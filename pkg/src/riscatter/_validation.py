"""Input validation helpers shared by the estimators and the functional API."""

import math

import numpy as np


class ParameterError(ValueError):
    """Raised when a model or experiment parameter violates its constraint."""


def check_positive(name, value, allow_inf=False):
    value = float(value)
    if not value > 0 or (math.isinf(value) and not allow_inf) or math.isnan(value):
        raise ParameterError(f"{name} must be > 0, got {value!r}")
    return value


def check_nonnegative(name, value):
    value = float(value)
    if not value >= 0 or math.isinf(value):
        raise ParameterError(f"{name} must be >= 0 and finite, got {value!r}")
    return value


def check_count(name, value, minimum=0):
    if isinstance(value, bool) or int(value) != value:
        raise ParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < minimum:
        raise ParameterError(f"{name} must be >= {minimum}, got {value}")
    return value


def check_fraction(name, value):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def check_config(config, n_elements):
    """Return the RIS state vector of ``config`` as a read-only bool array.

    Accepts a :class:`~riscatter.core.RisConfig` or any 0/1 sequence.
    """
    states = getattr(config, "states", config)
    states = np.asarray(states)
    if states.ndim != 1:
        raise ParameterError(f"config must be one-dimensional, got shape {states.shape}")
    if states.size != n_elements:
        raise ParameterError(
            f"config length {states.size} does not match ensemble n_elements={n_elements}"
        )
    if states.dtype != bool:
        if not np.all((states == 0) | (states == 1)):
            raise ParameterError("config entries must be 0/1")
        states = states.astype(bool)
    return states


def check_configs(configs, n_elements):
    """2-D variant of :func:`check_config` for a batch of configurations."""
    arr = np.asarray([getattr(c, "states", c) for c in configs] if isinstance(configs, (list, tuple)) else configs)
    if arr.ndim != 2 or arr.shape[1] != n_elements:
        raise ParameterError(
            f"configs must have shape (n, {n_elements}), got {arr.shape}"
        )
    if arr.dtype != bool:
        if not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("config entries must be 0/1")
        arr = arr.astype(bool)
    return arr


def check_complex_vector(name, x, length=None):
    x = np.asarray(x, dtype=complex)
    if x.ndim != 1:
        raise ParameterError(f"{name} must be a vector, got shape {x.shape}")
    if length is not None and x.size != length:
        raise ParameterError(f"{name} must have length {length}, got {x.size}")
    return x
