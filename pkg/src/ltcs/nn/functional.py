"""Validated single-vector forms of the layer primitives."""
import math

import numpy as np

from ..errors import ConfigError, InvalidArgumentError


def smelu(x, beta=1.0):
    """Smooth ReLU: 0 below -beta, identity above beta, quadratic blend between.

    Works on scalars and arrays. The derivative is continuous at both knots.
    """
    if not beta > 0:
        raise ConfigError(f"smelu beta must be positive, got {beta}")
    if np.isscalar(x):
        if x <= -beta:
            return 0.0
        if x >= beta:
            return float(x)
        return (x + beta) ** 2 / (4.0 * beta)
    x = np.asarray(x, dtype=float)
    y = np.where(x >= beta, x, (x + beta) ** 2 / (4.0 * beta))
    return np.where(x <= -beta, 0.0, y)


def smelu_grad(x, beta=1.0):
    if not beta > 0:
        raise ConfigError(f"smelu beta must be positive, got {beta}")
    x = np.asarray(x, dtype=float)
    g = np.where(x >= beta, 1.0, (x + beta) / (2.0 * beta))
    return np.where(x <= -beta, 0.0, g)


def _check_vector(v):
    v = np.asarray(v)
    if v.ndim != 1 or v.size == 0:
        raise InvalidArgumentError("expected a non-empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("vector has non-finite entries")
    return v


def log_softmax(v):
    v = _check_vector(v)
    z = v - v.max()
    return z - math.log(np.exp(z).sum())


def softmax(v):
    v = _check_vector(v)
    e = np.exp(v - v.max())
    return e / e.sum()


def layer_norm(v, gain, bias, eps=1e-5):
    v = np.asarray(v, dtype=float)
    gain = np.asarray(gain, dtype=float)
    bias = np.asarray(bias, dtype=float)
    if v.ndim != 1 or gain.shape != v.shape or bias.shape != v.shape:
        raise InvalidArgumentError(
            f"layer_norm length mismatch: v={v.shape}, gain={gain.shape}, bias={bias.shape}")
    c = v - v.mean()
    return gain * c / np.sqrt((c * c).mean() + eps) + bias
