"""Tapering functions with a continuous length parameter.

A window lives on a fixed integer support of ``N`` samples.  Its effective
length ``theta`` is a real number in ``[theta_min, N]``; the effective window
is centred at ``c = (N - 1) / 2`` and is exactly zero outside it, so frames
stay time-aligned whatever ``theta`` is.

    hann:      g = 0.5 + 0.5 cos(2 pi (k - c) / theta)   for |k - c| < theta / 2
    gaussian:  g = exp(-0.5 ((k - c) / sigma)^2)         with sigma = theta / 6

Both kinds come with the analytic derivative dg/dtheta.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "WindowKind",
    "WindowParams",
    "WindowDomainError",
    "THETA_MIN",
    "window_eval",
    "window_grad",
    "window_table",
    "window_grad_table",
    "check_theta",
]

THETA_MIN = 4.0


class WindowDomainError(ValueError):
    """theta outside ``[theta_min, N]`` or a bad sample index."""


class WindowKind(str, Enum):
    HANN = "hann"
    GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, value) -> "WindowKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class WindowParams:
    support: int
    theta: float
    kind: WindowKind = WindowKind.HANN
    theta_min: float = THETA_MIN

    def __post_init__(self):
        if int(self.support) != self.support or self.support < 2:
            raise WindowDomainError(f"support must be an integer >= 2, got {self.support!r}")
        object.__setattr__(self, "kind", WindowKind.parse(self.kind))
        check_theta(self.theta, self.support, self.theta_min)


def check_theta(theta, support: int, theta_min: float = THETA_MIN) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    bad = ~np.isfinite(theta) | (theta < theta_min) | (theta > support)
    if np.any(bad):
        worst = theta[bad].flat[0]
        raise WindowDomainError(f"theta={worst!r} outside [{theta_min}, {support}]")
    return theta


def _offsets(support: int, k=None) -> np.ndarray:
    k = np.arange(support) if k is None else np.asarray(k)
    return k - (support - 1) / 2


def _hann(x, theta):
    inside = np.abs(x) < theta / 2
    return np.where(inside, 0.5 + 0.5 * np.cos(2 * np.pi * x / theta), 0.0)


def _hann_grad(x, theta):
    inside = np.abs(x) < theta / 2
    arg = 2 * np.pi * x / theta
    return np.where(inside, 0.5 * np.sin(arg) * arg / theta, 0.0)


def _gauss(x, theta):
    r = 6.0 * x / theta
    return np.exp(-0.5 * r * r)


def _gauss_grad(x, theta):
    r = 6.0 * x / theta
    return np.exp(-0.5 * r * r) * r * r / theta


_EVAL = {WindowKind.HANN: _hann, WindowKind.GAUSSIAN: _gauss}
_GRAD = {WindowKind.HANN: _hann_grad, WindowKind.GAUSSIAN: _gauss_grad}


def _check_index(k, support):
    if np.any((np.asarray(k) < 0) | (np.asarray(k) >= support)):
        raise WindowDomainError(f"sample index {k!r} outside [0, {support})")


def window_eval(params: WindowParams, k) -> float:
    _check_index(k, params.support)
    return float(_EVAL[params.kind](_offsets(params.support, k), params.theta))


def window_grad(params: WindowParams, k) -> float:
    _check_index(k, params.support)
    return float(_GRAD[params.kind](_offsets(params.support, k), params.theta))


def window_table(kind, support: int, theta, *, theta_min: float = THETA_MIN,
                 normalize: bool = False) -> np.ndarray:
    """Windows for an array of theta values, shape ``theta.shape + (support,)``.

    ``normalize`` rescales each window to unit sum; meant for display, the
    transform and gradient code never use it.
    """
    theta = check_theta(theta, support, theta_min)[..., None]
    g = _EVAL[WindowKind.parse(kind)](_offsets(support), theta)
    if normalize:
        g = g / g.sum(axis=-1, keepdims=True)
    return g


def window_grad_table(kind, support: int, theta, *, theta_min: float = THETA_MIN) -> np.ndarray:
    theta = check_theta(theta, support, theta_min)[..., None]
    return _GRAD[WindowKind.parse(kind)](_offsets(support), theta)


def window_pair(kind, offsets: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Window values and theta-derivatives at arbitrary centred ``offsets``.

    No domain check; callers validate theta once per transform.
    """
    kind = WindowKind.parse(kind)
    if kind is WindowKind.HANN:
        inside = np.abs(offsets) < theta / 2
        arg = 2 * np.pi * offsets / theta
        g = np.where(inside, 0.5 + 0.5 * np.cos(arg), 0.0)
        dg = np.where(inside, 0.5 * np.sin(arg) * arg / theta, 0.0)
        return g, dg
    r = 6.0 * offsets / theta
    g = np.exp(-0.5 * r * r)
    return g, g * r * r / theta
