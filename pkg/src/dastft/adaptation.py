"""Adaptation criterion for the window-length field and its exact gradient.

The loss is the Shannon entropy of the normalised magnitude spectrogram
plus a (non-local) total-variation penalty on theta:

    L(theta) = H(|S| | theta) + lam * R(theta)
    H = -sum p log p,          p = |S| / sum |S|
    R = sum_b sqrt(sum_{n in V_b} w_bn (theta_b - theta_n)^2)

Since each S[i, f] depends only on its own theta_if, the gradient is a
per-bin product of dH/d|S| with d|S|/dtheta, where the latter comes from
the tangent transform:

    d|S|/dtheta = (Re S Re T + Im S Im T) / |S|
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .signal_model import Signal
from .stft_core import AdaptiveSTFT, FrameGrid, Mode, ShapeError, Spectrogram, ThetaField, magnitude
from .window import WindowKind

__all__ = [
    "Criterion",
    "DegenerateInputError",
    "EPS_MAG",
    "EPS_TV",
    "LossReport",
    "Neighborhood",
    "Objective",
    "entropy",
    "loss_and_grad",
    "nonlocal_weights",
    "probabilities",
    "regularizer",
    "tv_neighborhood",
]

EPS_MAG = 1e-12
EPS_TV = 1e-8

# A criterion maps a non-negative (frames x bins) matrix to (value, gradient).
Criterion = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


class DegenerateInputError(ValueError):
    """Entropy of an all-zero spectrogram is undefined."""


def entropy(mag: np.ndarray) -> tuple[float, np.ndarray]:
    """Shannon entropy of ``mag / mag.sum()`` and its gradient w.r.t. ``mag``.

    dH/dm_j = -(log p_j + H) / sum(m).  Zero entries contribute nothing to
    the value (0 log 0 = 0); their gradient uses ``p`` floored at
    ``EPS_MAG * max(p)`` so it stays finite.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise ValueError("entropy needs a non-negative matrix")
    total = mag.sum()
    if not total > 0:
        raise DegenerateInputError("entropy of an all-zero magnitude matrix")
    p = mag / total
    nz = p > 0
    h = float(-np.sum(p[nz] * np.log(p[nz])))
    logp = np.log(np.maximum(p, EPS_MAG * p.max()))
    return h, -(logp + h) / total


def probabilities(mag: np.ndarray) -> np.ndarray:
    """``mag`` floored at ``EPS_MAG * max`` and normalised to sum to one."""
    floored = np.maximum(mag, EPS_MAG * mag.max())
    return floored / floored.sum()


@dataclass(frozen=True)
class Neighborhood:
    """Weighted directed edges ``src -> dst`` over a theta array of ``shape``.

    Bin ``b``'s neighbour set is every edge with ``src == b``; indices are
    flat (row-major) positions.
    """

    shape: tuple[int, int]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    kind: str = "tv"

    def __post_init__(self):
        size = int(np.prod(self.shape))
        src = np.asarray(self.src, dtype=np.intp)
        dst = np.asarray(self.dst, dtype=np.intp)
        w = np.asarray(self.weight, dtype=np.float64)
        if not (src.shape == dst.shape == w.shape):
            raise ShapeError("src, dst and weight must have equal length")
        if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= size or dst.max() >= size):
            raise ShapeError(f"neighbour index out of range for shape {self.shape}")
        if np.any(~np.isfinite(w) | (w < 0)):
            raise ValueError("neighbour weights must be finite and non-negative")
        object.__setattr__(self, "shape", tuple(self.shape))
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "weight", w)

    def neighbors(self, i: int, f: int = 0) -> list[tuple[tuple[int, int], float]]:
        b = np.ravel_multi_index((i, f), self.shape)
        sel = np.flatnonzero(self.src == b)
        return [(tuple(int(v) for v in np.unravel_index(self.dst[e], self.shape)), float(self.weight[e]))
                for e in sel]

    def dense(self) -> np.ndarray:
        """Weight matrix ``W[src, dst]``, for inspection of small problems."""
        size = int(np.prod(self.shape))
        w = np.zeros((size, size))
        np.add.at(w, (self.src, self.dst), self.weight)
        return w


def tv_neighborhood(shape: tuple[int, int], weight: float = 1.0) -> Neighborhood:
    """Forward differences: ``(i, f) -> (i+1, f)`` and ``(i, f) -> (i, f+1)``."""
    m, k = shape
    idx = np.arange(m * k).reshape(m, k)
    src = np.concatenate((idx[:-1, :].ravel(), idx[:, :-1].ravel()))
    dst = np.concatenate((idx[1:, :].ravel(), idx[:, 1:].ravel()))
    return Neighborhood((m, k), src, dst, np.full(src.size, float(weight)), kind="tv")


def nonlocal_weights(pilot: Spectrogram | np.ndarray, patch_radius: int = 1, bandwidth: float = 1.0,
                     max_neighbors: int = 8, search_radius: int = 3, per_frame: bool = False,
                     normalize: bool = True) -> Neighborhood:
    """Patch-similarity neighbourhood built from a pilot spectrogram.

    Bins are compared through log-magnitude patches of half-width
    ``patch_radius`` (edge-replicated at the borders).  Each bin keeps its
    ``max_neighbors`` closest candidates within ``search_radius`` and
    weights them by ``exp(-d^2 / (2 bandwidth^2))``; rows are rescaled to
    sum to one when ``normalize`` is set.

    With ``per_frame`` the nodes are whole frames (shape ``(M, 1)``): a
    frame's patch is the block of frames ``i - r .. i + r`` across all bins
    and candidates are searched along time only.
    """
    mag = magnitude(pilot) if isinstance(pilot, Spectrogram) else np.asarray(pilot, dtype=np.float64)
    if mag.ndim != 2:
        raise ShapeError("pilot must be a 2-D matrix")
    floor = EPS_MAG * max(mag.max(), EPS_MAG)
    logmag = np.log(np.maximum(mag, floor))
    m, k = logmag.shape
    r = int(patch_radius)
    padded = np.pad(logmag, r, mode="edge")
    if per_frame:
        rows = np.lib.stride_tricks.sliding_window_view(padded[:, r:r + k], (2 * r + 1, k))
        features = rows.reshape(m, 1, -1)
        offsets = [(di, 0) for di in range(-search_radius, search_radius + 1) if di]
        shape = (m, 1)
    else:
        patches = np.lib.stride_tricks.sliding_window_view(padded, (2 * r + 1, 2 * r + 1))
        features = patches.reshape(m, k, -1)
        offsets = [(di, df) for di in range(-search_radius, search_radius + 1)
                   for df in range(-search_radius, search_radius + 1) if di or df]
        shape = (m, k)
    rows_n, cols_n = shape
    ii, ff = np.meshgrid(np.arange(rows_n), np.arange(cols_n), indexing="ij")

    d2 = np.full((rows_n, cols_n, len(offsets)), np.inf)
    dst = np.zeros((rows_n, cols_n, len(offsets)), dtype=np.intp)
    for n, (di, df) in enumerate(offsets):
        jj, kk = ii + di, ff + df
        ok = (jj >= 0) & (jj < rows_n) & (kk >= 0) & (kk < cols_n)
        diff = features[ii[ok], ff[ok]] - features[jj[ok], kk[ok]]
        d2[ok, n] = np.einsum("nd,nd->n", diff, diff)
        dst[ok, n] = jj[ok] * cols_n + kk[ok]

    keep = min(int(max_neighbors), len(offsets))
    order = np.argsort(d2, axis=-1, kind="stable")[..., :keep]
    d2k = np.take_along_axis(d2, order, axis=-1)
    dstk = np.take_along_axis(dst, order, axis=-1)
    valid = np.isfinite(d2k)
    w = np.where(valid, np.exp(-np.where(valid, d2k, 0.0) / (2.0 * bandwidth**2)), 0.0)
    if normalize:
        s = w.sum(axis=-1, keepdims=True)
        w = np.divide(w, s, out=np.zeros_like(w), where=s > 0)
    src = np.broadcast_to((ii * cols_n + ff)[..., None], w.shape)
    return Neighborhood(shape, src[valid], dstk[valid], w[valid], kind="nonlocal")


def regularizer(theta: ThetaField | np.ndarray, nb: Neighborhood | None,
                eps: float = EPS_TV) -> tuple[float, np.ndarray]:
    """Non-local TV penalty and its gradient w.r.t. theta.

    Each bin contributes ``sqrt(x_b + eps^2) - eps`` where ``x_b`` is its
    weighted sum of squared differences, a smooth stand-in for ``sqrt(x_b)``
    that is exactly zero on a flat field.
    """
    if isinstance(theta, ThetaField):
        if theta.mode is Mode.CONSTANT:
            return 0.0, np.zeros_like(theta.values)
        values = theta.values
    else:
        values = np.asarray(theta, dtype=np.float64)
    if nb is None:
        return 0.0, np.zeros_like(values)
    if tuple(values.shape) != nb.shape:
        raise ShapeError(f"neighbourhood shape {nb.shape} does not match theta shape {values.shape}")
    flat = values.ravel()
    diff = flat[nb.src] - flat[nb.dst]
    x = np.bincount(nb.src, weights=nb.weight * diff * diff, minlength=flat.size)
    root = np.sqrt(x + eps * eps)
    value = float(np.sum(root - eps))
    coef = nb.weight * diff / root[nb.src]
    grad = (np.bincount(nb.src, weights=coef, minlength=flat.size)
            - np.bincount(nb.dst, weights=coef, minlength=flat.size))
    return value, grad.reshape(values.shape)


@dataclass
class LossReport:
    total: float
    entropy: float
    regularization: float
    lam: float
    grad_theta: np.ndarray = field(repr=False)

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.grad_theta))

    def log_line(self, iteration: int) -> str:
        values = (self.total, self.entropy, self.regularization, self.grad_norm)
        return ",".join([str(iteration)] + [repr(float(v)) for v in values])


class Objective:
    """``theta -> LossReport`` for a fixed signal, grid and criterion.

    ``power=True`` feeds ``|S|^2`` instead of ``|S|`` to the criterion
    (experimental).
    """

    def __init__(self, signal: Signal, grid: FrameGrid, kind=WindowKind.HANN,
                 nb: Neighborhood | None = None, lam: float = 0.0, criterion: Criterion = entropy,
                 power: bool = False, onesided: bool = True):
        if lam < 0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        self.plan = signal if isinstance(signal, AdaptiveSTFT) else AdaptiveSTFT(signal, grid, kind, onesided)
        self.nb = nb
        self.lam = float(lam)
        self.criterion = criterion
        self.power = power
        self.evaluations = 0

    @property
    def grid(self) -> FrameGrid:
        return self.plan.grid

    @property
    def num_bins(self) -> int:
        return self.plan.num_bins

    def _criterion_input(self, s: np.ndarray) -> np.ndarray:
        mag = np.hypot(s.real, s.imag)
        return mag * mag if self.power else mag

    def value(self, theta: ThetaField) -> float:
        """Loss only; skips the tangent transform."""
        s, _ = self.plan.evaluate(theta, want_tangent=False)
        h, _ = self.criterion(self._criterion_input(s))
        r, _ = regularizer(theta, self.nb) if self.lam else (0.0, None)
        self.evaluations += 1
        return h + self.lam * r

    def __call__(self, theta: ThetaField) -> LossReport:
        s, t = self.plan.evaluate(theta)
        mag = np.hypot(s.real, s.imag)
        h, grad_in = self.criterion(mag * mag if self.power else mag)
        proj = s.real * t.real + s.imag * t.imag
        if self.power:
            dmag = 2.0 * proj
        else:
            eps = EPS_MAG * mag.max()
            # Below the floor the modulus is treated as constant.
            dmag = np.divide(proj, mag, out=np.zeros_like(proj), where=mag > eps)
        grad = theta.reduce(grad_in * dmag)
        if self.lam:
            r, grad_r = regularizer(theta, self.nb)
            grad = grad + self.lam * grad_r
        else:
            r = regularizer(theta, self.nb)[0] if theta.mode is not Mode.CONSTANT and self.nb else 0.0
        bad = ~np.isfinite(grad)
        if np.any(bad):
            where = tuple(int(v) for v in np.argwhere(bad)[0])
            raise FloatingPointError(f"non-finite gradient at theta bin {where}")
        self.evaluations += 1
        return LossReport(h + self.lam * r, h, r, self.lam, grad)


def loss_and_grad(signal: Signal, grid: FrameGrid, theta: ThetaField, kind=WindowKind.HANN,
                  nb: Neighborhood | None = None, lam: float = 0.0, **kwargs) -> LossReport:
    """One-shot ``H + lam * R`` with its gradient; see :class:`Objective`."""
    return Objective(signal, grid, kind, nb, lam, **kwargs)(theta)
