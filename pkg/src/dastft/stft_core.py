"""Adaptive STFT with a window length per frame and per frequency bin.

    S[i, f] = sum_k g_{N, theta_if}[k] s[t_i + k] exp(-2j pi k f / N)

The tangent transform swaps ``g`` for ``dg/dtheta`` and is exactly the
Jacobian entry dS[i, f]/dtheta_if; no entry depends on another bin's theta.

When theta does not vary along frequency (constant or per-frame fields) the
sum is an ordinary FFT of each windowed frame.  Otherwise every bin gets its
own window and the sum is evaluated directly, folding the support in half
because every window is symmetric about the support centre.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .signal_model import Signal
from .window import THETA_MIN, WindowKind, check_theta, window_pair

__all__ = [
    "Mode",
    "FrameGrid",
    "ThetaField",
    "Spectrogram",
    "AdaptiveSTFT",
    "ShapeError",
    "forward",
    "tangent",
    "reference_stft",
    "magnitude",
]

# Per-bin path: cap on cached (frames x bins x half-support) elements, and on
# the elements processed per chunk.
_CACHE_LIMIT = 1 << 23
_CHUNK_LIMIT = 1 << 21


class ShapeError(ValueError):
    """Theta field or grid inconsistent with the requested transform."""


class Mode(str, Enum):
    CONSTANT = "constant"
    PER_FRAME = "per_frame"
    PER_FRAME_PER_FREQ = "per_frame_per_freq"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        aliases = {"time": cls.PER_FRAME, "tf": cls.PER_FRAME_PER_FREQ, "frame": cls.PER_FRAME}
        value = str(value).lower()
        return aliases.get(value) or cls(value)


@dataclass(frozen=True)
class FrameGrid:
    """Frame ``i`` covers samples ``[t_i, t_i + N - 1]``, ``t_i = t_0 + i * hop``.

    Samples outside the signal read as zero; at most ``N`` samples of
    padding are available on either side.
    """

    first_index: int
    hop: int
    num_frames: int
    support: int

    def __post_init__(self):
        if self.hop < 1:
            raise ShapeError(f"hop must be >= 1, got {self.hop}")
        if self.num_frames < 1:
            raise ShapeError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.support < 2:
            raise ShapeError(f"support must be >= 2, got {self.support}")

    @classmethod
    def centered(cls, num_samples: int, support: int, hop: int) -> "FrameGrid":
        """Frames centred on samples 0, hop, 2*hop, ... up to the last sample."""
        return cls(-(support // 2), hop, 1 + (num_samples - 1) // hop, support)

    @property
    def starts(self) -> np.ndarray:
        return self.first_index + self.hop * np.arange(self.num_frames)

    def num_bins(self, onesided: bool = True) -> int:
        return self.support // 2 + 1 if onesided else self.support

    def frames(self, samples: np.ndarray) -> np.ndarray:
        """(num_frames, support) matrix of zero-padded signal slices."""
        n = self.support
        starts = self.starts
        if starts[0] < -n or starts[-1] + n - 1 > samples.size - 1 + n:
            raise ShapeError(
                f"grid frames [{starts[0]}, {starts[-1] + n - 1}] exceed the padded signal "
                f"[{-n}, {samples.size - 1 + n}]"
            )
        padded = np.concatenate((np.zeros(n), samples, np.zeros(n)))
        view = np.lib.stride_tricks.sliding_window_view(padded, n)
        return view[starts + n].copy()


@dataclass
class ThetaField:
    """Window lengths theta, stored at the resolution the mode calls for.

    ``constant`` is 1x1, ``per_frame`` is Mx1 and ``per_frame_per_freq`` MxK.
    """

    mode: Mode
    values: np.ndarray
    theta_min: float
    theta_max: float

    def __post_init__(self):
        self.mode = Mode.parse(self.mode)
        self.values = np.array(self.values, dtype=np.float64, ndmin=2)
        if self.values.ndim != 2:
            raise ShapeError(f"theta values must be 2-D, got shape {self.values.shape}")
        if self.mode is Mode.CONSTANT and self.values.shape != (1, 1):
            raise ShapeError(f"constant theta must be 1x1, got {self.values.shape}")
        if self.mode is Mode.PER_FRAME and self.values.shape[1] != 1:
            raise ShapeError(f"per_frame theta must be Mx1, got {self.values.shape}")
        check_theta(self.values, self.theta_max, self.theta_min)

    @classmethod
    def full(cls, mode, value: float, num_frames: int, num_bins: int, theta_max: float,
             theta_min: float = THETA_MIN) -> "ThetaField":
        mode = Mode.parse(mode)
        shape = {Mode.CONSTANT: (1, 1), Mode.PER_FRAME: (num_frames, 1),
                 Mode.PER_FRAME_PER_FREQ: (num_frames, num_bins)}[mode]
        return cls(mode, np.full(shape, float(value)), theta_min, theta_max)

    @classmethod
    def constant(cls, value: float, theta_max: float, theta_min: float = THETA_MIN) -> "ThetaField":
        return cls(Mode.CONSTANT, [[value]], theta_min, theta_max)

    def with_values(self, values) -> "ThetaField":
        return ThetaField(self.mode, values, self.theta_min, self.theta_max)

    def clip(self, values) -> np.ndarray:
        return np.clip(values, self.theta_min, self.theta_max)

    def check(self, num_frames: int, num_bins: int):
        expected = {Mode.CONSTANT: (1, 1), Mode.PER_FRAME: (num_frames, 1),
                    Mode.PER_FRAME_PER_FREQ: (num_frames, num_bins)}[self.mode]
        if self.values.shape != expected:
            raise ShapeError(f"{self.mode.value} theta has shape {self.values.shape}, grid needs {expected}")

    def broadcast(self, num_frames: int, num_bins: int) -> np.ndarray:
        self.check(num_frames, num_bins)
        return np.broadcast_to(self.values, (num_frames, num_bins))

    def reduce(self, per_bin: np.ndarray) -> np.ndarray:
        """Sum a per-bin array down to this field's shape (adjoint of broadcast)."""
        if self.mode is Mode.CONSTANT:
            return np.array([[per_bin.sum()]])
        if self.mode is Mode.PER_FRAME:
            return per_bin.sum(axis=1, keepdims=True)
        return np.array(per_bin, dtype=np.float64)


@dataclass(frozen=True)
class Spectrogram:
    values: np.ndarray
    grid: FrameGrid
    onesided: bool = True

    def __post_init__(self):
        k = self.grid.num_bins(self.onesided)
        if self.values.shape != (self.grid.num_frames, k):
            raise ShapeError(f"spectrogram shape {self.values.shape} != ({self.grid.num_frames}, {k})")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def magnitude(self, log: bool = False) -> np.ndarray:
        return magnitude(self, log=log)

    def frequencies(self, sample_rate: float) -> np.ndarray:
        return np.arange(self.values.shape[1]) * sample_rate / self.grid.support

    def frame_times(self, sample_rate: float) -> np.ndarray:
        return (self.grid.starts + (self.grid.support - 1) / 2) / sample_rate


def _dft_basis(num_bins: int, support: int, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Reduce k*f modulo N before scaling to keep the angles accurate.
    ang = 2 * np.pi * (np.outer(np.arange(num_bins), k) % support) / support
    return np.cos(ang), -np.sin(ang)


class AdaptiveSTFT:
    """Transform plan for one signal, grid and window kind.

    Frames and DFT-modulated frames are prepared once so repeated
    evaluations at different theta (as in an optimisation loop) only pay
    for the window evaluation and the sums.
    """

    def __init__(self, signal: Signal | np.ndarray, grid: FrameGrid, kind=WindowKind.HANN,
                 onesided: bool = True):
        samples = signal.samples if isinstance(signal, Signal) else np.asarray(signal, dtype=np.float64)
        self.grid = grid
        self.kind = WindowKind.parse(kind)
        self.onesided = onesided
        self.num_frames = grid.num_frames
        self.num_bins = grid.num_bins(onesided)
        self.frames = grid.frames(samples)
        n = grid.support
        self.offsets = np.arange(n) - (n - 1) / 2
        self._half = n // 2
        self._half_offsets = self.offsets[: self._half]
        self._folded = None

    # -- per-bin path ---------------------------------------------------
    def _chunks(self):
        step = max(1, _CHUNK_LIMIT // (self.num_bins * max(self._half, 1)))
        for lo in range(0, self.num_frames, step):
            yield lo, min(lo + step, self.num_frames)

    def _fold(self, lo: int, hi: int):
        n, h = self.grid.support, self._half
        fr = self.frames[lo:hi]
        k = np.arange(n)
        cos, msin = _dft_basis(self.num_bins, n, k)
        # Pair sample k with N-1-k: both see the same window value.
        head, tail = fr[:, :h], fr[:, ::-1][:, :h]
        yr = head[:, None, :] * cos[None, :, :h] + tail[:, None, :] * cos[None, :, ::-1][:, :, :h]
        yi = head[:, None, :] * msin[None, :, :h] + tail[:, None, :] * msin[None, :, ::-1][:, :, :h]
        if n % 2:
            mid = fr[:, h][:, None] * (cos[:, h] + 1j * msin[:, h])[None, :]
        else:
            mid = None
        return yr, yi, mid

    def _folded_chunks(self):
        if self._folded is not None:
            yield from self._folded
            return
        total = self.num_frames * self.num_bins * max(self._half, 1)
        cache = [] if total <= _CACHE_LIMIT else None
        for lo, hi in self._chunks():
            item = (lo, hi, *self._fold(lo, hi))
            if cache is not None:
                cache.append(item)
            yield item
        if cache is not None:
            self._folded = cache

    def _per_bin(self, theta: np.ndarray, want_value: bool, want_tangent: bool):
        out_s = np.empty((self.num_frames, self.num_bins), complex) if want_value else None
        out_t = np.empty((self.num_frames, self.num_bins), complex) if want_tangent else None
        x = self._half_offsets
        for lo, hi, yr, yi, mid in self._folded_chunks():
            g, dg = window_pair(self.kind, x[None, None, :], theta[lo:hi, :, None])
            if want_value:
                s = np.einsum("mfk,mfk->mf", g, yr) + 1j * np.einsum("mfk,mfk->mf", g, yi)
                # Window is exactly 1 at the centre sample for both kinds.
                out_s[lo:hi] = s if mid is None else s + mid
            if want_tangent:
                out_t[lo:hi] = np.einsum("mfk,mfk->mf", dg, yr) + 1j * np.einsum("mfk,mfk->mf", dg, yi)
        return out_s, out_t

    # -- per-frame path ---------------------------------------------------
    def _per_frame(self, theta_frames: np.ndarray, want_value: bool, want_tangent: bool):
        g, dg = window_pair(self.kind, self.offsets[None, :], theta_frames[:, None])
        fft = np.fft.rfft if self.onesided else np.fft.fft
        s = fft(self.frames * g, axis=1) if want_value else None
        t = fft(self.frames * dg, axis=1) if want_tangent else None
        return s, t

    def evaluate(self, theta: ThetaField, want_value: bool = True, want_tangent: bool = True):
        """Return ``(S, T)`` as complex (frames x bins) arrays."""
        theta.check(self.num_frames, self.num_bins)
        check_theta(theta.values, self.grid.support, theta.theta_min)
        if theta.mode is Mode.PER_FRAME_PER_FREQ:
            return self._per_bin(theta.values, want_value, want_tangent)
        per_frame = np.broadcast_to(theta.values[:, 0], (self.num_frames,))
        return self._per_frame(per_frame, want_value, want_tangent)

    def forward(self, theta: ThetaField) -> Spectrogram:
        return Spectrogram(self.evaluate(theta, True, False)[0], self.grid, self.onesided)

    def tangent(self, theta: ThetaField) -> Spectrogram:
        return Spectrogram(self.evaluate(theta, False, True)[1], self.grid, self.onesided)


def forward(signal: Signal, grid: FrameGrid, theta: ThetaField, kind=WindowKind.HANN,
            onesided: bool = True) -> Spectrogram:
    """Adaptive STFT of ``signal`` with one window length per (frame, bin)."""
    return AdaptiveSTFT(signal, grid, kind, onesided).forward(theta)


def tangent(signal: Signal, grid: FrameGrid, theta: ThetaField, kind=WindowKind.HANN,
            onesided: bool = True) -> Spectrogram:
    """dS[i, f]/dtheta_if: the same transform with the window derivative."""
    return AdaptiveSTFT(signal, grid, kind, onesided).tangent(theta)


def reference_stft(signal: Signal, grid: FrameGrid, kind=WindowKind.HANN,
                   onesided: bool = True) -> Spectrogram:
    """Classic STFT with a full-length window, by direct DFT summation.

    Deliberately shares no code with :class:`AdaptiveSTFT`: frames are cut
    with a loop and the full-support windows are written in their
    sine-squared / plain Gaussian forms.
    """
    kind = WindowKind.parse(kind)
    n = grid.support
    x = signal.samples if isinstance(signal, Signal) else np.asarray(signal, dtype=np.float64)
    k = np.arange(n)
    if kind is WindowKind.HANN:
        win = np.sin(np.pi * (k + 0.5) / n) ** 2
    else:
        win = np.exp(-18.0 * ((k - (n - 1) / 2) / n) ** 2)
    num_bins = n // 2 + 1 if onesided else n
    dft = np.exp(-2j * np.pi * np.outer(np.arange(num_bins), k) / n)
    out = np.zeros((grid.num_frames, num_bins), complex)
    for i in range(grid.num_frames):
        t0 = grid.first_index + i * grid.hop
        seg = np.zeros(n)
        for j in range(n):
            if 0 <= t0 + j < x.size:
                seg[j] = x[t0 + j]
        out[i] = dft @ (win * seg)
    return Spectrogram(out, grid, onesided)


def magnitude(spec: Spectrogram | np.ndarray, log: bool = False, floor: float = 1e-12) -> np.ndarray:
    """Entrywise modulus; ``log=True`` gives ``log10`` of it (floored)."""
    values = spec.values if isinstance(spec, Spectrogram) else np.asarray(spec)
    mag = np.hypot(values.real, values.imag)
    if log:
        return np.log10(np.maximum(mag, floor * max(mag.max(), floor)))
    return mag
