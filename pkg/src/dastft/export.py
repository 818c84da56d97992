"""Plain-text and 16-bit graymap writers for spectrograms, theta fields and traces."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .stft_core import FrameGrid, Spectrogram, ShapeError

__all__ = [
    "write_spectrogram_csv",
    "read_spectrogram_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "log_magnitude_image",
    "theta_image",
    "write_pgm",
    "read_pgm",
]

DB_RANGE = 80.0
_HEADER = re.compile(r"frames=(\d+) bins=(\d+) onesided=([01]) hop=(\d+)")


def _fmt_complex(z: complex) -> str:
    real, imag = float(z.real), float(z.imag)
    return f"{real!r}{'+' if np.copysign(1.0, imag) > 0 else '-'}{abs(imag)!r}j"


def write_spectrogram_csv(spec: Spectrogram, path: str | Path) -> None:
    """Header ``frames=M bins=K onesided=<0|1> hop=H`` then M rows of K ``re+imj``."""
    m, k = spec.values.shape
    with open(path, "w") as fh:
        fh.write(f"frames={m} bins={k} onesided={int(spec.onesided)} hop={spec.grid.hop}\n")
        for row in spec.values:
            fh.write(",".join(_fmt_complex(z) for z in row) + "\n")


def read_spectrogram_csv(path: str | Path, first_index: int = 0) -> Spectrogram:
    with open(path) as fh:
        header = fh.readline().strip()
        match = _HEADER.fullmatch(header)
        if not match:
            raise ShapeError(f"{path}: bad spectrogram header {header!r}")
        m, k, onesided, hop = (int(g) for g in match.groups())
        values = np.array([[complex(c) for c in line.strip().split(",")] for line in fh if line.strip()])
    if values.shape != (m, k):
        raise ShapeError(f"{path}: header says {m}x{k}, body is {values.shape}")
    support = 2 * (k - 1) if onesided else k
    return Spectrogram(values, FrameGrid(first_index, hop, m, support), bool(onesided))


def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.17g")


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def _to_image(matrix: np.ndarray) -> np.ndarray:
    # Rows become frequency (low at the bottom), columns become frames.
    return np.flipud(np.asarray(matrix).T)


def log_magnitude_image(mag: np.ndarray, db_range: float = DB_RANGE) -> np.ndarray:
    """uint16 image of ``20 log10(mag / max)`` clipped to ``[-db_range, 0]`` dB."""
    mag = np.asarray(mag, dtype=np.float64)
    peak = mag.max()
    if peak <= 0:
        return np.zeros(_to_image(mag).shape, np.uint16)
    db = 20 * np.log10(np.maximum(mag / peak, 10 ** (-db_range / 20)))
    scaled = np.round((db + db_range) / db_range * 65535)
    return _to_image(scaled).astype(np.uint16)


def theta_image(theta: np.ndarray, theta_min: float, theta_max: float) -> np.ndarray:
    """uint16 image mapping ``[theta_min, theta_max]`` linearly onto the full range."""
    unit = (np.asarray(theta, dtype=np.float64) - theta_min) / (theta_max - theta_min)
    return _to_image(np.round(np.clip(unit, 0, 1) * 65535)).astype(np.uint16)


def write_pgm(image: np.ndarray, path: str | Path) -> None:
    """Binary 16-bit portable graymap (big-endian samples, no comments)."""
    image = np.asarray(image, dtype=np.uint16)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(image.astype(">u2").tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 65535:
        raise ValueError(f"{path}: not a 16-bit binary graymap")
    w, h = int(fields[1]), int(fields[2])
    # Exactly one whitespace byte separates the header from the raster.
    return np.frombuffer(data, dtype=">u2", count=w * h, offset=pos + 1).reshape(h, w).astype(np.uint16)
