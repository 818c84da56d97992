"""Test signals: containers, synthesizers and CSV round-tripping.

The synthesizers build sums of tones, piecewise-linear chirps and short
Hann-enveloped bursts, optionally with white Gaussian noise at a requested
SNR.  Everything is a pure function of the :class:`SynthSpec` (including its
seed), so repeated calls return bit-identical arrays.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

__all__ = [
    "Signal",
    "Component",
    "SynthSpec",
    "SignalValidationError",
    "gen_illustrative",
    "gen_multiharmonic",
    "clean_and_noise",
    "instantaneous_frequency",
    "bin_labels",
    "load_csv",
    "save_csv",
    "load_synth_spec",
    "default_spec",
]

COMPONENT_KINDS = ("tone", "chirp", "burst")


class SignalValidationError(ValueError):
    """Raised for malformed signals, synthesis specs or CSV files."""


@dataclass(frozen=True)
class Signal:
    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise SignalValidationError("signal has no samples")
        if not np.all(np.isfinite(samples)):
            bad = int(np.flatnonzero(~np.isfinite(samples))[0])
            raise SignalValidationError(f"non-finite sample at index {bad}")
        fs = float(self.sample_rate)
        if not (math.isfinite(fs) and fs > 0):
            raise SignalValidationError(f"sample_rate must be positive and finite, got {self.sample_rate!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", fs)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate

    def scaled(self, factor: float) -> "Signal":
        return Signal(self.samples * factor, self.sample_rate)


@dataclass(frozen=True)
class Component:
    """One additive signal component.

    ``tone``   constant ``frequency``, gated to ``[start, end)``.
    ``chirp``  piecewise-linear frequency ``law`` given as ``(time, Hz)``
               knots; held constant outside the first/last knot.
    ``burst``  carrier at ``frequency`` under a Hann envelope spanning
               ``[start, end]``.
    """

    kind: str
    amplitude: float = 1.0
    frequency: float | None = None
    law: tuple[tuple[float, float], ...] = ()
    start: float = 0.0
    end: float | None = None
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in COMPONENT_KINDS:
            raise SignalValidationError(f"unknown component kind {self.kind!r}; expected one of {COMPONENT_KINDS}")
        law = tuple((float(t), float(f)) for t, f in self.law)
        object.__setattr__(self, "law", law)
        if self.kind == "chirp":
            if len(law) < 1:
                raise SignalValidationError("chirp component needs at least one (time, frequency) knot")
            times = [t for t, _ in law]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise SignalValidationError("chirp law knots must have strictly increasing times")
        elif self.frequency is None:
            raise SignalValidationError(f"{self.kind} component needs a frequency")

    def extent(self, duration: float) -> tuple[float, float]:
        return self.start, duration if self.end is None else self.end

    def frequency_at(self, t: np.ndarray) -> np.ndarray:
        """Instantaneous frequency in Hz (ignores gating)."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "chirp":
            kt, kf = np.array(self.law).T
            return np.interp(t, kt, kf)
        return np.full_like(t, float(self.frequency))

    def phase_at(self, t: np.ndarray) -> np.ndarray:
        """Running phase 2*pi*integral(f) from t=0, in closed form."""
        t = np.asarray(t, dtype=np.float64)
        if self.kind != "chirp":
            return 2 * np.pi * float(self.frequency) * t
        return 2 * np.pi * _integrate_pwl(self.law, t)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["law"] = [list(k) for k in self.law]
        return {k: v for k, v in d.items() if v not in (None, [], ())}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Component":
        d = dict(d)
        d["law"] = tuple(tuple(k) for k in d.get("law", ()))
        return cls(**d)


def _integrate_pwl(law, t):
    """Integral from 0 to t of the piecewise-linear law (constant extrapolation)."""
    kt = np.array([k[0] for k in law])
    kf = np.array([k[1] for k in law])
    bt = np.concatenate(([min(0.0, kt[0]) - 1.0], kt))
    bf = np.concatenate(([kf[0]], kf))
    seg_area = 0.5 * (bf[1:] + bf[:-1]) * np.diff(bt)
    cum = np.concatenate(([0.0], np.cumsum(seg_area)))

    def antiderivative(x):
        idx = np.clip(np.searchsorted(bt, x, side="right") - 1, 0, bt.size - 1)
        t0 = bt[idx]
        f0 = bf[idx]
        slope = np.zeros_like(t0)
        inner = idx < bt.size - 1
        slope[inner] = (bf[idx[inner] + 1] - f0[inner]) / (bt[idx[inner] + 1] - t0[inner])
        dt = x - t0
        return cum[idx] + f0 * dt + 0.5 * slope * dt * dt

    return antiderivative(t) - antiderivative(np.zeros(1))[0]


@dataclass(frozen=True)
class SynthSpec:
    duration: float
    sample_rate: float
    components: tuple[Component, ...] = ()
    harmonics: tuple[tuple[int, float], ...] = ((1, 1.0),)
    noise_snr_db: float | None = None
    seed: int = 0
    name: str = ""
    version: int = 1
    extra: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component.from_dict(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "harmonics", tuple((int(h), float(a)) for h, a in self.harmonics))
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise SignalValidationError(f"duration must be positive, got {self.duration!r}")
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise SignalValidationError(f"sample_rate must be positive, got {self.sample_rate!r}")
        for n, c in enumerate(comps):
            start, end = c.extent(self.duration)
            if not (0.0 <= start < end <= self.duration):
                raise SignalValidationError(
                    f"component {n} ({c.kind}) extent [{start}, {end}] lies outside [0, {self.duration}]"
                )
        if any(h < 1 for h, _ in self.harmonics):
            raise SignalValidationError("harmonic orders must be >= 1")

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.num_samples) / self.sample_rate

    def replace(self, **changes) -> "SynthSpec":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(changes)
        return SynthSpec(**d)

    def to_dict(self) -> dict[str, Any]:
        d = {
            "version": self.version,
            "name": self.name,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "seed": self.seed,
            "noise_snr_db": self.noise_snr_db,
            "components": [c.to_dict() for c in self.components],
            "harmonics": [list(h) for h in self.harmonics],
        }
        if self.extra:
            d["extra"] = self.extra
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SynthSpec":
        d = dict(d)
        d["components"] = tuple(Component.from_dict(c) for c in d.get("components", ()))
        d["harmonics"] = tuple(tuple(h) for h in d.get("harmonics", ((1, 1.0),)))
        d.setdefault("extra", {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SignalValidationError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**d)


def load_synth_spec(path: str | Path) -> SynthSpec:
    with open(path) as fh:
        return SynthSpec.from_dict(yaml.safe_load(fh))


def default_spec(name: str) -> SynthSpec:
    """Load one of the shipped signal configs: ``illustrative``,
    ``illustrative_desk`` or ``multiharmonic``."""
    text = resources.files("dastft.configs").joinpath(f"{name}.yaml").read_text()
    data = yaml.safe_load(text)
    return SynthSpec.from_dict(data["signal"]["synth"] if "signal" in data else data)


def _check_nyquist(spec: SynthSpec, comp: Component, order: int = 1):
    nyq = spec.sample_rate / 2
    start, end = comp.extent(spec.duration)
    t = spec.times
    t = t[(t >= start) & (t <= end)]
    if comp.kind == "chirp":
        # Extrema of a piecewise-linear law sit on knots or extent edges.
        knots = np.array([k[0] for k in comp.law])
        t = np.concatenate((t, knots[(knots >= start) & (knots <= end)], [start, end]))
    if t.size == 0:
        return
    f = order * comp.frequency_at(t)
    if comp.kind == "burst":
        # Hann envelope main lobe half-width.
        f = f + 2.0 / (end - start)
    worst = int(np.argmax(f))
    if f[worst] > nyq:
        raise SignalValidationError(
            f"{comp.kind} component (harmonic {order}) reaches {f[worst]:.6g} Hz at t={t[worst]:.6g} s, "
            f"above Nyquist {nyq:.6g} Hz"
        )


def _render(comp: Component, spec: SynthSpec, order: int = 1) -> np.ndarray:
    t = spec.times
    start, end = comp.extent(spec.duration)
    if comp.kind == "burst":
        u = (t - start) / (end - start)
        env = np.where((u >= 0) & (u <= 1), 0.5 - 0.5 * np.cos(2 * np.pi * u), 0.0)
        return comp.amplitude * env * np.sin(2 * np.pi * comp.frequency * (t - start) + comp.phase)
    out = comp.amplitude * np.sin(order * comp.phase_at(t) + comp.phase)
    if start > 0 or end < spec.duration:
        out = np.where((t >= start) & (t < end), out, 0.0)
    return out


def _noise(spec: SynthSpec, clean: np.ndarray) -> np.ndarray:
    if spec.noise_snr_db is None:
        return np.zeros_like(clean)
    power = float(np.mean(clean**2))
    sigma = math.sqrt(power / 10 ** (spec.noise_snr_db / 10))
    # Philox is counter-based: identical streams across platforms for a seed.
    rng = np.random.Generator(np.random.Philox(spec.seed))
    return sigma * rng.standard_normal(clean.size)


def clean_and_noise(spec: SynthSpec, multiharmonic: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Return the noiseless signal and the additive noise separately."""
    if multiharmonic:
        if not spec.components:
            raise SignalValidationError("multi-harmonic spec needs a main component")
        main, *others = spec.components
        if main.kind == "burst":
            raise SignalValidationError("main component must be a tone or a chirp")
        clean = np.zeros(spec.num_samples)
        for order, amp in spec.harmonics:
            _check_nyquist(spec, main, order)
            clean += amp * _render(main, spec, order)
        for comp in others:
            _check_nyquist(spec, comp)
            clean += _render(comp, spec)
    else:
        clean = np.zeros(spec.num_samples)
        for comp in spec.components:
            _check_nyquist(spec, comp)
            clean += _render(comp, spec)
    return clean, _noise(spec, clean)


def gen_illustrative(spec: SynthSpec) -> Signal:
    """Sum of the synth spec's components plus white Gaussian noise."""
    clean, noise = clean_and_noise(spec)
    return Signal(clean + noise, spec.sample_rate)


def gen_multiharmonic(spec: SynthSpec) -> Signal:
    """Harmonic series on the first component's frequency law.

    Harmonic ``h`` with amplitude ``a`` contributes ``a*sin(h*phase(t))``,
    so every harmonic tracks an exact integer multiple of the main law.
    Any further components are added as-is.
    """
    clean, noise = clean_and_noise(spec, multiharmonic=True)
    return Signal(clean + noise, spec.sample_rate)


def instantaneous_frequency(comp: Component, t) -> np.ndarray:
    return comp.frequency_at(t)


def bin_labels(spec: SynthSpec, grid, num_bins: int, *, multiharmonic: bool = False,
               tone_halfwidth: float = 1.0, guard_bins: float = 4.0) -> dict[str, np.ndarray]:
    """Ground-truth (frames x bins) masks derived from the synthesis spec.

    Frame ``i`` is located at its centre sample ``t_i + (N-1)/2``.

    ``transient``  frames whose centre lies within half a hop of a burst,
                   bins inside the burst's main lobe.
    ``stationary`` tone/chirp bins within ``tone_halfwidth`` bins of the
                   component frequency, in frames whose support does not
                   touch any burst.
    ``noise``      bins further than ``guard_bins`` from every component
                   frequency, in frames whose support does not touch any
                   burst.
    ``components`` per-component list of occupancy masks.
    """
    n = grid.support
    fs = spec.sample_rate
    centers = (grid.starts + (n - 1) / 2) / fs
    half_support = n / (2 * fs)
    bin_hz = fs / n
    freqs = np.arange(num_bins) * bin_hz
    shape = (grid.num_frames, num_bins)

    transient = np.zeros(shape, bool)
    near_burst = np.zeros(grid.num_frames, bool)
    occupied = np.zeros(shape, bool)
    stationary = np.zeros(shape, bool)
    per_comp = []

    comps = list(spec.components)
    orders = [[1] for _ in comps]
    if multiharmonic and comps:
        orders[0] = [h for h, _ in spec.harmonics]

    for comp, ords in zip(comps, orders):
        start, end = comp.extent(spec.duration)
        mask = np.zeros(shape, bool)
        if comp.kind == "burst":
            margin = grid.hop / (2 * fs)
            inside = (centers >= start - margin) & (centers <= end + margin)
            lobe = 2.0 / (end - start)
            band = np.abs(freqs - comp.frequency) <= lobe
            mask |= inside[:, None] & band[None, :]
            transient |= mask
            near_burst |= (centers + half_support >= start) & (centers - half_support <= end)
            guard = np.abs(freqs - comp.frequency) <= lobe + guard_bins * bin_hz
            touched = (centers + half_support >= start) & (centers - half_support <= end)
            occupied |= touched[:, None] & guard[None, :]
        else:
            active = (centers >= start) & (centers < end)
            for h in ords:
                f = h * comp.frequency_at(centers)
                dist = np.abs(freqs[None, :] - f[:, None]) / bin_hz
                mask |= active[:, None] & (dist <= tone_halfwidth)
                occupied |= active[:, None] & (dist <= guard_bins)
        per_comp.append(mask)

    for comp, mask in zip(comps, per_comp):
        if comp.kind != "burst":
            stationary |= mask
    stationary &= ~near_burst[:, None]
    stationary &= ~transient
    noise = ~occupied & ~near_burst[:, None]
    return {"transient": transient, "stationary": stationary, "noise": noise, "components": per_comp}


def save_csv(signal: Signal, path: str | Path) -> None:
    """One value per line, preceded by a ``sample_rate=<fs>`` header."""
    with open(path, "w") as fh:
        fh.write(f"sample_rate={signal.sample_rate!r}\n")
        for v in signal.samples:
            fh.write(f"{float(v)!r}\n")


def load_csv(path: str | Path, sample_rate: float | None = None) -> Signal:
    """Read a single-column CSV written by :func:`save_csv`.

    A missing header falls back to ``sample_rate`` (default 1.0).
    """
    values = []
    fs = sample_rate
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if lineno == 1 and text.startswith("sample_rate="):
                try:
                    fs = float(text.split("=", 1)[1])
                except ValueError:
                    raise SignalValidationError(f"{path}: bad sample_rate header on row 1: {text!r}") from None
                continue
            try:
                values.append(float(text.split(",")[0]))
            except ValueError:
                raise SignalValidationError(f"{path}: non-numeric value on row {lineno}: {text!r}") from None
    if not values:
        raise SignalValidationError(f"{path}: no samples")
    return Signal(np.array(values), 1.0 if fs is None else fs)
