"""Command-line experiment driver.

    dastft synth       --config fig1 --out out/
    dastft spectrogram --config fig1 --theta 100
    dastft optimize    --config fig4 --lambda 0
    dastft compare     --config fig5

``--config`` takes a YAML path or the name of a shipped config.  A config
may ``extends:`` another one; its keys are merged over the parent's.
Command-line flags win over both.

Exit codes: 0 success/converged, 1 validation error, 2 optimisation stopped
at max_iters, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import export
from .adaptation import Objective, nonlocal_weights, tv_neighborhood
from .optimizer import NumericalFailure, OptimConfig, grid_search, optimize
from .signal_model import Signal, SynthSpec, clean_and_noise, load_csv, save_csv
from .stft_core import AdaptiveSTFT, FrameGrid, Mode, ThetaField
from .window import THETA_MIN, WindowKind

log = logging.getLogger("dastft")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_NUMERICAL = 0, 1, 2, 3
REGULARIZERS = ("none", "tv", "nonlocal")


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _read_config_text(ref: str, relative_to: Path | None = None) -> tuple[dict, Path | None]:
    path = Path(ref)
    if relative_to is not None and not path.is_absolute():
        candidate = relative_to / path
        if candidate.exists() or candidate.with_suffix(".yaml").exists():
            path = candidate
    for p in (path, path.with_suffix(".yaml")):
        if p.is_file():
            return yaml.safe_load(p.read_text()) or {}, p.parent
    shipped = resources.files("dastft.configs").joinpath(f"{Path(ref).stem}.yaml")
    if shipped.is_file():
        return yaml.safe_load(shipped.read_text()) or {}, None
    raise ConfigError(f"config {ref!r} not found")


def load_config_dict(ref: str, _seen: tuple = (), _relative_to: Path | None = None) -> dict:
    if ref in _seen:
        raise ConfigError(f"circular 'extends' through {ref!r}")
    data, folder = _read_config_text(ref, _relative_to)
    parent = data.pop("extends", None)
    if parent is None:
        return data
    return _merge(load_config_dict(parent, _seen + (ref,), folder), data)


@dataclass
class ExperimentConfig:
    synth: SynthSpec | None = None
    csv: str | None = None
    multiharmonic: bool = False
    support: int = 256
    hop: int = 32
    first_index: int | None = None
    mode: Mode = Mode.PER_FRAME_PER_FREQ
    window: WindowKind = WindowKind.HANN
    lam: float = 0.0
    regularizer: str = "none"
    nonlocal_params: dict[str, Any] = field(default_factory=dict)
    power: bool = False
    optimizer: OptimConfig = field(default_factory=OptimConfig)
    theta_grid: list[float] = field(default_factory=list)
    out: str = "out"
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = copy.deepcopy(d)
        sig = d.pop("signal", {}) or {}
        grid = d.pop("grid", {}) or {}
        crit = d.pop("criterion", {}) or {}
        opt = d.pop("optimizer", {}) or {}
        cfg = cls(
            synth=SynthSpec.from_dict(sig["synth"]) if sig.get("synth") else None,
            csv=sig.get("csv"),
            multiharmonic=bool(sig.get("multiharmonic", False)),
            support=int(grid.get("support", 256)),
            hop=int(grid.get("hop", 32)),
            first_index=grid.get("first_index"),
            mode=Mode.parse(d.pop("mode", "tf")),
            window=WindowKind.parse(d.pop("window", "hann")),
            lam=float(crit.get("lambda", 0.0)),
            regularizer=str(crit.get("regularizer", "none")),
            nonlocal_params=dict(crit.get("nonlocal", {}) or {}),
            power=bool(crit.get("power", False)),
            optimizer=OptimConfig(**opt),
            theta_grid=[float(t) for t in d.pop("theta_grid", [])],
            out=str(d.pop("out", "out")),
            name=str(d.pop("name", "")),
        )
        d.pop("version", None)
        if d:
            raise ConfigError(f"unknown config keys: {sorted(d)}")
        return cfg

    def to_dict(self) -> dict:
        sig: dict[str, Any] = {}
        if self.synth is not None:
            sig["synth"] = self.synth.to_dict()
        if self.csv is not None:
            sig["csv"] = self.csv
        if self.multiharmonic:
            sig["multiharmonic"] = True
        grid = {"support": self.support, "hop": self.hop}
        if self.first_index is not None:
            grid["first_index"] = self.first_index
        crit: dict[str, Any] = {"lambda": self.lam, "regularizer": self.regularizer}
        if self.nonlocal_params:
            crit["nonlocal"] = dict(self.nonlocal_params)
        if self.power:
            crit["power"] = True
        return {
            "version": 1,
            "name": self.name,
            "signal": sig,
            "grid": grid,
            "mode": self.mode.value,
            "window": self.window.value,
            "criterion": crit,
            "optimizer": self.optimizer.to_dict(),
            "theta_grid": list(self.theta_grid),
            "out": self.out,
        }

    def validate(self) -> None:
        if (self.synth is None) == (self.csv is None):
            raise ConfigError("signal needs exactly one of 'synth' or 'csv'")
        if self.support < 2 or self.hop < 1:
            raise ConfigError(f"bad grid: support={self.support}, hop={self.hop}")
        if self.regularizer not in REGULARIZERS:
            raise ConfigError(f"regularizer must be one of {REGULARIZERS}, got {self.regularizer!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        hi = self.optimizer.theta_max or self.support
        if not (THETA_MIN <= self.optimizer.theta_min <= hi <= self.support):
            raise ConfigError(f"theta bounds [{self.optimizer.theta_min}, {hi}] not inside [{THETA_MIN}, {self.support}]")
        for t in self.theta_grid:
            if not (self.optimizer.theta_min <= t <= self.support):
                raise ConfigError(f"theta grid value {t} outside [{self.optimizer.theta_min}, {self.support}]")
        if self.synth is not None:
            # Runs the Nyquist checks.
            clean_and_noise(self.synth, self.multiharmonic)

    def load_signal(self) -> Signal:
        if self.csv is not None:
            return load_csv(self.csv)
        clean, noise = clean_and_noise(self.synth, self.multiharmonic)
        return Signal(clean + noise, self.synth.sample_rate)

    def grid_for(self, signal: Signal) -> FrameGrid:
        grid = FrameGrid.centered(len(signal), self.support, self.hop)
        if self.first_index is not None:
            span = grid.starts[-1] - grid.first_index
            grid = FrameGrid(self.first_index, self.hop, 1 + span // self.hop, self.support)
        return grid


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config_dict(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(data)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None and cfg.synth is not None:
        cfg.synth = cfg.synth.replace(seed=args.seed)
    if args.seed is not None:
        cfg.optimizer.seed = args.seed
    if args.mode is not None:
        cfg.mode = Mode.parse(args.mode)
    if args.lam is not None:
        cfg.lam = args.lam
    if args.reg is not None:
        cfg.regularizer = args.reg
    if args.window is not None:
        cfg.window = WindowKind.parse(args.window)
    if args.support is not None:
        cfg.support = args.support
    if args.hop is not None:
        cfg.hop = args.hop
    if args.max_iters is not None:
        cfg.optimizer.max_iters = args.max_iters
    if args.step_size is not None:
        cfg.optimizer.step_size = args.step_size
    if args.csv is not None:
        cfg.csv, cfg.synth = args.csv, None
    cfg.validate()
    return cfg


def _neighborhood(cfg: ExperimentConfig, plan: AdaptiveSTFT):
    if cfg.regularizer == "none" or cfg.mode is Mode.CONSTANT:
        return None
    shape = (plan.num_frames, 1) if cfg.mode is Mode.PER_FRAME else (plan.num_frames, plan.num_bins)
    if cfg.regularizer == "tv":
        return tv_neighborhood(shape)
    params = dict(cfg.nonlocal_params)
    pilot_theta = float(params.pop("pilot_theta", cfg.support / 2))
    pilot = plan.forward(ThetaField.constant(pilot_theta, cfg.support, min(THETA_MIN, pilot_theta)))
    return nonlocal_weights(pilot, per_frame=cfg.mode is Mode.PER_FRAME, **params)


def _write_spectrogram(out: Path, stem: str, spec) -> None:
    export.write_spectrogram_csv(spec, out / f"{stem}.csv")
    mag = spec.magnitude()
    export.write_matrix_csv(mag, out / f"{stem}_magnitude.csv")
    export.write_pgm(export.log_magnitude_image(mag), out / f"{stem}.pgm")


def cmd_synth(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    signal = cfg.load_signal()
    save_csv(signal, out / "signal.csv")
    meta = {"num_samples": len(signal), "sample_rate": signal.sample_rate,
            "multiharmonic": cfg.multiharmonic, "source": cfg.to_dict()["signal"]}
    (out / "signal.yaml").write_text(yaml.safe_dump(meta, sort_keys=False))
    if cfg.synth is not None:
        clean, _ = clean_and_noise(cfg.synth, cfg.multiharmonic)
        save_csv(Signal(clean, signal.sample_rate), out / "clean.csv")
    log.info("wrote %d samples to %s", len(signal), out / "signal.csv")
    return EXIT_OK


def cmd_spectrogram(cfg: ExperimentConfig, theta: float | None) -> int:
    theta = float(cfg.support if theta is None else theta)
    if not (cfg.optimizer.theta_min <= theta <= cfg.support):
        raise ConfigError(f"theta={theta} outside [{cfg.optimizer.theta_min}, {cfg.support}]")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    signal = cfg.load_signal()
    plan = AdaptiveSTFT(signal, cfg.grid_for(signal), cfg.window)
    spec = plan.forward(ThetaField.constant(theta, cfg.support, min(THETA_MIN, theta)))
    _write_spectrogram(out, f"spectrogram_theta{theta:g}", spec)
    return EXIT_OK


def _run_optimize(cfg: ExperimentConfig, signal: Signal):
    grid = cfg.grid_for(signal)
    plan = AdaptiveSTFT(signal, grid, cfg.window)
    nb = _neighborhood(cfg, plan)
    objective = Objective(plan, grid, cfg.window, nb, cfg.lam, power=cfg.power)
    trace = optimize(None, grid, cfg.mode, cfg.window, config=cfg.optimizer, objective=objective,
                     num_bins=plan.num_bins)
    return plan, objective, trace


def cmd_optimize(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    signal = cfg.load_signal()
    try:
        plan, _, trace = _run_optimize(cfg, signal)
    except NumericalFailure as err:
        (out / "trace.csv").write_text(err.trace.to_csv())
        raise
    (out / "trace.csv").write_text(trace.to_csv())
    theta = trace.best_theta
    full = theta.broadcast(plan.num_frames, plan.num_bins)
    export.write_matrix_csv(theta.values, out / "theta.csv")
    export.write_pgm(export.theta_image(full, theta.theta_min, theta.theta_max), out / "theta.pgm")
    _write_spectrogram(out, "spectrogram", plan.forward(theta))
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
    log.info("best loss %.6g after %d iterations (converged=%s)", trace.best_loss,
             trace.iterations_used, trace.converged)
    return EXIT_OK if trace.converged else EXIT_NOT_CONVERGED


COMPARE_HEADER = "method,mode,theta,loss,wall_time_s,evaluations"


def cmd_compare(cfg: ExperimentConfig, theta_grid: list[float] | None) -> int:
    thetas = list(theta_grid if theta_grid is not None else cfg.theta_grid)
    if not thetas:
        raise ConfigError("compare needs a non-empty theta grid")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    signal = cfg.load_signal()
    grid = cfg.grid_for(signal)

    t0 = time.perf_counter()
    best_theta, table = grid_search(signal, grid, cfg.window, thetas, power=cfg.power,
                                    theta_min=cfg.optimizer.theta_min)
    grid_time = time.perf_counter() - t0
    export.write_matrix_csv(table, out / "grid_table.csv")

    t0 = time.perf_counter()
    _, objective, trace = _run_optimize(cfg, signal)
    opt_time = time.perf_counter() - t0
    best_grid_loss = float(table[:, 1].min())
    theta_summary = float(np.median(trace.best_theta.values))
    rows = [
        COMPARE_HEADER,
        f"grid_search,constant,{best_theta!r},{best_grid_loss!r},{grid_time!r},{len(thetas)}",
        f"gradient_descent,{cfg.mode.value},{theta_summary!r},{trace.best_loss!r},{opt_time!r},{objective.evaluations}",
    ]
    (out / "compare.csv").write_text("\n".join(rows) + "\n")
    (out / "trace.csv").write_text(trace.to_csv())
    log.info("grid best %.6g at theta=%g; gradient descent %.6g", best_grid_loss, best_theta, trace.best_loss)
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file or shipped config name (fig1, fig3, fig4, fig5, ...)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=["constant", "time", "tf", "per_frame", "per_frame_per_freq"])
    common.add_argument("--lambda", dest="lam", type=float)
    common.add_argument("--reg", choices=REGULARIZERS)
    common.add_argument("--window", choices=[k.value for k in WindowKind])
    common.add_argument("--support", type=int)
    common.add_argument("--hop", type=int)
    common.add_argument("--max-iters", type=int)
    common.add_argument("--step-size", type=float)
    common.add_argument("--csv", help="read the signal from this CSV instead of synthesising it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dastft", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write the configured signal as CSV")
    p = sub.add_parser("spectrogram", parents=[common], help="constant-window spectrogram")
    p.add_argument("--theta", type=float, help="window length (default: the support)")
    sub.add_parser("optimize", parents=[common], help="adapt the window-length field")
    p = sub.add_parser("compare", parents=[common], help="grid search vs gradient descent")
    p.add_argument("--theta-grid", type=float, nargs="+")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "spectrogram":
            return cmd_spectrogram(cfg, args.theta)
        if args.command == "optimize":
            return cmd_optimize(cfg)
        return cmd_compare(cfg, args.theta_grid)
    except (ValueError, TypeError) as err:
        print(f"dastft: error: {err}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, FloatingPointError) as err:
        print(f"dastft: numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as err:
        print(f"dastft: error: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
