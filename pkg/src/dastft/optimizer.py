"""Projected first-order descent on the window-length field, plus the
grid-search baseline over constant window lengths."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adaptation import Criterion, LossReport, Neighborhood, Objective, entropy
from .signal_model import Signal
from .stft_core import FrameGrid, Mode, ThetaField
from .window import THETA_MIN, WindowKind

__all__ = ["OptimConfig", "OptimTrace", "NumericalFailure", "optimize", "grid_search", "TRACE_HEADER"]

log = logging.getLogger(__name__)

ALGORITHMS = ("gd", "momentum", "adam")
TRACE_HEADER = "iteration,total,entropy,regularization,grad_norm"


class NumericalFailure(FloatingPointError):
    """Non-finite loss during optimisation; carries the trace so far."""

    def __init__(self, message: str, trace: "OptimTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass
class OptimConfig:
    algorithm: str = "adam"
    step_size: float = 0.5
    max_iters: int = 500
    grad_tol: float | None = None   # None: 1e-6 * initial projected gradient norm
    loss_tol: float = 1e-9
    theta_init: float | str | np.ndarray = "auto"
    theta_min: float = THETA_MIN
    theta_max: float | None = None  # None: the support N
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if (self.grad_tol is not None and self.grad_tol < 0) or self.loss_tol < 0:
            raise ValueError("tolerances must be >= 0")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(d["theta_init"], np.ndarray):
            d["theta_init"] = d["theta_init"].tolist()
        return d


@dataclass
class OptimTrace:
    history: list[tuple[int, float, float, float, float]]
    theta: ThetaField
    converged: bool
    iterations_used: int
    best_theta: ThetaField
    best_loss: float
    final: LossReport | None = field(default=None, repr=False)

    @property
    def losses(self) -> np.ndarray:
        return np.array([h[1] for h in self.history])

    def to_csv(self) -> str:
        lines = [TRACE_HEADER]
        lines += [",".join([str(it)] + [repr(float(v)) for v in rest]) for it, *rest in self.history]
        return "\n".join(lines) + "\n"


def _initial_values(config: OptimConfig, mode: Mode, shape, theta_max: float) -> np.ndarray:
    init = config.theta_init
    if isinstance(init, str):
        if init == "auto":
            return np.full(shape, theta_max / 2)
        if init == "random":
            rng = np.random.Generator(np.random.Philox(config.seed))
            return rng.uniform(config.theta_min, theta_max, size=shape)
        raise ValueError(f"theta_init must be a number, an array, 'auto' or 'random'; got {init!r}")
    values = np.asarray(init, dtype=np.float64)
    if values.ndim == 0:
        return np.full(shape, float(values))
    values = np.array(np.broadcast_to(values.reshape(values.shape[0], -1) if values.ndim == 1 else values,
                                      shape), dtype=np.float64)
    return values


def _projected_grad(values, grad, lo, hi):
    # Components pushing an active bound outward do not count toward stationarity.
    g = grad.copy()
    g[(values <= lo) & (g > 0)] = 0.0
    g[(values >= hi) & (g < 0)] = 0.0
    return g


def optimize(signal: Signal | None, grid: FrameGrid | None, mode, kind=WindowKind.HANN,
             nb: Neighborhood | None = None, lam: float = 0.0, config: OptimConfig | None = None, *,
             criterion: Criterion = entropy, power: bool = False,
             objective: Callable[[ThetaField], LossReport] | None = None,
             num_bins: int | None = None, num_frames: int | None = None,
             callback: Callable[[int, LossReport, ThetaField], None] | None = None) -> OptimTrace:
    """Adapt the window-length field by projected gradient descent.

    Each iteration evaluates the loss and gradient at the current theta,
    records them, checks convergence (projected gradient norm below
    ``grad_tol`` or loss change below ``loss_tol``) and otherwise takes one
    step followed by clipping to ``[theta_min, theta_max]``.

    ``objective`` replaces the spectrogram loss with any
    ``ThetaField -> LossReport`` callable; ``num_frames``/``num_bins`` then
    size the field when no grid is given.
    """
    config = config or OptimConfig()
    mode = Mode.parse(mode)
    if objective is None:
        objective = Objective(signal, grid, kind, nb, lam, criterion=criterion, power=power)
        num_frames, num_bins = objective.plan.num_frames, objective.plan.num_bins
        support = grid.support
    else:
        support = grid.support if grid is not None else None
        if grid is not None:
            num_frames = grid.num_frames
            num_bins = num_bins or grid.num_bins()
    theta_max = config.theta_max or support
    if theta_max is None:
        raise ValueError("theta_max is required when no grid is given")
    lo, hi = config.theta_min, float(theta_max)
    shape = {Mode.CONSTANT: (1, 1), Mode.PER_FRAME: (num_frames, 1),
             Mode.PER_FRAME_PER_FREQ: (num_frames, num_bins)}[mode]
    grad_tol = config.grad_tol

    values = np.clip(_initial_values(config, mode, shape, hi), lo, hi)
    theta = ThetaField(mode, values, lo, hi)
    m1 = np.zeros(shape)
    m2 = np.zeros(shape)
    history = []
    best_theta, best_loss = theta, np.inf
    converged = False
    prev_loss = None

    for it in range(int(config.max_iters)):
        report = objective(theta)
        history.append((it, report.total, report.entropy, report.regularization, report.grad_norm))
        if not np.isfinite(report.total):
            trace = OptimTrace(history, theta, False, it + 1, best_theta, best_loss, report)
            raise NumericalFailure(f"non-finite loss at iteration {it}", trace)
        if report.total < best_loss:
            best_theta, best_loss = theta, report.total
        if prev_loss is not None and report.total > prev_loss:
            log.debug("loss increased at iteration %d: %.6g -> %.6g", it, prev_loss, report.total)
        if callback is not None:
            callback(it, report, theta)
        pg_norm = np.linalg.norm(_projected_grad(theta.values, report.grad_theta, lo, hi))
        if grad_tol is None:
            grad_tol = 1e-6 * pg_norm
        if pg_norm < grad_tol or (prev_loss is not None and abs(prev_loss - report.total) < config.loss_tol):
            converged = True
            break
        prev_loss = report.total

        g = report.grad_theta
        if config.algorithm == "gd":
            step = config.step_size * g
        elif config.algorithm == "momentum":
            m1 = config.momentum * m1 + g
            step = config.step_size * m1
        else:
            t = it + 1
            m1 = config.beta1 * m1 + (1 - config.beta1) * g
            m2 = config.beta2 * m2 + (1 - config.beta2) * g * g
            mhat = m1 / (1 - config.beta1**t)
            vhat = m2 / (1 - config.beta2**t)
            step = config.step_size * mhat / (np.sqrt(vhat) + config.adam_eps)
        theta = theta.with_values(np.clip(theta.values - step, lo, hi))

    final = objective(theta)
    if not np.isfinite(final.total):
        trace = OptimTrace(history, theta, False, len(history), best_theta, best_loss, final)
        raise NumericalFailure("non-finite loss at the final iterate", trace)
    if final.total < best_loss:
        best_theta, best_loss = theta, final.total
    return OptimTrace(history, theta, converged, len(history), best_theta, best_loss, final)


def grid_search(signal: Signal, grid: FrameGrid, kind=WindowKind.HANN, theta_grid=(),
                criterion: Criterion = entropy, power: bool = False,
                theta_min: float = THETA_MIN) -> tuple[float, np.ndarray]:
    """Criterion value at each constant window length.

    Returns ``(best_theta, table)`` where ``table`` has columns
    ``(theta, loss)`` in the order given; ties go to the smallest theta.
    """
    thetas = [float(t) for t in theta_grid]
    if not thetas:
        raise ValueError("theta grid is empty")
    objective = Objective(signal, grid, kind, criterion=criterion, power=power)
    table = np.array([(t, objective.value(ThetaField.constant(t, grid.support, min(theta_min, t))))
                      for t in thetas])
    best = min(range(len(thetas)), key=lambda n: (table[n, 1], table[n, 0]))
    return float(table[best, 0]), table
