"""Differentiable adaptive short-time Fourier transform.

The window length is a continuous parameter that may vary per frame and per
frequency bin; it is tuned by gradient descent on the entropy of the
magnitude spectrogram, optionally with a (non-local) total-variation penalty.
"""

from .adaptation import (LossReport, Neighborhood, Objective, entropy, loss_and_grad, nonlocal_weights,
                         regularizer, tv_neighborhood)
from .optimizer import OptimConfig, OptimTrace, grid_search, optimize
from .signal_model import (Component, Signal, SynthSpec, default_spec, gen_illustrative, gen_multiharmonic,
                           load_csv, save_csv)
from .stft_core import (AdaptiveSTFT, FrameGrid, Mode, Spectrogram, ThetaField, forward, magnitude,
                        reference_stft, tangent)
from .window import THETA_MIN, WindowKind, WindowParams, window_eval, window_grad

__version__ = "0.1.0"
