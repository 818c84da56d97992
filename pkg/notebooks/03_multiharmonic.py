# %% [markdown]
# # Fast frequency changes
#
# A four-harmonic signal holds 50 Hz, runs up to 80 Hz within 0.3 s and
# drifts back down.  During the run-up a long window smears every harmonic
# ridge; the per-frame optimiser shortens the window there.

# %%
import numpy as np

from dastft import OptimConfig, optimize, tv_neighborhood
from dastft.cli import ExperimentConfig, load_config_dict

cfg = ExperimentConfig.from_dict(load_config_dict("fig5"))
signal = cfg.load_signal()
grid = cfg.grid_for(signal)
times = (grid.starts + (grid.support - 1) / 2) / signal.sample_rate

nb = tv_neighborhood((grid.num_frames, 1))
trace = optimize(signal, grid, "time", nb=nb, lam=cfg.lam,
                 config=OptimConfig(step_size=2.0, max_iters=300))
theta = trace.best_theta.values[:, 0]

# %%
runup = (times >= 1.5) & (times <= 1.8)
held = (times >= 0.3) & (times <= 1.2)
print(f"loss {trace.best_loss:.4f} after {trace.iterations_used} iterations")
print(f"median theta while held: {np.median(theta[held]):.0f}, during the run-up: {np.median(theta[runup]):.0f}")
