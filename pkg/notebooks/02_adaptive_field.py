# %% [markdown]
# # Letting the window length vary
#
# Minimising the spectrogram entropy over one window length per frame, then
# one per (frame, bin), on a 4 s version of the illustrative signal.
# A single length per frame has to serve the burst and the tones at once,
# so it barely shortens at the burst.  Per-bin adaptation resolves the
# conflict: short on the burst, long on the tones in the same frames.

# %%
from pathlib import Path

import numpy as np

from dastft import AdaptiveSTFT, Objective, OptimConfig, export, grid_search, optimize, tv_neighborhood
from dastft.cli import ExperimentConfig, load_config_dict
from dastft.signal_model import bin_labels

out = Path("out/notebooks/adaptive")
out.mkdir(parents=True, exist_ok=True)

cfg = ExperimentConfig.from_dict(load_config_dict("illustrative_desk"))
signal = cfg.load_signal()
grid = cfg.grid_for(signal)
plan = AdaptiveSTFT(signal, grid)
labels = bin_labels(cfg.synth, grid, plan.num_bins)

best, table = grid_search(signal, grid, theta_grid=cfg.theta_grid)
print("constant windows:", {int(t): round(float(v), 4) for t, v in table})

# %% [markdown]
# Per-frame field with a total-variation penalty between neighbouring frames.

# %%
nb = tv_neighborhood((grid.num_frames, 1))
frame = optimize(signal, grid, "time", nb=nb, lam=1e-5, config=OptimConfig(step_size=2.0, max_iters=300))
burst_frames = labels["transient"].any(axis=1)
print(f"per frame: loss {frame.best_loss:.4f}, theta near burst "
      f"{frame.best_theta.values[burst_frames, 0].round(1)}, median elsewhere "
      f"{np.median(frame.best_theta.values[~burst_frames]):.0f}")

# %% [markdown]
# Full time-frequency field.  This takes about 20 s.

# %%
nb = tv_neighborhood((grid.num_frames, plan.num_bins))
objective = Objective(plan, grid, nb=nb, lam=cfg.lam)
tf = optimize(None, grid, "tf", config=cfg.optimizer, objective=objective, num_bins=plan.num_bins)
theta = tf.best_theta.values
print(f"per bin: loss {tf.best_loss:.4f}; median theta on the burst "
      f"{np.median(theta[labels['transient']]):.1f}, on the tones {np.median(theta[labels['stationary']]):.1f}")
export.write_pgm(export.theta_image(theta, 4, grid.support), out / "theta.pgm")
export.write_pgm(export.log_magnitude_image(plan.forward(tf.best_theta).magnitude()), out / "spectrogram.pgm")
