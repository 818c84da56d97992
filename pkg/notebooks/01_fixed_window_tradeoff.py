# %% [markdown]
# # One window length cannot serve every component
#
# The illustrative signal has a chirp that holds 100 Hz for four seconds,
# a tone 6 Hz above it and a 20 ms burst at 300 Hz.  A short window pins the
# burst to a single frame but merges the two tones; a long one separates the
# tones and smears the burst.

# %%
from pathlib import Path

import numpy as np

from dastft import AdaptiveSTFT, ThetaField, export
from dastft.cli import ExperimentConfig, load_config_dict

out = Path("out/notebooks/tradeoff")
out.mkdir(parents=True, exist_ok=True)

cfg = ExperimentConfig.from_dict(load_config_dict("fig1"))
signal = cfg.load_signal()
grid = cfg.grid_for(signal)
plan = AdaptiveSTFT(signal, grid, cfg.window)
freqs = np.arange(plan.num_bins) * signal.sample_rate / grid.support
print(f"{len(signal)} samples, {grid.num_frames} frames, {plan.num_bins} bins")

# %% [markdown]
# Evaluate both fixed windows and look at the band around the tones
# (averaged over the first second) and the burst's band over time.

# %%
for theta in (100, 1000):
    mag = plan.forward(ThetaField.constant(theta, grid.support)).magnitude()
    export.write_pgm(export.log_magnitude_image(mag), out / f"theta{theta}.pgm")
    band = (freqs >= 90) & (freqs <= 120)
    profile = mag[5:25, band].mean(axis=0)
    burst = mag[:, (freqs >= 250) & (freqs <= 350)].max(axis=1)
    wide = np.sum(burst >= 0.5 * burst.max())
    print(f"theta={theta:4d}: tone profile peaks at "
          f"{freqs[band][np.argmax(profile)]:.0f} Hz, burst above half-max in {wide} frames")

# %% [markdown]
# The graymaps in `out/notebooks/tradeoff` show the same picture: low
# frequencies at the bottom, time left to right.
