# %% [markdown]
# # Grid search against gradient descent
#
# With a single window length the entropy can simply be tabulated.  The
# gradient lets the same criterion drive a field with thousands of entries
# at the cost of a few hundred evaluations.

# %%
import time

from dastft import OptimConfig, grid_search, optimize
from dastft.cli import ExperimentConfig, load_config_dict

cfg = ExperimentConfig.from_dict(load_config_dict("illustrative_desk"))
signal = cfg.load_signal()
grid = cfg.grid_for(signal)

t0 = time.perf_counter()
best, table = grid_search(signal, grid, theta_grid=range(8, 257, 8))
print(f"grid over {len(table)} lengths: best theta={best:g}, loss {table[:, 1].min():.4f}, "
      f"{time.perf_counter() - t0:.2f} s")

# %% [markdown]
# The entropy is not convex in theta: there is a shallow local minimum near
# 205 next to the global one at the full support.  Descent from a short
# start settles in the first; the default start (half the support) reaches
# the second.

# %%
for init, step in ((64.0, 4.0), ("auto", 8.0)):
    t0 = time.perf_counter()
    trace = optimize(signal, grid, "constant", config=OptimConfig(step_size=step, max_iters=300, theta_init=init))
    print(f"descent from {init}: theta={trace.best_theta.values[0, 0]:.1f}, loss {trace.best_loss:.4f}, "
          f"{trace.iterations_used} iterations, {time.perf_counter() - t0:.2f} s")
