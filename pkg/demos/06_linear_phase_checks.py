# %% [markdown]
# # Linear phase and linearization error
#
# Coupled runs of X and its linearization X~ = S^t x0 + eps Y share one
# noise path. We look at three things:
# the time to reach distance delta against ln(delta/(eps|N|))/lam,
# the transverse part eps Pi_L Y at that time, and
# the gap |X - X~| at the crossing, which should scale like delta^2.

# %%
import numpy as np

from saddle_exit import Ball, gronwall_check, lemma_tests, registry_model, spectral_data

m = registry_model("cubic-saddle", Ball(0.5, dim=2))
s = spectral_data(m)
rep = lemma_tests(m, s, np.zeros(2), eps=1e-4, delta=0.1, n=300, seed=6)
print("mean time gap by eps:", rep.phase_mean_gap)
print("transverse exponent beta:", rep.transverse_beta)
print("p90 |X - X~| by delta:", rep.linearization_p90)
print("halving ratios (expect about 1/4):", rep.linearization_ratios)

# %% [markdown]
# Pathwise bound on the nonlinear remainder over a fixed horizon.

# %%
gr = gronwall_check(m, np.zeros(2), eps=1e-2, h=1e-3, seed=6, n=100)
print("worst ratio to the bound:", gr.worst_ratio, " passed:", gr.passed)
