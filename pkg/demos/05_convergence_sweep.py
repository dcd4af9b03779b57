# %% [markdown]
# # Convergence in eps
#
# The same noise streams are reused for every eps, which removes most of the
# sampling noise from the comparison between rows. Exit points concentrate on
# q± as eps decreases.

# %%
import numpy as np

from saddle_exit import (Ball, ExitLawParams, LimitLaw, boundary_hits, convergence_sweep,
                         h_constants, registry_model, sigma_via_adjoint, spectral_data)
from saddle_exit.mc import sweep_to_csv

m = registry_model("linear-saddle", Ball(1.0, dim=2))
s = spectral_data(m)
curve = boundary_hits(m, s)
hc = h_constants(m, s, curve)
law = LimitLaw(ExitLawParams(curve.q_plus, curve.q_minus, hc.h_plus, hc.h_minus,
                             sigma_via_adjoint(m, s), s.lam))
rows, reports = convergence_sweep(m, s, law, np.zeros(2), [1e-1, 1e-2, 1e-3, 1e-4],
                                  n=1000, seed=3)
print(sweep_to_csv(rows))
print([r.mean_exit_distance for r in reports])
