# %% [markdown]
# # Monte Carlo exit law against the limit
#
# Simulate dX = b(X) dt + eps dW from the saddle and compare the centered
# exit time tau - ln(1/eps)/lam, split by exit side, with the limit law.

# %%
import numpy as np

from saddle_exit import (Ball, ExitLawParams, LimitLaw, boundary_hits, compare_to_limit,
                         h_constants, registry_model, run_batch, sigma_via_adjoint,
                         spectral_data)

m = registry_model("cubic-saddle", Ball(0.5, dim=2))
s = spectral_data(m)
curve = boundary_hits(m, s)
hc = h_constants(m, s, curve)
law = LimitLaw(ExitLawParams(curve.q_plus, curve.q_minus, hc.h_plus, hc.h_minus,
                             sigma_via_adjoint(m, s), s.lam))

samples = run_batch(m, s, law, np.zeros(2), eps=1e-4, n=2000, seed=11)
rep = compare_to_limit(samples, law)
print(f"side fraction + : {rep.side_fraction_plus:.3f}")
print(f"KS + : {rep.ks_plus:.4f}  (99% band {rep.ks_band_plus:.4f})")
print(f"KS - : {rep.ks_minus:.4f}  (99% band {rep.ks_band_minus:.4f})")

# %% [markdown]
# Empirical and limiting quantiles of the centered time, both sides pooled.

# %%
for p, q in rep.theory_quantiles.items():
    print(p, round(rep.quantiles[p], 4), round(q, 4))
