# %% [markdown]
# # Unstable curve, exit points and time shifts
#
# The deterministic flow started on the unstable curve leaves G at q+ and q-.
# The time shift h± compares the time to reach the boundary from
# gamma(±delta) with ln(1/delta)/lam, extrapolated to delta -> 0.

# %%
import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from saddle_exit import Ball, boundary_hits, h_constants, registry_model, spectral_data
from saddle_exit.models import cubic_manifold_height

R = 0.5
m = registry_model("cubic-saddle", Ball(R, dim=2))
s = spectral_data(m)
curve = boundary_hits(m, s)
hc = h_constants(m, s, curve)
print("q+ =", curve.q_plus, " q- =", curve.q_minus)
print("h+ =", hc.h_plus, "+/-", hc.h_plus_error)

# %% [markdown]
# The Richardson table shows the raw values a(delta) settling linearly in delta.

# %%
for d, a in hc.raw_table["plus"]:
    print(f"delta={d:.3e}  a={a:.10f}")

# %% [markdown]
# Independent check: along the curve x' = x - x^3, so the hitting time from
# x=delta is an explicit integral. Subtracting ln(1/delta) and letting delta
# go to 0 gives ln x* + int_0^x* x/(1-x^2) dx, where x* solves
# x^2 + y(x)^2 = R^2 on the curve.

# %%
xs = brentq(lambda x: x**2 + cubic_manifold_height(x) ** 2 - R**2, 1e-6, R)
h_ref = np.log(xs) + quad(lambda x: x / (1 - x**2), 0, xs)[0]
print("quadrature h =", h_ref, " difference =", hc.h_plus - h_ref)
