# %% [markdown]
# # Spectral data at a saddle
#
# Everything starts from the Jacobian A at the fixed point. We need a simple
# real leading eigenvalue lam > 0, its eigenvector v, and the functional ell
# that picks the v-coordinate along the complementary invariant subspace L.

# %%
import numpy as np

from saddle_exit import Ball, linear_model, registry_model, spectral_data

m = registry_model("cubic-saddle", Ball(0.5, dim=2))
s = spectral_data(m)
print("lam =", s.lam, " v =", s.v, " ell =", s.ell, " gap =", s.gap)

# %% [markdown]
# For a non-normal matrix, v is not orthogonal to L and |ell| grows above 1.
# This matters later because the Gaussian scale at the origin is |ell|/sqrt(2 lam).

# %%
A = np.array([[1.0, 1.0], [0.0, -1.0]])
s2 = spectral_data(linear_model(A, Ball(1.0, dim=2)))
print("v =", s2.v, " ell =", s2.ell, " |ell| =", np.linalg.norm(s2.ell))
print("ell . v =", s2.ell @ s2.v)

# %% [markdown]
# A complex leading pair is rejected with a typed error.

# %%
from saddle_exit.errors import SaddleExitError

try:
    spectral_data(np.array([[1.0, -2.0], [2.0, 1.0]]))
except SaddleExitError as exc:
    print(type(exc).__name__, "->", exc)
