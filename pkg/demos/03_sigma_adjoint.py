# %% [markdown]
# # Gaussian scale sigma from one adjoint sweep
#
# The limit exit time carries a centered Gaussian N with variance sigma^2.
# sigma is computed by integrating the adjoint equation backward along the
# orbit of x0; no Monte Carlo is involved.

# %%
import numpy as np

from saddle_exit import (Ball, linear_model, registry_model, sigma_at_origin,
                         sigma_via_adjoint, spectral_data)

m = registry_model("linear-saddle", Ball(1.0, dim=2), {"lam": 2.0, "mu": 1.0})
s = spectral_data(m)
print("adjoint:", sigma_via_adjoint(m, s), " closed form:", sigma_at_origin(s))

# %% [markdown]
# Non-normal A: the closed form is |ell|/sqrt(2 lam), here sqrt(0.625).

# %%
A = np.array([[1.0, 1.0], [0.0, -1.0]])
m2 = linear_model(A, Ball(1.0, dim=2))
s2 = spectral_data(m2)
print(sigma_via_adjoint(m2, s2) ** 2, sigma_at_origin(s2) ** 2)

# %% [markdown]
# Off the fixed point the Jacobian varies along the orbit. For
# b = (x + x y, -y) started at (0, y0) the answer is explicit:
# sigma^2 = e^{2 y0} (1/(2 y0) - 1/(4 y0^2)) + 1/(4 y0^2).

# %%
from saddle_exit.models import PolynomialField, build_model

field = PolynomialField.from_table({"dim": 2, "components": [
    [{"coef": 1.0, "powers": [1, 0]}, {"coef": 1.0, "powers": [1, 1]}],
    [{"coef": -1.0, "powers": [0, 1]}]]})
m3 = build_model(field, Ball(2.0, dim=2))
s3 = spectral_data(m3)
for y0 in (0.25, 0.5, 1.0):
    exact = np.exp(2 * y0) * (1 / (2 * y0) - 1 / (4 * y0**2)) + 1 / (4 * y0**2)
    print(y0, sigma_via_adjoint(m3, s3, [0.0, y0]) ** 2, exact)
