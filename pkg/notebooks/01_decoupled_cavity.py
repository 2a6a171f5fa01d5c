# %% [markdown]
# # A damped cavity three ways
#
# With the qubit switched off (g = 0), the cavity is a damped harmonic
# oscillator. Lindblad theory gives the textbook answer, and non-secular
# Bloch-Redfield with a flat spectrum J = kappa reproduces it. The full
# secular approximation drops the drive-induced coherences and fails badly.

# %%
import math

import numpy as np

from masterlab import environment as env
from masterlab import experiments as ex

TWO_PI = 2 * math.pi
kappa, eps = TWO_PI * 0.5, TWO_PI * 0.25
bench = ex.CavityBench(omega_r=TWO_PI * 7.5, kappa=kappa, eps=eps, N=10, density=env.flat(kappa))
print(f"steady-state photon number 4 eps^2/kappa^2 = {bench.analytic_nbar:.3f}")

# %% [markdown]
# Integrate from the vacuum for 10/kappa and average the photon number over
# the final drive period.

# %%
times = np.linspace(0, 10 / kappa, 2001)
T = TWO_PI / bench.drive_frequency
tail = times >= times[-1] - T
for method in ex.BENCH_METHODS:
    n = bench.run(method, times)["photon_number"]
    print(f"{method:24s} n(t_final) = {np.mean(n[tail]):.4f}")

# %% [markdown]
# The build-up follows |alpha(t)|^2 = nbar (1 - exp(-kappa t / 2))^2 for the
# Lindblad and non-secular curves. The full-secular curve settles far below
# that value.
