# %% [markdown]
# # Purcell decay: Bloch-Redfield against Lindblad
#
# An excited transmon decays through the readout cavity. Lindblad theory
# weighs both quadratures of the cavity field equally. Bloch-Redfield
# samples the bath at the qubit frequency, so its rate exceeds the Lindblad
# rate by an approximately constant factor (about 1.37 at these parameters).

# %%
from masterlab import analysis as an
from masterlab import environment as env
from masterlab import model as mdl

p = mdl.SystemParams.reference(kappa_ghz=0.1, n_trunc=10)
J = env.flat(p.kappa)
print(f"analytic BR rate     {an.purcell_rate_analytic(p, J) / p.kappa:.6f} kappa")
print(f"analytic BR/Lindblad {an.br_lindblad_ratio(p):.4f}")

# %% [markdown]
# Fit the decay of <sigma_z> from the dressed |e,0> state for both master
# equations. The Lindblad comparison uses the downward rate gamma (1 - p_inf),
# which removes the small spurious heating of the Rabi-model Lindblad form.

# %%
rates = {}
for kind in ("redfield-static", "lindblad"):
    eq = an.build_equation(p, kind, J if kind != "lindblad" else None)
    meas = an.measure_decay(eq, p)
    rates[kind] = an.downward_rate(meas, eq, p)
    print(f"{kind:16s} fitted {meas.gamma / p.kappa:.6f} kappa, downward {rates[kind] / p.kappa:.6f} kappa")
print(f"fitted ratio {rates['redfield-static'] / rates['lindblad']:.4f}")
