# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Quadratic hedging
#
# Mean squared hedging error of the signature-model strategy, the explicit
# Stein-Stein hedge and a Black-Scholes delta baseline.

# + tags=["parameters"]
n_paths = 1000
steps = 50
# -

from sigvol.fourier import PricingRequest
from sigvol.hedging import simulate_hedge
from sigvol.models import mgbm_spec, stein_stein_spec

# +
ss = stein_stein_spec(1.0, 0.25, 1.2, -0.6, 4)
for T, K in ((1 / 12, 1.0), (0.5, 1.0)):
    req = PricingRequest(K, T, "european_put")
    for strat in ("sigvol", "explicit_oracle"):
        r = simulate_hedge(ss, req, steps, n_paths, seed=0, strategy=strat)
        print(f"put T={T:.3f} K={K} {strat:16s} J={r.J_hat:.3e} +- {r.J_se:.1e}")
# -

# +
mg = mgbm_spec(1.0, 0.25, 1.2, 0.6, -0.6, 4)
for T, K in ((1 / 12, 1.0), (0.5, 1.0)):
    req = PricingRequest(K, T, "asian_put")
    sig = simulate_hedge(mg, req, steps, n_paths, seed=0, strategy="sigvol")
    bs = simulate_hedge(mg, req, steps, n_paths, seed=0, strategy="bs_delta", bs_sigma=0.25)
    print(f"asian put T={T:.3f} K={K}: sigvol {sig.J_hat:.3e}, BS delta {bs.J_hat:.3e}")
