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

# # Variance and volatility swaps
#
# Fair strikes against maturity for an OU signature model, compared with
# Monte Carlo of the realised variance.

# + tags=["parameters"]
maturities = (0.1, 0.25, 0.5, 1.0)
n_paths = 50_000
# -

import numpy as np

from sigvol.fourier import qvol_swap_strike, variance_swap_strike
from sigvol.models import stein_stein_spec
from sigvol.montecarlo import mc_prices_extrapolated, qvol_payoff

spec = stein_stein_spec(1.0, 0.25, 1.2, -0.7, 4)
for T in maturities:
    var_k = variance_swap_strike(spec, T)
    vol_k = qvol_swap_strike(spec, T, 0.5)
    mc = mc_prices_extrapolated(spec, T, 100, n_paths, {1: qvol_payoff(1.0), 0.5: qvol_payoff(0.5)})
    print(f"T={T:5.2f}  var {var_k:.4f} (MC {mc[1][0]:.4f} +- {mc[1][1]:.4f})  "
          f"vol {vol_k:.4f} (MC {mc[0.5][0]:.4f} +- {mc[0.5][1]:.4f})")
