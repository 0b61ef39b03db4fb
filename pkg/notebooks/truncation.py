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

# # Truncation order and quadrature
#
# ATM 6m put under an OU signature model; pricing error against a reference
# at high order and 128 nodes, with and without the Black-Scholes control variate.

# + tags=["parameters"]
M = 3
T = 0.5
nodes = (4, 8, 16, 32, 64, 128)
# -

import numpy as np
import matplotlib.pyplot as plt
import warnings

from sigvol.fourier import PricingRequest, choose_sigma_bs, lewis_price, solve_for_pricing
from sigvol.models import stein_stein_spec

# +
spec = stein_stein_spec(2.0, 0.25, 0.6, -0.7, M)
req = PricingRequest(1.0, T, "european_put", sigma_bs=choose_sigma_bs(spec, T))
price = {}
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    for Mt in range(M, 2 * M + 3):
        for L in nodes:
            sol, rule = solve_for_pricing(spec, T, "european", L, 100, Mt)
            price[Mt, L, True] = lewis_price(sol, req, rule)
            price[Mt, L, False] = lewis_price(sol, req, rule, control_variate=False)
ref = price[2 * M + 2, nodes[-1], True]
# -

fig, ax = plt.subplots()
for Mt in range(M, 2 * M + 3):
    for cv, style in ((True, "-"), (False, "--")):
        err = [max(abs(price[Mt, L, cv] - ref), 1e-17) for L in nodes]
        ax.semilogy(nodes, err, style, label=f"M~={Mt}" if cv else None)
ax.set_xlabel("Gauss-Laguerre nodes")
ax.set_ylabel("|price error|")
ax.legend()
