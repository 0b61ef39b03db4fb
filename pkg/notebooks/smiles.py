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

# # Fourier smiles of signature volatility models
#
# Stein-Stein and Heston against their explicit transforms, then the
# Hull-White and random LER specs against Monte Carlo.

# + tags=["parameters"]
maturities = {"1w": 7 / 365, "1m": 1 / 12, "3m": 0.25, "6m": 0.5, "1y": 1.0}
mc_paths = 100_000
# -

import numpy as np
import matplotlib.pyplot as plt

from sigvol.cli import resolve_model_path
from sigvol.explicit import heston_charfun
from sigvol.fourier import PricingRequest, choose_sigma_bs, gauss_laguerre, implied_vol, lewis_price, smile
from sigvol.models import heston_spec, load_model_config, spec_from_config, stein_stein_spec
from sigvol.montecarlo import mc_prices_extrapolated, vanilla_payoff

# +
K = np.linspace(0.8, 1.2, 21)
ss = stein_stein_spec(1.0, 0.25, 1.2, -0.5, 4)
fig, ax = plt.subplots()
for name, T in maturities.items():
    ax.plot(K, smile(ss, T, K), label=name)
ax.set_xlabel("strike")
ax.set_ylabel("implied vol")
ax.set_title("Stein-Stein, M=4")
ax.legend()
# -

# Heston through the square-root representation, Feller condition violated.

# +
kappa, theta, eta, rho = 2.0, 0.0625, 0.7, -0.7
hs = heston_spec(kappa, theta, eta, rho, 4)
rule = gauss_laguerre(64)
for name, T in maturities.items():
    sbs = choose_sigma_bs(hs, T)
    iv = smile(hs, T, K, sigma_bs=sbs)
    phi = heston_charfun(rule.nodes - 0.5j, T, kappa, theta, eta, rho)
    ref = implied_vol(lewis_price(None, PricingRequest(K, T, sigma_bs=sbs), rule, phi=phi), 1.0, K, T, errors="nan")
    print(f"{name}: max |IV - Heston| = {np.nanmax(np.abs(iv - ref)):.2e}")
# -

# Non-affine specs: Fourier prices against Richardson-extrapolated Monte Carlo.

# +
for model in ("hull_white", "ler"):
    spec = spec_from_config(load_model_config(resolve_model_path(model)))
    for name, T in maturities.items():
        Ks = np.exp(np.linspace(-2, 2, 9) * 0.25 * np.sqrt(T))
        pay = {k: vanilla_payoff(k, "put" if k < 1 else "call") for k in Ks}
        mc = mc_prices_extrapolated(spec, T, 32, mc_paths, pay, seed=1)
        _, res = smile(spec, T, Ks, return_prices=True)
        price = np.where(Ks < 1, res.price - (1 - Ks), res.price)
        z = [(p - mc[k][0]) / mc[k][1] for p, k in zip(price, Ks)]
        print(model, name, np.round(z, 2))
