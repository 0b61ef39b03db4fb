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

# # OU representation error
#
# Mean squared error of the truncated exact representation and of the
# regression fitted on one year, with shared Brownian paths.

# + tags=["parameters"]
n_paths = 20_000
orders = (2, 4, 6)
horizons = (0.25, 0.5, 1.0, 2.0)
# -

from sigvol.models import OUParams
from sigvol.montecarlo import representation_mse

tab = representation_mse(OUParams(4.0, 0.25, 2.0), orders=orders, horizons=horizons,
                         n_paths=n_paths, beta1=0.0, beta2=0.0)

# +
print("M   " + "  ".join(f"{h:>9g}" for h in horizons))
for M in orders:
    print(f"{M} exact " + "  ".join(f"{v:9.3e}" for v in tab["exact"][M]))
    print(f"{M} regr  " + "  ".join(f"{v:9.3e}" for v in tab["regression"][M]))
