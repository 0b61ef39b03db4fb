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

# # Calibration round trip
#
# Generate a synthetic surface from a known order-2 spec and recover it slice
# by slice.

# + tags=["parameters"]
days = (7, 35)
generations = 30
# -

import numpy as np

from sigvol.calibration import CalibrationConfig, calibrate_slice, synthetic_slices
from sigvol.models import VolatilitySpec
from sigvol.tensor_algebra import TensorElement

# +
truth = VolatilitySpec(TensorElement.from_words({"e": 0.2, "2": 0.4, "21": -0.4}, 2), -0.6, 2, "synthetic")
slices = [synthetic_slices(truth, [d], np.exp(np.linspace(-2, 2, 20) * 0.2 * np.sqrt(d / 365)))[0] for d in days]
cfg = CalibrationConfig(M=2, sigma0=0.2, generations=generations, stagnation=20, seed=0, J=25)
# -

for sl in slices:
    res = calibrate_slice(sl, cfg)
    print(f"{sl.maturity_days:g} days: RMSE {res.rmse:.2e}, rho {res.rho:+.3f}")
    print("  ", {w: round(float(v.real), 4) for w, v in res.spec.sigma.values[0].items()})
