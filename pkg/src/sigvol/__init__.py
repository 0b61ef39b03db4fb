"""Signature volatility models.

Volatility is a linear functional of the time-extended Brownian signature.
The package provides the truncated tensor algebra, signature computation,
Riccati-based characteristic functionals, Fourier pricing of vanilla, Asian
and volatility-swap payoffs, Monte Carlo, quadratic hedging and calibration.
"""
from .tensor_algebra import TensorElement, TimeDependentTensor, Word, shuffle, shuffle_exp, tensor_dim
from .signature import chen_step, expected_signature, initial_signature, signature_of_path
from .models import (
    VolatilitySpec,
    flat_spec,
    heston_spec,
    load_model_config,
    mgbm_spec,
    spec_from_config,
    stein_stein_spec,
)
from .riccati import PayoffTransform, RiccatiBlowUp, RiccatiSolution, solve, solve_many
from .fourier import (
    PricingRequest,
    asian_price,
    bs_price,
    implied_vol,
    lewis_price,
    qvol_swap_strike,
    smile,
    variance_swap_strike,
)
from .montecarlo import mc_price, simulate_sigvol
from .hedging import simulate_hedge
from .calibration import CalibrationConfig, MarketSlice, calibrate_slice, calibrate_surface, load_slices

__version__ = "0.1.0"
