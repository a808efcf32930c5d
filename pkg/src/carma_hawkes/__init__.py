"""Option pricing and simulation for compound CARMA(p,q)-Hawkes jump-diffusions."""
from .black_scholes import bs_price, implied_vol
from .charfn import RiskNeutralModel, cf_logprice, forward_price, solve_ode_P, solve_ode_Q
from .fourier import FourierPricer, PricingRequest, call_price, price_surface, put_price
from .jump_models import NormalJump, ShiftedGammaJump, esscher_transform, solve_theta_star
from .model_core import CarmaHawkesParams, kernel, validate
from .quadrature import gauss_laguerre
from .simulation import mc_price, simulate_arrivals, simulate_terminal
from .toy_model import counting_pmf, toy_call_price, toy_call_price_with_diffusion

__version__ = "0.1.0"

__all__ = [
    "CarmaHawkesParams",
    "FourierPricer",
    "NormalJump",
    "PricingRequest",
    "RiskNeutralModel",
    "ShiftedGammaJump",
    "bs_price",
    "call_price",
    "cf_logprice",
    "counting_pmf",
    "esscher_transform",
    "forward_price",
    "gauss_laguerre",
    "implied_vol",
    "kernel",
    "mc_price",
    "price_surface",
    "put_price",
    "simulate_arrivals",
    "simulate_terminal",
    "solve_ode_P",
    "solve_ode_Q",
    "solve_theta_star",
    "toy_call_price",
    "toy_call_price_with_diffusion",
    "validate",
]
