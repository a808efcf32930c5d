import math

import numpy as np
import pytest
from scipy import stats

from carma_hawkes.black_scholes import bs_price
from carma_hawkes.charfn import RiskNeutralModel
from carma_hawkes.fourier import (FourierPricer, PricingRequest, call_price, cdf_logprice,
                                  price_surface, put_price)
from carma_hawkes.jump_models import NormalJump
from carma_hawkes.model_core import CarmaHawkesParams
from reference_data import MATURITIES, STRIKES, REFERENCE_CALLS

GBM = RiskNeutralModel(CarmaHawkesParams(0.0, (3.0,), (0.0,)), NormalJump(0.0, 0.45, "Q"), 0.2, 0.05, 100.0)


@pytest.fixture(scope="module")
def pricers(ref_models):
    return {f: FourierPricer(m) for f, m in ref_models.items()}


@pytest.mark.parametrize("T", [0.25, 3.5])
def test_gbm_cdf_is_lognormal(T):
    sd = 0.2 * math.sqrt(T)
    mean = math.log(100.0) + (0.05 - 0.02) * T
    x = mean + sd * np.linspace(-4, 4, 41)
    got = cdf_logprice(x, GBM, T)
    np.testing.assert_allclose(got, stats.norm.cdf(x, mean, sd), atol=1e-8)
    assert cdf_logprice(mean, GBM, T) == pytest.approx(0.5, abs=1e-8)


def test_cdf_monotone(pricers):
    x = np.linspace(math.log(40), math.log(250), 100)
    for pricer in pricers.values():
        F = pricer.cdf(x, 1.0)
        assert np.all(np.diff(F) >= -1e-6)
        assert np.all((F >= 0) & (F <= 1))


@pytest.mark.parametrize("family,T,K,want,tol", [
    ("hawkes", 0.25, 100.0, 14.9706, 0.01),
    ("carma21", 1.0, 100.0, 35.0179, 0.01),
    ("carma31", 3.5, 120.0, 60.1071, 0.02),
])
def test_reference_cells(pricers, family, T, K, want, tol):
    assert pricers[family].call(K, T) == pytest.approx(want, abs=tol)


def test_reference_put_by_parity(pricers):
    assert pricers["hawkes"].put(100.0, 0.25) == pytest.approx(14.9706 - 100 + 100 * math.exp(-0.0125), abs=0.01)


def test_parity_identity(pricers):
    K = np.array([70.0, 95.0, 120.0])
    for pricer in pricers.values():
        for T in MATURITIES:
            c, p = pricer.calls(K, T), pricer.puts(K, T)
            np.testing.assert_allclose(c - p, 100.0 - K * math.exp(-0.05 * T), atol=1e-12)


def test_put_bounds_and_small_strike(pricers):
    for pricer in pricers.values():
        K = np.array([1e-6, 1.0, 50.0, 150.0])
        puts = pricer.puts(K, 1.0)
        assert np.all(puts >= 0) and np.all(puts <= K * math.exp(-0.05) + 1e-12)
        # far-tail inversion noise is bounded by the K e^{-r tau} factor
        assert puts[0] < 1e-8


def test_monotone_and_vertical_spread(pricers):
    K = np.arange(70.0, 121.0)
    for pricer in pricers.values():
        for T in MATURITIES:
            c, p = pricer.calls(K, T), pricer.puts(K, T)
            assert np.all(np.diff(c) <= 1e-6) and np.all(np.diff(p) >= -1e-6)
            slope = -np.diff(c) / np.diff(K)
            assert np.all(slope >= -1e-6) and np.all(slope <= math.exp(-0.05 * T) + 1e-6)
            assert np.all(c >= np.maximum(100.0 - K * math.exp(-0.05 * T), 0.0))


def test_quadrature_order_stability(ref_models, pricers):
    for f, model in ref_models.items():
        fine = FourierPricer(model, 900)
        for T in MATURITIES:
            diff = np.abs(pricers[f].calls(STRIKES, T) - fine.calls(STRIKES, T))
            assert diff.max() < 5e-4


def test_reference_call_grid(ref_models):
    for f, model in ref_models.items():
        surf = price_surface(STRIKES, MATURITIES, model)
        want = np.array([REFERENCE_CALLS[T, f] for T in MATURITIES])
        assert np.max(np.abs(surf.calls - want)) < 0.02


def test_gbm_put_matches_black_scholes():
    pricer = FourierPricer(GBM, 1500)
    K = np.arange(70.0, 121.0)
    for T in MATURITIES:
        np.testing.assert_allclose(pricer.puts(K, T), bs_price(100.0, K, 0.05, 0.2, T, False), atol=1e-6)


def test_request_api_and_surface_shapes(ref_models):
    model = ref_models["hawkes"]
    req = PricingRequest(100.0, 0.25, model)
    surf = price_surface([100.0], [0.25], model)
    assert surf.calls.shape == (1, 1)
    assert surf.calls[0, 0] == pytest.approx(call_price(req), abs=1e-12)
    assert surf.puts[0, 0] == pytest.approx(put_price(req), abs=1e-12)
    empty = price_surface([], [0.25, 1.0], model)
    assert empty.calls.shape == (2, 0)


def test_rejections(ref_models):
    pure_jump = RiskNeutralModel(CarmaHawkesParams(3.0, (3.0,), (1.0,)), NormalJump(0.0, 0.45, "Q"), 0.0, 0.05, 100.0)
    with pytest.raises(ValueError, match="sigma"):
        FourierPricer(pure_jump)
    with pytest.raises(ValueError):
        PricingRequest(-1.0, 0.25, ref_models["hawkes"])
    with pytest.raises(ValueError):
        PricingRequest(100.0, 0.0, ref_models["hawkes"])
