import math

import numpy as np
import pytest
from scipy import special

from carma_hawkes.quadrature import closed_form_weights, gauss_laguerre, laguerre_eval


def test_small_rules():
    r1 = gauss_laguerre(1)
    assert r1.nodes[0] == pytest.approx(1.0) and r1.weights[0] == pytest.approx(1.0)
    r2 = gauss_laguerre(2)
    np.testing.assert_allclose(r2.nodes, [2 - math.sqrt(2), 2 + math.sqrt(2)], rtol=1e-14)
    np.testing.assert_allclose(r2.weights, [(2 + math.sqrt(2)) / 4, (2 - math.sqrt(2)) / 4], rtol=1e-14)


def test_laguerre_eval():
    assert laguerre_eval(0, 3.7) == 1.0
    assert laguerre_eval(1, 1.0) == 0.0
    assert abs(laguerre_eval(2, 2 + math.sqrt(2))) < 1e-12
    x = np.linspace(0, 30, 13)
    np.testing.assert_allclose(laguerre_eval(7, x), special.eval_laguerre(7, x), rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        laguerre_eval(-1, 0.0)


@pytest.mark.parametrize("m", [2, 4, 8, 32])
def test_moment_exactness(m):
    rule = gauss_laguerre(m)
    for j in range(2 * m):
        # sum w u^j in log space to avoid overflow of u^j
        with np.errstate(divide="ignore"):
            val = np.exp(special.logsumexp(rule.log_weights + j * np.log(rule.nodes)) - special.gammaln(j + 1))
        assert val == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("m", [5, 20, 64])
def test_matches_scipy_and_closed_form(m):
    rule = gauss_laguerre(m)
    x, w = special.roots_laguerre(m)
    np.testing.assert_allclose(rule.nodes, x, rtol=1e-12)
    big = w > 1e-250
    np.testing.assert_allclose(rule.weights[big], w[big], rtol=1e-9)
    np.testing.assert_allclose(closed_form_weights(m), rule.weights, rtol=1e-10, atol=0)


@pytest.mark.parametrize("m", [450, 900, 2000])
def test_large_orders_are_sane(m):
    rule = gauss_laguerre(m)
    assert np.all(np.diff(rule.nodes) > 0) and rule.nodes[0] > 0
    assert np.all(np.isfinite(rule.log_weights))
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(rule.log_scaled, rule.log_weights + rule.nodes)
    assert rule.integrate(lambda u: u) == pytest.approx(1.0, rel=1e-12)


def test_order_bounds():
    for bad in (0, -3, 2001):
        with pytest.raises(ValueError):
            gauss_laguerre(bad)


def test_rule_is_cached():
    assert gauss_laguerre(450) is gauss_laguerre(450)
