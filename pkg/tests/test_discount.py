"""Discount-curve unit tests.

Expected values are computed inside each test from the defining formulas
(direct arithmetic, plain-Python summation), independently of the library's
vectorized implementations.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mfstop.discount import (
    DiscountSpec,
    RegularizedDiscount,
    lambda_tail_mass,
    shannon_entropy,
    truncation_horizon,
)

QH = DiscountSpec.quasi_hyperbolic(k_amp=1.8, beta=0.5)


# ---------------------------------------------------------------------------
# plain weights
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("k, expected", [(0, 1.0), (1, 0.9), (3, 0.225)])
def test_quasi_hyperbolic_weight(k, expected):
    assert_allclose(QH.weight(k), expected, rtol=1e-14)


def test_general_sequence_extends_by_zero():
    spec = DiscountSpec.from_weights([1.0, 0.7, 0.7, 0.2])
    assert spec.weight(3) == 0.2
    assert spec.weight(4) == 0.0
    assert spec.weight(100) == 0.0


@pytest.mark.parametrize("bad", [
    dict(k_amp=2.5, beta=0.5),   # K*beta >= 1
    dict(k_amp=1.8, beta=1.0),
    dict(k_amp=-1.0, beta=0.5),
])
def test_invalid_quasi_hyperbolic_rejected(bad):
    with pytest.raises(ValueError):
        DiscountSpec.quasi_hyperbolic(**bad)


def test_non_monotone_sequence_rejected():
    with pytest.raises(ValueError):
        DiscountSpec.from_weights([1.0, 0.5, 0.6])
    with pytest.raises(ValueError):
        DiscountSpec.from_weights([0.9, 0.5])


# ---------------------------------------------------------------------------
# regularized weights
# ---------------------------------------------------------------------------

def test_regularized_weight_values():
    rd = RegularizedDiscount(QH, lam=0.1)
    assert rd.weight(0) == 1.0
    assert_allclose(rd.weight(1), 0.9 / 1.1, rtol=1e-14)
    assert_allclose(rd.weight(2), 0.45 * (1.0 / 1.1) ** 4, rtol=1e-14)


def test_regularized_weight_array_matches_scalar():
    rd = RegularizedDiscount(QH, lam=0.3)
    arr = rd.weight_array(10, shift=1)
    assert_allclose(arr, [rd.weight(k) for k in range(1, 12)], rtol=1e-13)


def test_regularized_below_base_and_monotone_in_lam():
    for lam in (1.0, 0.1, 0.01):
        rd = RegularizedDiscount(QH, lam=lam)
        for k in range(0, 12):
            assert rd.weight(k) <= QH.weight(k) + 1e-15
    # pointwise nondecreasing as lam decreases toward 0
    for k in range(0, 12):
        w = [RegularizedDiscount(QH, lam=lam).weight(k) for lam in (1.0, 0.1, 0.01)]
        assert w[0] <= w[1] <= w[2] <= QH.weight(k) + 1e-15


def test_lam_above_one_warns():
    with pytest.warns(UserWarning):
        RegularizedDiscount(QH, lam=1.5)


def test_nonpositive_lam_rejected():
    with pytest.raises(ValueError):
        RegularizedDiscount(QH, lam=0.0)


# ---------------------------------------------------------------------------
# entropy
# ---------------------------------------------------------------------------

def test_entropy_boundaries_and_maximum():
    assert shannon_entropy(0.0) == 0.0
    assert shannon_entropy(1.0) == 0.0
    assert_allclose(shannon_entropy(0.5), math.log(2.0), rtol=1e-14)


def test_entropy_direct_evaluation():
    expected = -0.2 * math.log(0.2) - 0.8 * math.log(0.8)
    assert_allclose(shannon_entropy(0.2), expected, rtol=1e-13)
    assert_allclose(shannon_entropy(0.2), 0.500402, atol=5e-7)


def test_entropy_symmetric_on_grid():
    grid = np.linspace(0.0, 1.0, 101)
    assert_allclose(shannon_entropy(grid), shannon_entropy(1.0 - grid), atol=1e-14)
    assert np.all(shannon_entropy(grid) <= math.log(2.0) + 1e-15)


def test_entropy_domain_error():
    with pytest.raises(ValueError):
        shannon_entropy(-0.01)
    with pytest.raises(ValueError):
        shannon_entropy(1.01)


# ---------------------------------------------------------------------------
# tail mass of the super-geometric damping
# ---------------------------------------------------------------------------

def _direct_mass(lam, tol=1e-12):
    q = 1.0 / (1.0 + lam)
    total, k = 0.0, 0
    while True:
        t = q ** (k * k)
        if t < tol and k > 0:
            return lam * total
        total += t
        k += 1


def test_tail_mass_lambda_one_bound():
    mass, bound = lambda_tail_mass(1.0, tol=1e-12)
    assert_allclose(bound, 2.0 * math.log(2.0) + 1.0, rtol=1e-14)
    assert mass <= bound


def test_tail_mass_small_lambda():
    mass, bound = lambda_tail_mass(0.01, tol=1e-12)
    assert_allclose(mass, _direct_mass(0.01), rtol=1e-10)
    assert_allclose(mass, 0.094, atol=1e-3)
    assert_allclose(bound, 0.196, atol=1e-3)
    assert mass <= bound


def test_tail_mass_monotone_toward_zero():
    assert lambda_tail_mass(1e-4, 1e-12)[0] < lambda_tail_mass(0.01, 1e-12)[0]


@pytest.mark.parametrize("lam", [1.0, 0.5, 0.1, 0.01, 0.001])
def test_tail_mass_below_bound(lam):
    mass, bound = lambda_tail_mass(lam, tol=1e-12)
    assert mass <= bound


# ---------------------------------------------------------------------------
# truncation horizon
# ---------------------------------------------------------------------------

def _tail_oracle(discount, k_max, per_step, n=4000):
    return per_step * sum(discount.weight(k) for k in range(k_max + 1, n))


def test_truncation_horizon_regularized():
    rd = RegularizedDiscount(QH, lam=0.1)
    k_max = truncation_horizon(rd, reward_bound=1.0, tol=1e-8)
    per_step = 1.0 + 0.1 * math.log(2.0)
    assert k_max <= 25
    assert _tail_oracle(rd, k_max, per_step, n=200) < 1e-8
    if k_max > 0:
        assert _tail_oracle(rd, k_max - 1, per_step, n=200) >= 1e-8


def test_truncation_horizon_infinite_tol():
    rd = RegularizedDiscount(QH, lam=0.1)
    assert truncation_horizon(rd, reward_bound=1.0, tol=math.inf) == 0


def test_truncation_horizon_entropy_only_weighting():
    rd = RegularizedDiscount(QH, lam=1.0)
    k_max = truncation_horizon(rd, reward_bound=0.0, tol=1e-3)
    per_step = 1.0 * math.log(2.0)
    assert _tail_oracle(rd, k_max, per_step, n=200) < 1e-3
    if k_max > 0:
        assert _tail_oracle(rd, k_max - 1, per_step, n=200) >= 1e-3


def test_truncation_horizon_plain_quasi_hyperbolic():
    k_max = truncation_horizon(QH, reward_bound=1.0, tol=1e-8)
    assert _tail_oracle(QH, k_max, 1.0) < 1e-8
    if k_max > 0:
        assert _tail_oracle(QH, k_max - 1, 1.0) >= 1e-8


def test_truncation_horizon_monotone_in_tol():
    rd = RegularizedDiscount(QH, lam=0.1)
    tols = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10]
    ks = [truncation_horizon(rd, 1.0, t) for t in tols]
    assert all(a <= b for a, b in zip(ks, ks[1:]))
