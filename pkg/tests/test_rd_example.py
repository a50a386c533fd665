"""Benchmark-example tests.

Threshold and profile oracles are direct formula arithmetic with
(K, beta) = (1.8, 0.5): K*beta = 0.9, so

    a = (1 - 0.9)/(1 - 0.45) = 0.1/0.55 = 2/11,
    b = (1 - 0.5)/(2 - 0.5) = 1/3,
    mixed band exists since 2/((3 - 0.5)*0.5) = 1.6 < 1.8 < 2 = 1/beta,
    ramp(0.25) = (0.5 - 1.5*0.25)/(0.5*0.8*0.75) = 0.125/0.3,
    ramp(a+) = ((1-b)Kb - 2 + 2Kb)/(K b^2 (K-1)) = 0.25/0.36.

The ODE route is validated against the scalar initial-value equation, the
closed forms, and the independent grid fixed-point solver.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mfstop.discount import DiscountSpec
from mfstop.model import rd_model
from mfstop.rd_example import (
    ConvergenceRow,
    IntegrationError,
    RdParams,
    UnsupportedParameters,
    closed_form_continuation,
    closed_form_policy,
    convergence_table,
    initial_continuation,
    pure_threshold_policy,
    sigmoid_response,
    solve_regularized_ode,
    thresholds,
    _bracket,
)
from mfstop.solver import SolverConfig, solve_fixed_point
from mfstop.valuation import continuation_value

P = RdParams(1.8, 0.5)
QH = DiscountSpec.quasi_hyperbolic(1.8, 0.5)


# ---------------------------------------------------------------------------
# thresholds and closed forms
# ---------------------------------------------------------------------------

def test_threshold_values_exact():
    thr = thresholds(P)
    assert abs(thr.a - 2.0 / 11.0) < 5e-16
    assert abs(thr.b - 1.0 / 3.0) < 5e-16
    assert thr.mixed
    assert 1.6 < P.k_amp < 2.0  # the mixed-band condition, spelled out


def test_no_mixed_band_for_small_amplification():
    thr = thresholds(RdParams(1.2, 0.5))
    assert not thr.mixed
    with pytest.raises(UnsupportedParameters):
        closed_form_policy(RdParams(1.2, 0.5), 0.5)
    # the pure threshold policy is still available
    assert pure_threshold_policy(RdParams(1.2, 0.5), 0.0) == 1.0
    assert pure_threshold_policy(RdParams(1.2, 0.5), 0.9) == 0.0


def test_upper_threshold_vanishes_as_beta_grows():
    assert thresholds(RdParams(1.005, 0.99)).b < 0.011


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        RdParams(2.5, 0.5)
    with pytest.raises(ValueError):
        RdParams(1.8, 1.0)


def test_increasing_impatience_flag():
    assert RdParams(1.8, 0.5).increasing_impatience
    assert not RdParams(0.9, 0.5).increasing_impatience


def test_policy_profile_values():
    assert closed_form_policy(P, 0.1) == 1.0
    assert_allclose(closed_form_policy(P, 0.25), 0.125 / 0.3, rtol=1e-12)
    assert_allclose(closed_form_policy(P, 1.0 / 3.0), 0.0, atol=1e-12)
    assert closed_form_policy(P, 0.8) == 0.0


def test_policy_right_limit_at_lower_threshold():
    expected = 0.25 / 0.36
    assert_allclose(closed_form_policy(P, 2.0 / 11.0 + 1e-9), expected, atol=1e-6)


def test_policy_in_unit_interval_and_decreasing_on_band():
    mus = np.linspace(0.0, 1.0, 2001)
    vals = closed_form_policy(P, mus)
    assert np.all(vals >= 0.0) and np.all(vals <= 1.0)
    thr = thresholds(P)
    band = (mus > thr.a + 1e-9) & (mus <= thr.b)
    assert np.all(np.diff(vals[band]) < 0.0)


def test_continuation_profile_values():
    assert_allclose(closed_form_continuation(P, 0.1), 0.855, rtol=1e-12)
    assert_allclose(closed_form_continuation(P, 0.5),
                    (2.0 / 3.0) * 1.5 ** (-0.5), rtol=1e-12)


def test_continuation_continuous_at_thresholds():
    thr = thresholds(P)
    for t in (thr.a, thr.b):
        below = closed_form_continuation(P, t - 1e-10)
        above = closed_form_continuation(P, t + 1e-10)
        assert abs(below - above) < 1e-8
    assert_allclose(closed_form_continuation(P, thr.a), 1.0 - thr.a, rtol=1e-12)


def test_continuation_verified_by_valuation_module():
    """Independent loop: evaluate the closed-form policy numerically."""
    model = rd_model(grid_points=401)
    pol = lambda mu: closed_form_policy(P, mu)
    got = continuation_value(model, QH, pol, 0.0, model.grid)
    want = closed_form_continuation(P, model.grid)
    assert np.max(np.abs(got - want)) < 3e-3


# ---------------------------------------------------------------------------
# smoothed equilibrium ODE
# ---------------------------------------------------------------------------

def test_sigmoid_response_at_indifference():
    for lam in (1.0, 0.1, 0.01):
        assert sigmoid_response(0.3, 0.7, lam) == 0.5


def test_initial_value_solves_bracket_equation():
    for lam in (0.1, 0.01):
        v0 = initial_continuation(P, lam)
        assert abs(_bracket(P, lam, 0.0, v0)) < 1e-10
        assert 0.0 < v0 < P.k_amp * P.beta / (1.0 - P.beta) + 1.0


def test_initial_value_approaches_first_step_weight():
    v0s = [initial_continuation(P, lam) for lam in (0.1, 0.05, 0.01)]
    gaps = [abs(v - 0.9) for v in v0s]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.05


def test_ode_deep_stop_region_probability():
    _, phi = solve_regularized_ode(P, 0.01)
    assert phi(0.1) >= 0.95


def test_ode_step_insensitive():
    v1, _ = solve_regularized_ode(P, 0.05, step=5e-4)
    v2, _ = solve_regularized_ode(P, 0.05, step=2.5e-4)
    assert np.max(np.abs(v1(v2.nodes) - v2.values)) < 1e-6


def test_ode_output_grid_size():
    v, phi = solve_regularized_ode(P, 0.1, step=5e-4)
    assert v.nodes.size == 2001
    assert phi.nodes.size == 2001


def test_ode_rejects_bad_inputs():
    with pytest.raises(ValueError):
        solve_regularized_ode(P, -0.1)
    with pytest.raises(ValueError):
        solve_regularized_ode(P, 0.1, step=0.0)


# ---------------------------------------------------------------------------
# cross-validation of the two routes
# ---------------------------------------------------------------------------

def test_grid_solver_agrees_with_ode():
    model = rd_model(grid_points=2001)
    res = solve_fixed_point(model, QH,
                            SolverConfig(lam=0.1, damping=0.5, max_iter=400,
                                         residual_tol=1e-6))
    assert res.converged
    _, phi_ode = solve_regularized_ode(P, 0.1)
    assert np.max(np.abs(res.policy.values - phi_ode(model.grid))) < 1e-2


# ---------------------------------------------------------------------------
# vanishing-regularization table
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def table():
    return convergence_table(P, [0.1, 0.05, 0.01], exclusion=0.05)


def test_convergence_gaps_decrease(table):
    phi_gaps = [row.phi_gap for row in table]
    value_gaps = [row.value_gap for row in table]
    assert phi_gaps[0] > phi_gaps[1] > phi_gaps[2]
    assert value_gaps[0] > value_gaps[1] > value_gaps[2]


def test_convergence_small_at_smallest_lambda(table):
    assert table[-1].lam == 0.01
    assert table[-1].phi_gap <= 0.1
    assert abs(table[-1].v_at_zero - 0.9) < 0.05


def test_wider_exclusion_never_increases_gaps(table):
    wide = convergence_table(P, [0.1, 0.05, 0.01], exclusion=0.5)
    for narrow_row, wide_row in zip(table, wide):
        assert wide_row.phi_gap <= narrow_row.phi_gap + 1e-15
        assert wide_row.value_gap <= narrow_row.value_gap + 1e-15


def test_exclusion_must_be_positive():
    with pytest.raises(ValueError):
        convergence_table(P, [0.1], exclusion=0.0)
