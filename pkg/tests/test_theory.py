import numpy as np
import pytest

from chagnn.errors import DegenerateScenarioError, InputError
from chagnn.theory import (TheoremScenario, closed_form_losses, flag_probability_homophilous,
                           optimal_weights, simulate_losses, theorem1_check, theorem2_check)


def test_optimal_weights_binary():
    assert np.array_equal(optimal_weights(2, 1.0), np.array([[1.5, -0.5], [-0.5, 1.5]]))


@pytest.mark.parametrize("c", [2, 3, 5, 8])
@pytest.mark.parametrize("r", [0.5, 1.0, 3.0])
def test_optimal_weights_rows_and_argmax(c, r):
    w = optimal_weights(c, r)
    assert np.allclose(w.sum(1), r) and np.allclose(w, w.T)
    x1 = 0.1 / c
    for k in range(c):
        x = np.full(c, x1)
        x[k] += 0.9
        assert np.argmax(x @ w) == k


def test_optimal_weights_errors():
    with pytest.raises(InputError):
        optimal_weights(1, 1.0)
    with pytest.raises(InputError):
        optimal_weights(3, 0.0)


def test_closed_form_example():
    rep = closed_form_losses(TheoremScenario(2, 4, 3, 1, 2, feature_strength=1.0))
    assert rep.ratio_closed_form == pytest.approx(1 / 3, abs=1e-15)
    assert rep.ratio_ba == pytest.approx(1 / 3)
    assert rep.x0 + rep.x1 == 1.0
    assert rep.L1 > rep.L0 > rep.L2


def test_feature_identity():
    for c in (2, 3, 7):
        rep = closed_form_losses(TheoremScenario(c, 5, 4, 1, 1, feature_strength=0.37))
        assert abs(rep.x0 + (c - 1) * rep.x1 - 1) < 1e-12


def test_proportion_identities():
    sc = TheoremScenario(3, 6, 4, 2, 3)
    assert sc.h0 + sc.h1 == pytest.approx(1)
    assert sum(sc.r) == pytest.approx(1)


def test_degenerate_and_preconditions():
    with pytest.raises(DegenerateScenarioError):
        closed_form_losses(TheoremScenario(2, 4, 2, 2, 1))
    with pytest.raises(InputError):
        TheoremScenario(2, 4, 3, 1, 0)
    with pytest.raises(InputError):
        TheoremScenario(2, 5, 3, 1, 1)
    assert theorem1_check(TheoremScenario(2, 4, 2, 2, 1))["degenerate"] is True


def test_simulation_matches_closed_form():
    sc = TheoremScenario(2, 4, 3, 1, 2)
    sim, closed = simulate_losses(sc, 0), closed_form_losses(sc)
    assert abs(sim.L0 - closed.L0) < 1e-8
    assert abs(sim.ratio_measured - closed.ratio_closed_form) < 1e-8
    assert sim.L1 > sim.L0 > sim.L2 and sim.exact


def test_self_term_shifts_injected_margins_symmetrically():
    # the target's own aggregate also moves after injection; the shift is equal
    # and opposite for the two injection kinds, so the ratio is unaffected
    sc = TheoremScenario(2, 4, 3, 1, 2)
    sim, closed = simulate_losses(sc, 0), closed_form_losses(sc)
    up, down = sim.L1 - closed.L1, closed.L2 - sim.L2
    assert up > 1e-3
    assert up / (sim.L1 - sim.L0) == pytest.approx(down / (sim.L0 - sim.L2))


def test_b_zero_flagged_inexact_but_ratio_holds():
    res = theorem1_check(TheoremScenario(3, 3, 3, 0, 2))
    assert res["pass"] and res["exact"] is False


def test_theorem1_deterministic():
    sc = TheoremScenario(5, 7, 5, 2, 4)
    assert theorem1_check(sc, 4) == theorem1_check(sc, 4)


def test_theorem2_preconditions():
    sc = TheoremScenario(2, 4, 3, 1, 1)
    with pytest.raises(InputError):
        theorem2_check(sc, 0.5)
    with pytest.raises(InputError):
        theorem2_check(sc, 0.8, samples=100)


def test_theorem2_p09_and_convergence():
    rep = theorem2_check(TheoremScenario(2, 4, 3, 1, 1), 0.9, 100_000, seed=1)
    assert rep.bound == pytest.approx(0.18)
    assert rep.ratio_est < rep.bound and rep.passed
    assert rep.converged
    assert rep.p1_est + rep.p2_est == pytest.approx(1.0)
    assert 0 < rep.bound <= 0.5


def test_flag_probability_binary_reduces_to_bound():
    assert flag_probability_homophilous(0.5, 2) == 0.5
    assert flag_probability_homophilous(0.8, 2) == pytest.approx(2 * 0.8 * 0.2)
