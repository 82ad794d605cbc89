from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cemech.env import DomainError, Outcome, expected_utility
from cemech.game import (
    CorrelatedStrategy,
    NormalFormGame,
    ce_check,
    ce_constraints,
    induce_game,
    is_pure_nash,
    max_offtarget_mass,
    pure_nash_equilibria,
    strictly_dominated_reduction,
    target_mask,
    verify_implementation,
)
from cemech.mech_scf import AtomTable, Mechanism, truthful_profile

from conftest import BILATERAL_STATES, triple


def matching_pennies():
    u = np.array([[1, -1], [-1, 1]], float)
    return NormalFormGame(np.stack([u, -u], axis=-1))


def prisoners_dilemma():
    # message 0 = cooperate, 1 = defect; defection strictly dominant
    row = np.array([[3, 0], [5, 1]], float)
    return NormalFormGame(np.stack([row, row.T], axis=-1))


def random_game(rng, counts):
    return NormalFormGame(rng.integers(-5, 6, size=tuple(counts) + (len(counts),)).astype(float))


def test_payoff_tensor_shape_checked():
    with pytest.raises(DomainError):
        NormalFormGame(np.zeros((2, 2, 3)))
    with pytest.raises(DomainError):
        NormalFormGame(np.full((2, 2, 2), np.inf))


def test_correlated_strategy_validation():
    with pytest.raises(DomainError):
        CorrelatedStrategy(np.array([[0.5, 0.6], [0.0, 0.0]]))
    with pytest.raises(DomainError):
        CorrelatedStrategy(np.array([[1.5, -0.5], [0.0, 0.0]]))


def test_matching_pennies_uniform_is_ce_and_pure_is_not():
    g = matching_pennies()
    assert ce_check(g, CorrelatedStrategy.uniform(g.counts)).passed
    for prof in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        chk = ce_check(g, CorrelatedStrategy.point(g.counts, prof))
        assert not chk.passed
        assert chk.worst_gain == pytest.approx(2.0)


def test_matching_pennies_offtarget_mass():
    # the uniform distribution is the unique CE, so 3/4 of the mass is off any single profile
    g = matching_pennies()
    target = np.zeros((2, 2), bool)
    target[0, 0] = True
    rep = verify_implementation(g, target)
    assert rep.max_offpath_mass == pytest.approx(0.75, abs=1e-9)
    assert not rep.implemented
    assert rep.witness_check.passed


def test_unique_ce_point_mass_is_implemented():
    g = prisoners_dilemma()
    target = np.zeros((2, 2), bool)
    target[1, 1] = True
    rep = verify_implementation(g, target, truthful=(1, 1))
    assert rep.implemented and rep.max_offpath_mass <= 1e-12
    assert rep.offpath_witness is None


def test_strict_dominance_reduction_on_dilemma():
    assert strictly_dominated_reduction(prisoners_dilemma()) == [[1], [1]]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 3))
def test_nash_point_masses_are_ce(seed, n):
    rng = np.random.default_rng(seed)
    g = random_game(rng, rng.integers(2, 4, size=n))
    for prof in pure_nash_equilibria(g):
        assert is_pure_nash(g, prof)
        assert ce_check(g, CorrelatedStrategy.point(g.counts, prof)).passed


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_lp_witness_passes_ce_check(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng, (3, 3))
    target = rng.random((3, 3)) < 0.5
    res, _, _ = max_offtarget_mass(g, target)
    x = np.clip(res.x, 0, None)
    assert ce_check(g, CorrelatedStrategy((x / x.sum()).reshape(3, 3)), tol=1e-8).passed
    assert verify_implementation(g, target).witness_check.passed


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_offtarget_mass_monotone_in_target(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng, (3, 3))
    small = rng.random((3, 3)) < 0.3
    big = small | (rng.random((3, 3)) < 0.5)
    v_small = verify_implementation(g, small).max_offpath_mass
    v_big = verify_implementation(g, big).max_offpath_mass
    assert v_big <= v_small + 1e-9


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-50, 50), agent=st.integers(0, 1))
def test_affine_shift_changes_nothing(seed, shift, agent):
    rng = np.random.default_rng(seed)
    g = random_game(rng, (3, 3))
    pay = g.payoffs.copy()
    pay[..., agent] += shift
    h = NormalFormGame(pay)
    sigma = CorrelatedStrategy(rng.dirichlet(np.ones(9)).reshape(3, 3))
    assert ce_check(g, sigma).passed == ce_check(h, sigma).passed
    target = rng.random((3, 3)) < 0.5
    assert verify_implementation(g, target).max_offpath_mass == pytest.approx(
        verify_implementation(h, target).max_offpath_mass, abs=1e-8)


def test_constraint_rows_match_definition():
    rng = np.random.default_rng(3)
    g = random_game(rng, (3, 2))
    A, keys = ce_constraints(g, drop_zero=False, scale=False)
    sigma = rng.dirichlet(np.ones(6)).reshape(3, 2)
    lhs = A @ sigma.reshape(-1)
    for r, (i, a, b) in enumerate(keys):
        gain = 0.0
        for prof in np.ndindex(*g.counts):
            if prof[i] != a:
                continue
            dev = list(prof)
            dev[i] = b
            gain += sigma[prof] * (g.payoffs[tuple(dev) + (i,)] - g.payoffs[prof + (i,)])
        assert lhs[r] == pytest.approx(gain)
    assert len(keys) == 3 * 2 + 2 * 1


# -- induced games ---------------------------------------------------------------------

def test_bilateral_truthful_payoffs_at_low_high(bilateral, bilateral_mech):
    g = induce_game(bilateral_mech, bilateral.env, ("L", "H"))
    assert g.counts == (16, 16)
    prof = truthful_profile(bilateral_mech, ("L", "H"))
    assert g.payoff(prof, 0) == 2.0 and g.payoff(prof, 1) == 2.0


def test_induced_payoffs_spot_check(bilateral, bilateral_mech):
    env = bilateral.env
    rng = np.random.default_rng(5)
    for state in BILATERAL_STATES:
        g = induce_game(bilateral_mech, env, state)
        for _ in range(10):
            prof = tuple(int(v) for v in rng.integers(16, size=2))
            o = bilateral_mech.outcome(prof)
            for i in range(2):
                want = expected_utility(env, o, i, state[i]) + bilateral_mech.transfer(prof, i)
                assert g.payoff(prof, i) == pytest.approx(float(want), abs=1e-12)


def test_constant_mechanism_gives_constant_tensor(bilateral):
    env = bilateral.env
    atoms = AtomTable(env)
    z = atoms.id(Outcome.pure(triple(1, -10, 10), 2))
    mech = Mechanism(env, [["a", "b", "c"], ["a", "b"]], lambda m: [(Fraction(1), z)], lambda m, i: 0, atoms)
    g = induce_game(mech, env, ("H", "L"))
    assert np.all(g.payoffs[..., 0] == 10) and np.all(g.payoffs[..., 1] == 8)


def test_target_mask_marks_truthful_profile(bilateral, bilateral_mech):
    for s in BILATERAL_STATES:
        mask = target_mask(bilateral_mech, bilateral.scf(s))
        assert mask[truthful_profile(bilateral_mech, s)]


def test_bilateral_truthful_point_mass_is_ce_where_implemented(bilateral, bilateral_mech):
    for s in [("H", "H"), ("L", "H")]:
        g = induce_game(bilateral_mech, bilateral.env, s)
        prof = truthful_profile(bilateral_mech, s)
        assert ce_check(g, CorrelatedStrategy.point(g.counts, prof)).passed


def test_unknown_state_rejected(bilateral, bilateral_mech):
    with pytest.raises(DomainError):
        induce_game(bilateral_mech, bilateral.env, ("M", "H"))
