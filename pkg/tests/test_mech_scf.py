import copy
import itertools
from fractions import Fraction

import pytest

from cemech.config import parse_config
from cemech.env import Outcome, expected_utility, mixture
from cemech.mech_scf import (
    CalibrationError,
    MechanismParams,
    ScfMessage,
    build_mechanism,
    calibrate,
    challenge_effectiveness,
    compound_challenge,
    dictator_average,
    e_fn,
    message_space,
    outcome_g,
    transfer_tau,
    truthful_profile,
)
from cemech.presets import bilateral_config

from conftest import BILATERAL_STATES, triple

EPS, ETA, FEE = Fraction(1, 4), Fraction(88, 5), Fraction(7, 800)

# Challenged (reported state, agent, true type) triples of the bilateral preset,
# read off the declared scheme: the buyer of type L challenges both states that
# name the buyer H; the seller of type H challenges (L,L).
CHALLENGES = {(("H", "H"), 0, "L"), (("H", "L"), 0, "L"), (("L", "L"), 1, "H")}


def pure(q, tb, ts):
    return Outcome.pure(triple(q, tb, ts), 2)


def test_message_space_order(bilateral):
    msgs = message_space(bilateral.env)
    assert len(msgs) == 16
    assert msgs[0] == ScfMessage(("H", "H"), ("H", "H"))
    assert msgs[1] == ScfMessage(("H", "H"), ("H", "L"))
    assert msgs[15] == ScfMessage(("L", "L"), ("L", "L"))


def test_calibrated_parameters(bilateral_mech):
    p = bilateral_mech.params
    assert (p.epsilon, p.eta, p.small_fee) == (EPS, ETA, FEE)
    assert bilateral_mech.meta["certificate"].ok


def test_params_validation():
    with pytest.raises(ValueError):
        MechanismParams(Fraction(0), ETA, FEE)
    with pytest.raises(ValueError):
        MechanismParams(EPS, Fraction(-1), FEE)


def test_effectiveness_at_every_challenged_profile(bilateral):
    p = bilateral
    params, _ = calibrate(p.env, p.scf, p.scheme, p.lotteries)
    n_checked = 0
    for s, j, t in CHALLENGES:
        for prof in itertools.product(*[p.env.types[k] if k != j else (t,) for k in range(2)]):
            ybar = mixture([(Fraction(1, 2), p.lotteries(k, prof[k])) for k in range(2)])
            c = mixture([(params.epsilon, ybar), (1 - params.epsilon, p.scheme(s, j, t))])
            f = p.scf(s)
            assert expected_utility(p.env, c, j, s[j]) < expected_utility(p.env, f, j, s[j])
            assert expected_utility(p.env, c, j, t) > expected_utility(p.env, f, j, t)
            n_checked += 1
    assert n_checked == 6


def test_next_grid_value_breaks_effectiveness(bilateral):
    # epsilon is the largest power of two that works, so 1/2 must fail somewhere
    from cemech.mech_scf import _challenge_configs

    p = bilateral
    configs = []
    for s, j, t, entry in _challenge_configs(p.env, p.scf, p.scheme):
        prof = [(pr, mixture([(Fraction(1, 2), p.lotteries(k, pr[k])) for k in range(2)]))
                for pr in itertools.product(*[p.env.types[k] if k != j else (t,) for k in range(2)])]
        configs.append((s, j, t, entry, p.scf(s), prof))
    results = [a < b and c > d for _, (a, b, c, d) in challenge_effectiveness(p.env, configs, Fraction(1, 2))]
    assert not all(results)


def test_penalty_exceeds_exhaustive_spread(bilateral, bilateral_mech):
    """Every profile and type, exact arithmetic through the direct double sum."""
    p = bilateral
    params = bilateral_mech.params
    spread = Fraction(0)
    outs = [outcome_g(p.env, p.scf, p.scheme, p.lotteries, params, bilateral_mech.decode(q))
            for q in bilateral_mech.profiles()]
    for i in range(2):
        for t in p.env.types[i]:
            us = [expected_utility(p.env, o, i, t) for o in outs]
            spread = max(spread, max(us) - min(us))
    assert spread == 6
    assert params.eta > spread


@pytest.mark.parametrize("state", BILATERAL_STATES)
def test_truthful_profile_is_neutral(bilateral, bilateral_mech, state):
    prof = truthful_profile(bilateral_mech, state)
    assert bilateral_mech.outcome(prof) == bilateral.scf(state)
    assert bilateral_mech.transfers(prof) == (0, 0)
    m = bilateral_mech.decode(prof)
    for i in range(2):
        for j in range(2):
            assert e_fn(bilateral_mech.params, m[i], m[j], j, bilateral.scheme, bilateral.scf, bilateral.env) == 0


def test_e_is_epsilon_when_buyer_low_challenges_high_high(bilateral, bilateral_mech):
    p = bilateral
    m_i = ScfMessage(("L", "H"), ("H", "H"))
    m_j = ScfMessage(("L", "H"), ("L", "H"))
    assert e_fn(bilateral_mech.params, m_i, m_j, 0, p.scheme, p.scf, p.env) == EPS


def test_single_challenged_pair_hand_expansion(bilateral, bilateral_mech):
    """Buyer names (H,H) in report2; both agents announce type L in report1.

    Only the buyer's self-pair is challenged (x((H,H), buyer L) is the buyer's
    test allocation). g = 1/4 [eps ybar + (1-eps) x] + 1/4 f(H,H) + 1/2 f(L,L)
    with ybar = 1/2 y_B(L) + 1/2 y_S(L).
    """
    p = bilateral
    m = (ScfMessage(("L", "L"), ("H", "H")), ScfMessage(("L", "L"), ("L", "L")))
    expected = Outcome((
        (triple(0, 0, 0), Fraction(1, 32)),
        (triple(1, -4, 4), Fraction(1, 32)),
        (triple("0.5", -2, 2), Fraction(3, 16)),
        (triple(1, -10, 10), Fraction(1, 4)),
        (triple(1, -6, 6), Fraction(1, 2)),
    ), (0, 0))
    assert outcome_g(p.env, p.scf, p.scheme, p.lotteries, bilateral_mech.params, m) == expected
    assert bilateral_mech.outcome(bilateral_mech.index_of(m)) == expected
    # buyer: the seller's type-L gossip about the buyer challenges (H,H)
    assert transfer_tau(p.env, p.scf, p.scheme, bilateral_mech.params, m, 0) == -ETA
    assert transfer_tau(p.env, p.scf, p.scheme, bilateral_mech.params, m, 1) == 0


def test_compound_challenge_is_epsilon_blend(bilateral, bilateral_mech):
    p = bilateral
    m = (ScfMessage(("L", "H"), ("H", "H")), ScfMessage(("L", "H"), ("L", "H")))
    c = compound_challenge(p.env, p.lotteries, p.scheme, bilateral_mech.params, m, 0, 0)
    ybar = dictator_average(p.env, p.lotteries, m)
    x = p.scheme(("H", "H"), 0, "L")
    for i in range(2):
        for t in p.env.types[i]:
            assert expected_utility(p.env, c, i, t) == (EPS * expected_utility(p.env, ybar, i, t)
                                                        + (1 - EPS) * expected_utility(p.env, x, i, t))
    degenerate = MechanismParams(Fraction(1, 10**12), ETA, FEE)
    c0 = compound_challenge(p.env, p.lotteries, p.scheme, degenerate, m, 0, 0)
    assert c0.close_to(x, 1e-9)


def straight_line_tau(m, i, eta=ETA, fee=FEE):
    """Transfer rules written out against the CHALLENGES set only."""
    j = 1 - i
    chal = lambda s, a, t: (tuple(s), a, t) in CHALLENGES  # noqa: E731
    t1 = -2 * eta if chal(m[i].report2, j, m[j].report1[j]) else 0
    own = chal(m[j].report2, j, m[j].report1[j])
    if own:
        t2 = -fee if m[i].report1[j] != m[j].report1[j] else 0
    else:
        t2 = -fee if chal(m[j].report2, j, m[i].report1[j]) else 0
    t3 = -eta if chal(m[i].report2, i, m[j].report1[i]) else 0
    return t1 + t2 + t3


def test_transfer_table_matches_straight_line_rules(bilateral_mech):
    n_nonzero = 0
    for prof in bilateral_mech.profiles():
        m = bilateral_mech.decode(prof)
        for i in range(2):
            got = bilateral_mech.transfer(prof, i)
            assert got == straight_line_tau(m, i), (prof, i)
            n_nonzero += got != 0
    assert n_nonzero > 100


def test_fast_outcome_matches_direct_double_sum(bilateral, bilateral_mech):
    p = bilateral
    for prof in bilateral_mech.profiles():
        m = bilateral_mech.decode(prof)
        assert bilateral_mech.outcome(prof) == outcome_g(p.env, p.scf, p.scheme, p.lotteries,
                                                         bilateral_mech.params, m)


def test_tau1_fires_exactly_when_challenged(bilateral, bilateral_mech):
    # the other two components add at most eta + fee < 2 eta, so tau <= -2 eta isolates the first
    p = bilateral
    params = bilateral_mech.params
    for prof in bilateral_mech.profiles():
        m = bilateral_mech.decode(prof)
        for i in range(2):
            j = 1 - i
            challenged = e_fn(params, m[i], m[j], j, p.scheme, p.scf, p.env) != 0
            assert (bilateral_mech.transfer(prof, i) <= -2 * ETA) == challenged


# -- a three-state variant where a report2 can name a non-state --------------------

@pytest.fixture(scope="module")
def three_state():
    cfg = copy.deepcopy(bilateral_config())
    cfg["states"] = [s for s in cfg["states"] if s != ["H", "L"]]
    cfg["scf"] = [r for r in cfg["scf"] if r["state"] != ["H", "L"]]
    cfg["challenge_scheme"] = [r for r in cfg["challenge_scheme"] if r["state"] != ["H", "L"]]
    return parse_config(cfg, "three_state")


def test_non_state_report_gets_weight_one(three_state):
    p = three_state
    params = MechanismParams(EPS, ETA, FEE)
    m_i = ScfMessage(("L", "H"), ("H", "L"))
    m_j = ScfMessage(("L", "H"), ("L", "H"))
    assert e_fn(params, m_i, m_j, 1, p.scheme, p.scf, p.env) == 1


def test_all_non_state_reports_give_dictator_average(three_state):
    p = three_state
    params = MechanismParams(EPS, ETA, FEE)
    m = (ScfMessage(("H", "L"), ("H", "L")), ScfMessage(("L", "L"), ("H", "L")))
    g = outcome_g(p.env, p.scf, p.scheme, p.lotteries, params, m)
    assert g == dictator_average(p.env, p.lotteries, m)
    assert g == mixture([(Fraction(1, 2), pure(1, -15, 15)), (Fraction(1, 2), pure(1, -4, 4))])


def test_non_state_penalty_switch(three_state):
    p = three_state
    params = MechanismParams(EPS, ETA, FEE)
    m = (ScfMessage(("L", "H"), ("H", "L")), ScfMessage(("L", "H"), ("L", "H")))
    on = transfer_tau(p.env, p.scf, p.scheme, params, m, 0, tau1_includes_nonstate=True)
    off = transfer_tau(p.env, p.scf, p.scheme, params, m, 0, tau1_includes_nonstate=False)
    assert on - off == -2 * ETA
    mech_off = build_mechanism(p.env, p.scf, p.scheme, p.lotteries, params, tau1_includes_nonstate=False)
    assert mech_off.transfer(mech_off.index_of(m), 0) == off


def test_three_state_variant_calibrates(three_state):
    p = three_state
    mech = build_mechanism(p.env, p.scf, p.scheme, p.lotteries)
    assert mech.meta["certificate"].ok
    for s in p.env.states:
        prof = truthful_profile(mech, s)
        assert mech.outcome(prof) == p.scf(s) and mech.transfers(prof) == (0, 0)


def test_zero_slack_challenge_fails_calibration():
    """A test allocation on the lie-side indifference line cannot survive any mixing."""
    cfg = copy.deepcopy(bilateral_config())
    for row in cfg["challenge_scheme"]:
        if row["agent"] == "seller":
            # seller L utility 4, equal to f(L,L); seller H utility 1 > -2
            row["outcome"] = {"lottery": triple("0.5", -3, 3), "transfers": [0, 2]}
    p = parse_config(cfg)
    with pytest.raises(CalibrationError) as err:
        calibrate(p.env, p.scf, p.scheme, p.lotteries)
    assert "seller" in str(err.value)


def _swapped_problem():
    cfg = copy.deepcopy(bilateral_config())
    cfg["agents"] = cfg["agents"][::-1]
    cfg["states"] = [s[::-1] for s in cfg["states"]]
    for row in cfg["scf"] + cfg["challenge_scheme"]:
        row["state"] = row["state"][::-1]
    return parse_config(cfg, "swapped")


def test_relabelling_agents_commutes_with_the_mechanism(bilateral, bilateral_mech):
    q = _swapped_problem()
    mech2 = build_mechanism(q.env, q.scf, q.scheme, q.lotteries, bilateral_mech.params)

    def flip(msg):
        return ScfMessage(msg.report1[::-1], msg.report2[::-1])

    for prof in bilateral_mech.profiles():
        m = bilateral_mech.decode(prof)
        prof2 = mech2.index_of([flip(m[1]), flip(m[0])])
        g1, g2 = bilateral_mech.outcome(prof), mech2.outcome(prof2)
        assert g1.lottery == g2.lottery and g1.transfers == g2.transfers[::-1]
        assert bilateral_mech.transfers(prof) == mech2.transfers(prof2)[::-1]
