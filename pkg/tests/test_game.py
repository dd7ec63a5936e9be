import numpy as np
import pytest

from rlwe_cpabe.game import (Adversary, AttributeLedger, CoinFlipAdversary, GameTranscript, GroundTruth,
                             KeyHoarderAdversary, OmniscientAdversary, Outcome, SampleSetExhausted,
                             TrialRecord, distinguish, from_jsonl, make_sample_set, run_game,
                             run_reduction, run_trials, shape, summarize, to_jsonl, trial_seed)
from rlwe_cpabe.policy import parse_policy
from rlwe_cpabe.ring import TOY, Noise, RingElement, center, mul
from rlwe_cpabe.scheme import IdentityRegistry, encrypt, keygen, setup

NOISY = TOY.with_mode(noise=Noise.ON)


class Scripted(Adversary):
    """Adversary driven by plain callables, for protocol tests."""

    def __init__(self, phase1=None, challenge=None, phase2=None, guess=0):
        self._p1, self._chal, self._p2, self._guess = phase1, challenge, phase2, guess
        self.keys, self.ct = [], None

    def phase1(self, oracle):
        if self._p1:
            self._p1(self, oracle)

    def challenge(self):
        if self._chal:
            return self._chal(self)
        return parse_policy("and(att1, att2)"), RingElement.zero(TOY), RingElement.one(TOY)

    def phase2(self, oracle, ct):
        self.ct = ct
        if self._p2:
            self._p2(self, oracle)

    def guess(self):
        return self._guess


# -- ledger ------------------------------------------------------------------------

def test_ledger():
    ledger = AttributeLedger()
    ledger.append("a", 1)
    ledger.append("b", 2)
    ledger.append("a", 1)
    assert ledger.attributes("a") == (1, 1)
    assert len(ledger) == 3
    assert ledger.satisfying_identity(parse_policy("and(att1, att2)")) is None
    ledger.append("b", 1)
    assert ledger.satisfying_identity(parse_policy("and(att1, att2)")) == "b"


# -- real game ---------------------------------------------------------------------

def test_coinflip_game_completes(rng):
    t = run_game(CoinFlipAdversary(), TOY, 2, rng)
    assert t.outcome in (Outcome.WIN, Outcome.LOSE)
    assert t.guess in (0, 1) and t.coin in (0, 1)
    assert t.queries == []


def test_omniscient_adversary_always_wins(rng):
    for _ in range(20):
        adv = OmniscientAdversary()
        assert run_game(adv, TOY, 2, rng, coin_hook=adv.reveal).outcome is Outcome.WIN


def test_key_hoarder_aborts(rng):
    tree = parse_policy("thresh(2, att1, att2, att3)")
    t = run_game(KeyHoarderAdversary(tree), TOY, 3, rng)
    assert t.outcome is Outcome.ABORT
    assert t.coin is None


def test_split_identities_do_not_abort(rng):
    # two identities each holding half of the policy are allowed
    def p1(adv, oracle):
        oracle("u1", 1)
        oracle("u2", 2)

    t = run_game(Scripted(phase1=p1), TOY, 2, rng)
    assert t.outcome in (Outcome.WIN, Outcome.LOSE)
    assert [q.granted for q in t.queries] == [True, True]


def test_phase2_refuses_completing_query(rng):
    def p1(adv, oracle):
        adv.keys.append(oracle("u", 1))

    def p2(adv, oracle):
        adv.keys.append(oracle("u", 2))   # would satisfy and(att1, att2)
        adv.keys.append(oracle("v", 2))   # fresh identity, fine

    adv = Scripted(phase1=p1, phase2=p2)
    t = run_game(adv, TOY, 2, rng)
    assert adv.keys[1] is None and adv.keys[2] is not None
    assert [(q.phase, q.granted) for q in t.queries] == [(1, True), (2, False), (2, True)]
    assert t.outcome in (Outcome.WIN, Outcome.LOSE)


def test_keys_from_oracle_are_real(rng):
    def p1(adv, oracle):
        adv.keys.append(oracle("u", 1))

    adv = Scripted(phase1=p1)
    run_game(adv, TOY, 2, rng)
    key = adv.keys[0]
    assert set(key.per_attr) == {1}


@pytest.mark.parametrize("bad", [
    lambda a: None,
    lambda a: ("att1", RingElement.zero(TOY), RingElement.one(TOY)),
    lambda a: (parse_policy("att9"), RingElement.zero(TOY), RingElement.one(TOY)),
    lambda a: (parse_policy("att1"), RingElement.constant(TOY, 5), RingElement.one(TOY)),
])
def test_malformed_challenge_is_invalid(bad, rng):
    assert run_game(Scripted(challenge=bad), TOY, 2, rng).outcome is Outcome.INVALID


def test_protocol_violations_are_invalid(rng):
    def bad_attr(adv, oracle):
        oracle("u", 7)

    assert run_game(Scripted(phase1=bad_attr), TOY, 2, rng).outcome is Outcome.INVALID
    assert run_game(Scripted(guess=2), TOY, 2, rng).outcome is Outcome.INVALID

    def keep(adv, oracle):
        adv.saved = oracle

    def late_query(adv):
        adv.saved("u", 1)  # the oracle is closed between phases

    adv = Scripted(phase1=keep, challenge=late_query)
    assert run_game(adv, TOY, 2, rng).outcome is Outcome.INVALID


# -- trials and summaries ------------------------------------------------------------

def test_trials_are_reproducible():
    a = run_trials("coinflip", TOY, 2, 20, seed=5)
    b = run_trials("coinflip", TOY, 2, 20, seed=5)
    assert a == b
    assert a[3].seed == trial_seed(5, 3)
    assert run_trials(CoinFlipAdversary, TOY, 2, 20, seed=5) == a


def test_trials_parallel_match_serial():
    assert run_trials("coinflip", TOY, 2, 12, seed=9, workers=2) == run_trials("coinflip", TOY, 2, 12, seed=9)


def test_jsonl_round_trip():
    recs = [TrialRecord(1, "win", 0), TrialRecord(2, "abort", 3)]
    assert from_jsonl(to_jsonl(recs)) == recs


def test_summary():
    recs = [TrialRecord(i, o, 0) for i, o in enumerate(["win"] * 30 + ["lose"] * 70 + ["abort"] * 5)]
    s = summarize(recs)
    assert (s.games, s.wins, s.losses, s.aborts, s.invalid) == (105, 30, 70, 5, 0)
    assert s.win_rate == pytest.approx(0.3)
    assert s.null_stderr == pytest.approx(0.05)
    lo, hi = s.interval()
    assert lo < 0.3 < hi


# -- reduction ----------------------------------------------------------------------

def test_sample_set_structure(rng):
    lwe = make_sample_set(NOISY, 5, GroundTruth.LWE, rng)
    for a, b in lwe.pairs:
        diff = center(b - mul(a, lwe.secret))
        assert np.all(diff % NOISY.p == 0)
        assert np.abs(diff).max() <= NOISY.p * NOISY.tail_bound
    uni = make_sample_set(NOISY, 5, GroundTruth.UNIFORM, rng)
    assert any(np.abs(center(b - mul(a, uni.secret))).max() > NOISY.p * NOISY.tail_bound
               for a, b in uni.pairs)


def test_reduction_decides_lwe_for_winning_adversary(rng):
    adv = OmniscientAdversary()
    r = run_reduction(adv, TOY, 2, rng, GroundTruth.UNIFORM, coin_hook=adv.reveal)
    assert not r.aborted and r.decision is GroundTruth.LWE


def test_reduction_aborts_on_hoarder(rng):
    r = run_reduction(KeyHoarderAdversary(parse_policy("and(att1, att2)")), TOY, 2, rng,
                      GroundTruth.LWE)
    assert r.aborted and r.game.outcome is Outcome.ABORT
    assert r.decision in (GroundTruth.LWE, GroundTruth.UNIFORM)


def test_reduction_sample_budget(rng):
    def many(adv, oracle):
        for i in range(4):
            oracle(f"id{i}", 1)

    samples = make_sample_set(TOY, 2 + 1 + 3, GroundTruth.LWE, rng)
    with pytest.raises(SampleSetExhausted):
        distinguish(Scripted(phase1=many), samples.pairs, TOY, 2, rng)
    with pytest.raises(ValueError):
        distinguish(CoinFlipAdversary(), samples.pairs[:2], TOY, 2, rng)


def test_simulated_keys_use_sample_structure(rng):
    # in NoiseOff, a simulated SK_{i,u} times a_i gives back a_u, like real keys give u
    def p1(adv, oracle):
        adv.keys.append(oracle("u", 1))

    samples = make_sample_set(TOY, 6, GroundTruth.LWE, rng)
    adv = Scripted(phase1=p1)
    r = distinguish(adv, samples.pairs, TOY, 2, rng)
    a_1 = samples.pairs[1][0]
    a_u, b_u = samples.pairs[3]
    key = adv.keys[0]
    assert mul(a_1, key.per_attr[1]) == a_u
    assert key.sk_u == b_u
    assert r.pk.pk == tuple(b for _, b in samples.pairs[:3])


def test_real_and_simulated_shapes_match(rng):
    def p1(adv, oracle):
        adv.keys.append(oracle("u", 1))
        adv.keys.append(oracle("w", 2))

    real_adv = Scripted(phase1=p1)
    pk, msk = setup(TOY, 2, rng)
    real_usk = keygen(msk, "u", [1], rng, IdentityRegistry())
    real_ct = encrypt(pk, RingElement.zero(TOY), parse_policy("and(att1, att2)"), rng)
    sim = distinguish(real_adv, make_sample_set(TOY, 8, GroundTruth.LWE, rng).pairs, TOY, 2, rng)
    assert shape(sim.pk) == shape(pk)
    assert shape(real_adv.keys[0]) == shape(real_usk)
    assert shape(sim.challenge) == shape(real_ct)
    with pytest.raises(TypeError):
        shape(GameTranscript())
