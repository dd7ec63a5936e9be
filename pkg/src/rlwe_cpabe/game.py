"""IND-CPA game for the scheme and the R-LWE distinguisher built from it.

Adversaries subclass :class:`Adversary`. The challenger calls, in order,
``setup``, ``phase1``, ``challenge``, ``phase2`` and ``guess``; during the two
query phases the adversary receives an ``oracle(identity, attribute)``
callable that returns a single-attribute :class:`UserSecretKey` or ``None``
when the query is refused.

:func:`run_reduction` plays the same game but answers every query from an
R-LWE sample set instead of a master key, then turns the adversary's success
into a guess about where the samples came from.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from . import policy
from .errors import AbeError, NotInvertible
from .policy import AccessTree, evaluate
from .ring import Params, RingElement, mul, mul_many, sample_uniform, scale
from .scheme import (Ciphertext, IdentityRegistry, MasterSecretKey, PublicKey,
                     UserSecretKey, attribute_inverse, check_message, encrypt,
                     keygen, noise, setup)


class Outcome(str, enum.Enum):
    WIN = "win"
    LOSE = "lose"
    ABORT = "abort"
    INVALID = "invalid"


class GroundTruth(str, enum.Enum):
    LWE = "lwe"
    UNIFORM = "uniform"


class ProtocolViolation(AbeError):
    """The adversary broke the game protocol."""


class SampleSetExhausted(AbeError):
    """The reduction ran out of fresh R-LWE samples."""


@dataclass(frozen=True)
class QueryRecord:
    identity: str
    attribute: int
    phase: int
    granted: bool


@dataclass
class GameTranscript:
    queries: list[QueryRecord] = field(default_factory=list)
    challenge_tree: Optional[AccessTree] = None
    coin: Optional[int] = None
    guess: Optional[int] = None
    outcome: Optional[Outcome] = None
    reason: str = ""


class AttributeLedger:
    """Per-identity attribute lists; append-only for the life of one game."""

    def __init__(self):
        self._lists: dict[str, list[int]] = {}

    def append(self, identity: str, attribute: int) -> None:
        self._lists.setdefault(identity, []).append(attribute)

    def attributes(self, identity: str) -> tuple[int, ...]:
        return tuple(self._lists.get(identity, ()))

    def identities(self) -> list[str]:
        return list(self._lists)

    def satisfying_identity(self, tree: AccessTree) -> Optional[str]:
        for identity, attrs in self._lists.items():
            if evaluate(tree, attrs):
                return identity
        return None

    def __len__(self):
        return sum(len(v) for v in self._lists.values())


Oracle = Callable[[str, int], Optional[UserSecretKey]]


class Adversary:
    """Base adversary: makes no queries. Subclasses supply challenge and guess."""

    def setup(self, pk: PublicKey, rng: np.random.Generator) -> None:
        self.pk = pk
        self.rng = rng

    def phase1(self, oracle: Oracle) -> None:
        pass

    def challenge(self) -> tuple[AccessTree, RingElement, RingElement]:
        raise NotImplementedError

    def phase2(self, oracle: Oracle, ct: Ciphertext) -> None:
        pass

    def guess(self) -> int:
        raise NotImplementedError


def _default_challenge(pk: PublicKey) -> tuple[AccessTree, RingElement, RingElement]:
    params = pk.params
    tree = AccessTree(policy.Inner(1, (policy.Leaf(1), policy.Leaf(pk.n_attrs))))
    return tree, RingElement.zero(params), RingElement.constant(params, 1)


class CoinFlipAdversary(Adversary):
    """Ignores everything and guesses uniformly."""

    def challenge(self):
        return _default_challenge(self.pk)

    def guess(self):
        return int(self.rng.integers(2))


class KeyHoarderAdversary(Adversary):
    """Collects a satisfying key for ``tree`` in phase 1, then challenges on it."""

    def __init__(self, tree: AccessTree, identity: str = "mallory"):
        self.tree = tree
        self.identity = identity

    def phase1(self, oracle):
        for attr in sorted(self.tree.attributes()):
            oracle(self.identity, attr)

    def challenge(self):
        params = self.pk.params
        return self.tree, RingElement.zero(params), RingElement.constant(params, 1)

    def guess(self):
        return 0


class OmniscientAdversary(Adversary):
    """Test adversary told the coin out-of-band via :meth:`reveal`."""

    coin = None

    def reveal(self, coin: int) -> None:
        self.coin = coin

    def challenge(self):
        return _default_challenge(self.pk)

    def guess(self):
        return self.coin


ADVERSARIES = {"coinflip": CoinFlipAdversary}


def keygen_oracle(ledger: AttributeLedger, identity: str, attribute: int, msk: MasterSecretKey,
                  rng: np.random.Generator, registry: IdentityRegistry) -> UserSecretKey:
    """One O_KeyGen call: issue ``SK_{attribute,u}`` and note it in the ledger."""
    key = keygen(msk, identity, [attribute], rng, registry)
    ledger.append(identity, attribute)
    return key


def _validate_challenge(chal, pk: PublicKey):
    try:
        tree, m0, m1 = chal
    except (TypeError, ValueError):
        raise ProtocolViolation("challenge must be (tree, M0, M1)") from None
    if not isinstance(tree, AccessTree):
        raise ProtocolViolation("challenge tree is not an AccessTree")
    try:
        tree.validate(n_attrs=pk.n_attrs, q=pk.params.q)
    except AbeError as exc:
        raise ProtocolViolation(f"bad challenge tree: {exc}") from None
    for m in (m0, m1):
        if not isinstance(m, RingElement):
            raise ProtocolViolation("challenge messages must be ring elements")
        try:
            check_message(pk.params, m)
        except (ValueError, AbeError) as exc:
            raise ProtocolViolation(f"challenge message outside R_p: {exc}") from None
    return tree, m0, m1


def _play(adversary: Adversary, pk: PublicKey, issuer, rng: np.random.Generator,
          coin_hook=None) -> tuple[GameTranscript, Optional[Ciphertext]]:
    """Challenger logic shared by the real game and the reduction.

    ``issuer(ledger, identity, attribute)`` answers granted key queries and
    ``issuer.encrypt(tree, message)`` builds the challenge ciphertext.
    """
    transcript = GameTranscript()
    ledger = AttributeLedger()
    state = {"phase": 1, "tree": None, "violation": None}
    challenge_ct = None

    def oracle(identity, attribute):
        if state["phase"] not in (1, 2):
            state["violation"] = "oracle used outside a query phase"
            raise ProtocolViolation(state["violation"])
        if not isinstance(attribute, (int, np.integer)) or not 1 <= attribute <= pk.n_attrs:
            state["violation"] = f"attribute {attribute!r} outside the universe"
            raise ProtocolViolation(state["violation"])
        attribute = int(attribute)
        identity = str(identity)
        if state["phase"] == 2 and evaluate(state["tree"], ledger.attributes(identity) + (attribute,)):
            transcript.queries.append(QueryRecord(identity, attribute, 2, False))
            return None
        key = issuer(ledger, identity, attribute)
        transcript.queries.append(QueryRecord(identity, attribute, state["phase"], True))
        return key

    def finish(outcome, reason=""):
        transcript.outcome = outcome
        transcript.reason = reason
        return transcript, challenge_ct

    adv_rng = np.random.default_rng(int(rng.integers(2**63)))
    try:
        adversary.setup(pk, adv_rng)
        adversary.phase1(oracle)
        state["phase"] = None
        if state["violation"]:
            raise ProtocolViolation(state["violation"])
        tree, m0, m1 = _validate_challenge(adversary.challenge(), pk)
        transcript.challenge_tree = tree
        if ledger.satisfying_identity(tree) is not None:
            return finish(Outcome.ABORT, "a queried identity already satisfies the challenge tree")
        coin = int(rng.integers(2))
        transcript.coin = coin
        if coin_hook is not None:
            coin_hook(coin)
        state["tree"] = tree
        challenge_ct = issuer.encrypt(tree, (m0, m1)[coin])
        state["phase"] = 2
        adversary.phase2(oracle, challenge_ct)
        state["phase"] = None
        if state["violation"]:
            raise ProtocolViolation(state["violation"])
        guess = adversary.guess()
        if guess not in (0, 1):
            raise ProtocolViolation(f"guess {guess!r} is not a bit")
        transcript.guess = int(guess)
    except ProtocolViolation as exc:
        return finish(Outcome.INVALID, str(exc))
    return finish(Outcome.WIN if transcript.guess == coin else Outcome.LOSE)


class _RealIssuer:
    def __init__(self, pk, msk, rng):
        self.pk, self.msk, self.rng = pk, msk, rng
        self.registry = IdentityRegistry()

    def __call__(self, ledger, identity, attribute):
        return keygen_oracle(ledger, identity, attribute, self.msk, self.rng, self.registry)

    def encrypt(self, tree, message):
        return encrypt(self.pk, message, tree, self.rng)


def run_game(adversary: Adversary, params: Params, n_attrs: int, rng: np.random.Generator,
             coin_hook: Optional[Callable[[int], None]] = None) -> GameTranscript:
    """Play one IND-CPA game against ``adversary`` with a freshly set-up system."""
    pk, msk = setup(params, n_attrs, rng)
    transcript, _ = _play(adversary, pk, _RealIssuer(pk, msk, rng), rng, coin_hook)
    return transcript


# ---------------------------------------------------------------------------
# R-LWE samples and the reduction

@dataclass(frozen=True)
class SampleSet:
    pairs: tuple[tuple[RingElement, RingElement], ...]
    ground_truth: GroundTruth = field(repr=False)
    secret: RingElement = field(repr=False)


def make_sample_set(params: Params, m: int, ground_truth: GroundTruth,
                    rng: np.random.Generator) -> SampleSet:
    """``m`` pairs ``(a_j, a_j s + p e_j)`` for one hidden ``s``, or uniform pairs."""
    if m < 1:
        raise ValueError("a sample set needs at least one pair")
    s = sample_uniform(params, rng)
    a_list = [sample_uniform(params, rng) for _ in range(m)]
    if ground_truth is GroundTruth.LWE:
        b_list = [prod + scale(noise(params, rng), params.p)
                  for prod in mul_many([(a, s) for a in a_list])]
    else:
        b_list = [sample_uniform(params, rng) for _ in range(m)]
    return SampleSet(tuple(zip(a_list, b_list)), GroundTruth(ground_truth), s)


class _SimulatedIssuer:
    """Answers key queries and builds the challenge from sample pairs only."""

    def __init__(self, params, pairs, n_attrs, rng):
        self.params = params
        self.rng = rng
        self.a_attrs = [a for a, _ in pairs[1:n_attrs + 1]]
        self.fresh = list(pairs[n_attrs + 1:])
        self.bound: dict[str, tuple[RingElement, RingElement]] = {}
        self.pk = PublicKey(params, sample_uniform(params, rng), tuple(b for _, b in pairs[:n_attrs + 1]))

    def inverses_available(self) -> bool:
        try:
            for a_i in self.a_attrs:
                attribute_inverse(a_i, self.params)
        except NotInvertible:
            return False
        return True

    def __call__(self, ledger, identity, attribute):
        if identity not in self.bound:
            if not self.fresh:
                raise SampleSetExhausted("no fresh samples left for a new identity")
            self.bound[identity] = self.fresh.pop(0)
        a_u, b_u = self.bound[identity]
        inv = attribute_inverse(self.a_attrs[attribute - 1], self.params)
        sk_i = mul(inv, a_u) + scale(noise(self.params, self.rng), self.params.p)
        ledger.append(identity, attribute)
        return UserSecretKey(self.params, identity, b_u, {attribute: sk_i})

    def encrypt(self, tree, message):
        return encrypt(self.pk, message, tree, self.rng)


@dataclass
class ReductionTranscript:
    decision: GroundTruth
    aborted: bool
    game: GameTranscript
    pk: PublicKey
    challenge: Optional[Ciphertext]


DEFAULT_QUERY_BUDGET = 32


def distinguish(adversary: Adversary, pairs: Iterable[tuple[RingElement, RingElement]],
                params: Params, n_attrs: int, rng: np.random.Generator,
                coin_hook=None) -> ReductionTranscript:
    """Decide LWE vs uniform for ``pairs`` by running ``adversary`` on a simulated system.

    The first ``n_attrs + 1`` pairs become the public key; each new identity
    consumes one further pair. Raises :class:`SampleSetExhausted` when the
    adversary asks for more identities than there are spare pairs.
    """
    pairs = list(pairs)
    if len(pairs) < n_attrs + 1:
        raise ValueError("need more samples than attributes")
    issuer = _SimulatedIssuer(params, pairs, n_attrs, rng)
    if not issuer.inverses_available():
        game = GameTranscript(outcome=Outcome.ABORT, reason="sample a_i not invertible")
        return ReductionTranscript(_random_truth(rng), True, game, issuer.pk, None)
    game, ct = _play(adversary, issuer.pk, issuer, rng, coin_hook)
    if game.outcome in (Outcome.ABORT, Outcome.INVALID):
        return ReductionTranscript(_random_truth(rng), True, game, issuer.pk, ct)
    decision = GroundTruth.LWE if game.outcome is Outcome.WIN else GroundTruth.UNIFORM
    return ReductionTranscript(decision, False, game, issuer.pk, ct)


def _random_truth(rng) -> GroundTruth:
    return GroundTruth.LWE if rng.integers(2) else GroundTruth.UNIFORM


def run_reduction(adversary: Adversary, params: Params, n_attrs: int, rng: np.random.Generator,
                  ground_truth: GroundTruth, m: Optional[int] = None,
                  coin_hook=None) -> ReductionTranscript:
    """Draw a sample set of the given kind and run :func:`distinguish` on it."""
    if m is None:
        m = n_attrs + 1 + DEFAULT_QUERY_BUDGET
    if m <= n_attrs:
        raise ValueError(f"sample set of size {m} too small for {n_attrs} attributes")
    samples = make_sample_set(params, m, ground_truth, rng)
    return distinguish(adversary, samples.pairs, params, n_attrs, rng, coin_hook)


def shape(obj) -> tuple:
    """Structural fingerprint used to compare real and simulated transcripts."""
    if isinstance(obj, RingElement):
        return ("elem", obj.params.n, obj.params.q)
    if isinstance(obj, PublicKey):
        return ("pk", shape(obj.a_prime), tuple(shape(e) for e in obj.pk))
    if isinstance(obj, UserSecretKey):
        return ("usk", obj.identity, shape(obj.sk_u),
                tuple((a, shape(obj.per_attr[a])) for a in sorted(obj.per_attr)))
    if isinstance(obj, Ciphertext):
        return ("ct", policy.format_policy(obj.tree),
                tuple((p, shape(obj.c_leaves[p])) for p in sorted(obj.c_leaves)),
                shape(obj.c_prime), shape(obj.c_body))
    raise TypeError(f"no shape for {type(obj).__name__}")


# ---------------------------------------------------------------------------
# repeated trials and reports

@dataclass(frozen=True)
class TrialRecord:
    seed: int
    outcome: str
    queries: int


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _one_trial(args) -> TrialRecord:
    adversary_name, params, n_attrs, tseed = args
    rng = np.random.default_rng(tseed)
    t = run_game(ADVERSARIES[adversary_name](), params, n_attrs, rng)
    return TrialRecord(tseed, t.outcome.value, len(t.queries))


def run_trials(adversary: Union[str, Callable[[], Adversary]], params: Params, n_attrs: int,
               trials: int, seed: int, workers: int = 1) -> list[TrialRecord]:
    """Play ``trials`` independent games, each with its own derived seed.

    ``adversary`` is a name from :data:`ADVERSARIES` or a zero-argument
    factory; fanning out over ``workers`` processes requires a name.
    """
    seeds = [trial_seed(seed, i) for i in range(trials)]
    if isinstance(adversary, str):
        jobs = [(adversary, params, n_attrs, s) for s in seeds]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                return list(pool.map(_one_trial, jobs, chunksize=max(1, trials // (4 * workers))))
        return [_one_trial(job) for job in jobs]
    records = []
    for s in seeds:
        t = run_game(adversary(), params, n_attrs, np.random.default_rng(s))
        records.append(TrialRecord(s, t.outcome.value, len(t.queries)))
    return records


def to_jsonl(records: Iterable[TrialRecord]) -> str:
    return "".join(json.dumps({"seed": r.seed, "outcome": r.outcome, "queries": r.queries}) + "\n"
                   for r in records)


def from_jsonl(text: str) -> list[TrialRecord]:
    out = []
    for line in text.splitlines():
        if line.strip():
            d = json.loads(line)
            out.append(TrialRecord(int(d["seed"]), str(d["outcome"]), int(d["queries"])))
    return out


@dataclass(frozen=True)
class Summary:
    games: int
    wins: int
    losses: int
    aborts: int
    invalid: int

    @property
    def decided(self) -> int:
        return self.wins + self.losses

    @property
    def win_rate(self) -> float:
        return self.wins / self.decided if self.decided else float("nan")

    @property
    def null_stderr(self) -> float:
        """Binomial standard error of a fair coin over the decided games."""
        return math.sqrt(0.25 / self.decided) if self.decided else float("nan")

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        rate = self.win_rate
        se = math.sqrt(rate * (1 - rate) / self.decided) if self.decided else float("nan")
        return rate - z * se, rate + z * se


def summarize(records: Iterable[TrialRecord]) -> Summary:
    counts = {o.value: 0 for o in Outcome}
    n = 0
    for r in records:
        counts[r.outcome] += 1
        n += 1
    return Summary(n, counts["win"], counts["lose"], counts["abort"], counts["invalid"])
