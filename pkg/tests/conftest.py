import re

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from rlwe_cpabe.policy import AccessTree, Inner, Leaf, random_tree
from rlwe_cpabe.ring import ALL_MODES, Params, RingElement, is_prime, sample_uniform
from rlwe_cpabe.scheme import Ciphertext, MasterSecretKey, PublicKey, UserSecretKey

settings.register_profile("repo", deadline=None)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def schoolbook_oracle(a, b, q):
    """Plain double loop over Python ints, folding x^n = -1."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += a[i] * b[j]
            else:
                out[k - n] -= a[i] * b[j]
    return [v % q for v in out]


def elements(params: Params):
    return st.lists(st.integers(0, params.q - 1), min_size=params.n, max_size=params.n).map(
        lambda cs: RingElement(params, cs))


@st.composite
def trees(draw, n_attrs=8, max_leaves=10, max_depth=3):
    budget = [draw(st.integers(1, max_leaves))]

    def node(depth):
        if depth >= max_depth or budget[0] <= 1 or draw(st.booleans()):
            budget[0] -= 1
            return Leaf(draw(st.integers(1, n_attrs)))
        arity = draw(st.integers(1, min(4, budget[0])))
        budget[0] -= arity
        kids = []
        for _ in range(arity):
            budget[0] += 1
            kids.append(node(depth + 1))
        return Inner(draw(st.integers(1, arity)), tuple(kids))

    return AccessTree(node(0))


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE:
        terminalreporter.write_line(line)


_INNERMOST = re.compile(r"(and|or|thresh)\(([0-9, ]*)\)")


def evaluate_oracle(text, att):
    """Satisfaction by textual rewriting, independent of the tree code.

    Leaves become 0/1, then innermost gates collapse to 0/1 until one digit
    remains.
    """
    s = re.sub(r"att(\d+)", lambda m: "1" if int(m.group(1)) in att else "0", text)

    def collapse(m):
        args = [int(x) for x in m.group(2).split(",")]
        if m.group(1) == "thresh":
            k, bits = args[0], args[1:]
        else:
            bits = args
            k = len(bits) if m.group(1) == "and" else 1
        return "1" if sum(bits) >= k else "0"

    while True:
        s2 = _INNERMOST.sub(collapse, s)
        if s2 == s:
            break
        s = s2
    assert s in ("0", "1"), s
    return s == "1"


# -- random codec instances ---------------------------------------------------

_PRIMES = {}


def _ntt_primes(n):
    if n not in _PRIMES:
        found = []
        for bits in (12, 20, 30):
            q = (1 << bits) // (2 * n) * (2 * n) + 1
            while not is_prime(q):
                q += 2 * n
            found.append(q)
        _PRIMES[n] = found
    return _PRIMES[n]


def random_params(rng):
    n = int(rng.choice([4, 8, 16, 32, 64]))
    q = int(rng.choice(_ntt_primes(n)))
    p = int(rng.choice([3, 5, 7, 11]))
    mode = ALL_MODES[int(rng.integers(4))]
    return Params(n, q, p, float(rng.uniform(0.5, 8.0)), mode)


def random_element(params, rng):
    return sample_uniform(params, rng)


def random_identity(rng):
    chars = "abcxyz019-_ éλ漢"
    return "".join(rng.choice(list(chars), size=int(rng.integers(0, 12))))


def random_instance(kind, rng):
    params = random_params(rng)
    n_attrs = int(rng.integers(1, 10))
    el = lambda: random_element(params, rng)  # noqa: E731
    if kind is Params:
        return params
    if kind is PublicKey:
        return PublicKey(params, el(), tuple(el() for _ in range(n_attrs + 1)))
    if kind is MasterSecretKey:
        return MasterSecretKey(params, el(), el(), tuple(el() for _ in range(n_attrs)))
    if kind is UserSecretKey:
        attrs = sorted(set(int(a) for a in rng.integers(1, n_attrs + 1, int(rng.integers(0, 6)))))
        return UserSecretKey(params, random_identity(rng), el(), {a: el() for a in attrs})
    if kind is Ciphertext:
        tree = random_tree(rng, n_attrs, max_leaves=16, max_depth=4)
        return Ciphertext(params, tree, {p: el() for p in tree.leaf_paths()}, el(), el())
    raise TypeError(kind)
