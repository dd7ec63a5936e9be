"""Arithmetic in R_q = Z_q[x]/(x^n + 1) and the samplers built on it.

Elements are immutable wrappers around a read-only ``int64`` numpy vector of
``n`` residues in ``[0, q)``. Multiplication goes through a negacyclic NTT,
which needs ``q = 1 (mod 2n)``; :func:`mul_schoolbook` is kept around as the
reference it is checked against.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, NotInvertible

_MAX_Q = 1 << 31  # keeps (q-1)^2 inside int64


class InverseConvention(enum.IntEnum):
    PAPER_LITERAL = 0
    EXACT_INVERSE = 1


class Noise(enum.IntEnum):
    OFF = 0
    ON = 1


@dataclass(frozen=True)
class SchemeMode:
    """Which inverse is used for attribute keys and whether error draws are live."""

    inverse: InverseConvention = InverseConvention.EXACT_INVERSE
    noise: Noise = Noise.OFF

    def to_byte(self) -> int:
        return int(self.inverse) * 2 + int(self.noise)

    @classmethod
    def from_byte(cls, value: int) -> "SchemeMode":
        if not 0 <= value <= 3:
            raise ConfigurationError(f"invalid mode byte {value}")
        return cls(InverseConvention(value >> 1), Noise(value & 1))

    @property
    def label(self) -> str:
        inv = "ExactInverse" if self.inverse is InverseConvention.EXACT_INVERSE else "PaperLiteral"
        noise = "NoiseOn" if self.noise is Noise.ON else "NoiseOff"
        return f"{inv}+{noise}"


ALL_MODES = tuple(SchemeMode(i, e) for i in InverseConvention for e in Noise)


@functools.lru_cache(maxsize=None)
def is_prime(x: int) -> bool:
    if x < 2:
        return False
    if x % 2 == 0:
        return x == 2
    for d in range(3, math.isqrt(x) + 1, 2):
        if x % d == 0:
            return False
    return True


@dataclass(frozen=True)
class Params:
    """Ring degree, moduli, error width and scheme mode.

    Validation happens on construction, so a ``Params`` instance in hand is
    always NTT-compatible.
    """

    n: int
    q: int
    p: int
    sigma: float
    mode: SchemeMode = field(default_factory=SchemeMode)

    def __post_init__(self):
        n, q, p = self.n, self.q, self.p
        if n < 4 or n & (n - 1):
            raise ConfigurationError(f"n must be a power of two >= 4, got {n}")
        if not (2 < q < _MAX_Q) or not is_prime(q):
            raise ConfigurationError(f"q must be a prime below 2^31, got {q}")
        if (q - 1) % (2 * n):
            raise ConfigurationError(f"q = {q} is not 1 mod 2n = {2 * n}; no negacyclic NTT")
        if not (2 < p < q) or not is_prime(p):
            raise ConfigurationError(f"p must be a prime with 2 < p < q, got {p}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigurationError(f"sigma must be positive, got {self.sigma}")

    @property
    def tail_bound(self) -> int:
        """Largest magnitude a Gaussian coefficient can take."""
        return math.ceil(10 * self.sigma)

    def with_mode(self, inverse: InverseConvention | None = None, noise: Noise | None = None) -> "Params":
        mode = SchemeMode(
            self.mode.inverse if inverse is None else inverse,
            self.mode.noise if noise is None else noise,
        )
        return replace(self, mode=mode)

    def same_ring(self, other: "Params") -> bool:
        return self.n == other.n and self.q == other.q


TOY = Params(n=16, q=7681, p=3, sigma=3.2)
DESK = Params(n=256, q=7681, p=3, sigma=3.2)
PRESETS = {"toy": TOY, "desk": DESK}


class RingElement:
    """An element of R_q, stored as ``n`` coefficients in ``[0, q)``."""

    __slots__ = ("params", "coeffs")

    def __init__(self, params: Params, coeffs: Iterable[int]):
        arr = np.array(coeffs, dtype=np.int64)
        if arr.shape != (params.n,):
            raise ConfigurationError(f"expected {params.n} coefficients, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= params.q):
            raise ConfigurationError("coefficients must lie in [0, q)")
        arr.flags.writeable = False
        self.params = params
        self.coeffs = arr

    @classmethod
    def _wrap(cls, params: Params, arr: np.ndarray) -> "RingElement":
        # trusted constructor: arr already reduced, owned by the caller
        obj = cls.__new__(cls)
        arr.flags.writeable = False
        obj.params = params
        obj.coeffs = arr
        return obj

    @classmethod
    def from_ints(cls, params: Params, values: Iterable[int]) -> "RingElement":
        """Reduce arbitrary (possibly negative or huge) integers mod q."""
        vals = [int(v) % params.q for v in values]
        return cls(params, vals)

    @classmethod
    def zero(cls, params: Params) -> "RingElement":
        return cls._wrap(params, np.zeros(params.n, dtype=np.int64))

    @classmethod
    def constant(cls, params: Params, c: int) -> "RingElement":
        arr = np.zeros(params.n, dtype=np.int64)
        arr[0] = c % params.q
        return cls._wrap(params, arr)

    @classmethod
    def one(cls, params: Params) -> "RingElement":
        return cls.constant(params, 1)

    def is_zero(self) -> bool:
        return not self.coeffs.any()

    def to_list(self) -> list[int]:
        return self.coeffs.tolist()

    def __eq__(self, other):
        if not isinstance(other, RingElement):
            return NotImplemented
        return self.params.same_ring(other.params) and np.array_equal(self.coeffs, other.coeffs)

    def __hash__(self):
        return hash((self.params.n, self.params.q, self.coeffs.tobytes()))

    def __repr__(self):
        body = self.to_list()
        if len(body) > 8:
            body = body[:8] + ["..."]
        return f"RingElement(n={self.params.n}, q={self.params.q}, {body})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return RingElement._wrap(self.params, (-self.coeffs) % self.params.q)

    def __mul__(self, other):
        if isinstance(other, (int, np.integer)):
            return scale(self, int(other))
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, np.integer)):
            return scale(self, int(other))
        return NotImplemented


def _check(a: RingElement, b: RingElement) -> Params:
    if not a.params.same_ring(b.params):
        raise ConfigurationError(
            f"ring mismatch: (n={a.params.n}, q={a.params.q}) vs (n={b.params.n}, q={b.params.q})"
        )
    return a.params


def add(a: RingElement, b: RingElement) -> RingElement:
    params = _check(a, b)
    return RingElement._wrap(params, (a.coeffs + b.coeffs) % params.q)


def sub(a: RingElement, b: RingElement) -> RingElement:
    params = _check(a, b)
    return RingElement._wrap(params, (a.coeffs - b.coeffs) % params.q)


def scale(a: RingElement, c: int) -> RingElement:
    q = a.params.q
    return RingElement._wrap(a.params, (a.coeffs * (c % q)) % q)


def mul_schoolbook(a: RingElement, b: RingElement) -> RingElement:
    """Full n^2 convolution folded with x^n = -1. Reference for :func:`mul`."""
    params = _check(a, b)
    n, q = params.n, params.q
    if n * (q - 1) ** 2 < 2**63:
        full = np.convolve(a.coeffs, b.coeffs)
    else:
        full = np.convolve(a.coeffs.astype(object), b.coeffs.astype(object))
    folded = full[:n].copy()
    folded[: n - 1] -= full[n:]
    out = np.array([int(v) % q for v in folded], dtype=np.int64)
    return RingElement._wrap(params, out)


def _bitrev(k: int, bits: int) -> int:
    return int(format(k, f"0{bits}b")[::-1], 2) if bits else 0


@dataclass(frozen=True)
class _NttTables:
    zetas: np.ndarray      # psi^bitrev(k)
    zetas_inv: np.ndarray  # psi^-bitrev(k)
    n_inv: int


@functools.lru_cache(maxsize=None)
def _tables(n: int, q: int) -> _NttTables:
    if (q - 1) % (2 * n):
        raise ConfigurationError(f"no primitive {2 * n}-th root of unity mod {q}")
    exp = (q - 1) // (2 * n)
    psi = None
    for g in range(2, q):
        cand = pow(g, exp, q)
        if pow(cand, n, q) == q - 1:
            psi = cand
            break
    if psi is None:
        raise ConfigurationError(f"no primitive {2 * n}-th root of unity mod {q}")
    bits = n.bit_length() - 1
    psi_inv = pow(psi, -1, q)
    zetas = np.array([pow(psi, _bitrev(k, bits), q) for k in range(n)], dtype=np.int64)
    zetas_inv = np.array([pow(psi_inv, _bitrev(k, bits), q) for k in range(n)], dtype=np.int64)
    return _NttTables(zetas, zetas_inv, pow(n, -1, q))


def _ntt(arr: np.ndarray, q: int) -> np.ndarray:
    """Forward negacyclic NTT along the last axis (bit-reversed output)."""
    n = arr.shape[-1]
    tab = _tables(n, q)
    lead = arr.shape[:-1]
    a = arr.reshape(-1, n)
    m, t = 1, n
    while m < n:
        t //= 2
        blocks = a.reshape(-1, m, 2, t)
        lo, hi = blocks[:, :, 0, :], blocks[:, :, 1, :]
        v = hi * tab.zetas[m:2 * m, None] % q
        a = np.stack(((lo + v) % q, (lo - v) % q), axis=2).reshape(-1, n)
        m *= 2
    return a.reshape(*lead, n)


def _intt(arr: np.ndarray, q: int) -> np.ndarray:
    n = arr.shape[-1]
    tab = _tables(n, q)
    lead = arr.shape[:-1]
    a = arr.reshape(-1, n)
    m, t = n, 1
    while m > 1:
        h = m // 2
        blocks = a.reshape(-1, h, 2, t)
        lo, hi = blocks[:, :, 0, :], blocks[:, :, 1, :]
        s = (lo + hi) % q
        d = (lo - hi) * tab.zetas_inv[h:m, None] % q
        a = np.stack((s, d), axis=2).reshape(-1, n)
        t *= 2
        m = h
    return (a * tab.n_inv % q).reshape(*lead, n)


def ntt_forward(a: RingElement) -> RingElement:
    """Evaluate ``a`` at the odd powers of a primitive 2n-th root (bit-reversed order)."""
    return RingElement._wrap(a.params, _ntt(a.coeffs, a.params.q))


def ntt_inverse(a_hat: RingElement) -> RingElement:
    return RingElement._wrap(a_hat.params, _intt(a_hat.coeffs, a_hat.params.q))


def pointwise(a_hat: RingElement, b_hat: RingElement) -> RingElement:
    params = _check(a_hat, b_hat)
    return RingElement._wrap(params, a_hat.coeffs * b_hat.coeffs % params.q)


def mul(a: RingElement, b: RingElement) -> RingElement:
    params = _check(a, b)
    q = params.q
    both = _ntt(np.stack((a.coeffs, b.coeffs)), q)
    return RingElement._wrap(params, _intt(both[0] * both[1] % q, q))


def mul_many(pairs: Sequence[tuple[RingElement, RingElement]]) -> list[RingElement]:
    """Batched :func:`mul`: one vectorised transform for all pairs."""
    if not pairs:
        return []
    params = pairs[0][0].params
    for x, y in pairs:
        _check(x, y)
        _check(x, pairs[0][0])
    q = params.q
    lhs = _ntt(np.stack([x.coeffs for x, _ in pairs]), q)
    rhs = _ntt(np.stack([y.coeffs for _, y in pairs]), q)
    out = _intt(lhs * rhs % q, q)
    return [RingElement._wrap(params, row.copy()) for row in out]


def is_invertible(a: RingElement) -> bool:
    return bool(np.all(_ntt(a.coeffs, a.params.q)))


def inv_q(a: RingElement) -> RingElement:
    """Inverse in R_q. Raises :class:`NotInvertible` if any NTT slot is zero."""
    q = a.params.q
    a_hat = _ntt(a.coeffs, q)
    if not np.all(a_hat):
        raise NotInvertible("element has a zero NTT evaluation")
    inv_hat = np.array([pow(int(v), q - 2, q) for v in a_hat], dtype=np.int64)
    return RingElement._wrap(a.params, _intt(inv_hat, q))


def _trim(poly: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(poly)
    return poly[: nz[-1] + 1] if nz.size else poly[:0]


def _poly_divmod(num: np.ndarray, den: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Long division over GF(p); ``den`` must be trimmed and nonzero."""
    rem = num.copy()
    quot = np.zeros(max(len(num) - len(den) + 1, 1), dtype=np.int64)
    lead_inv = pow(int(den[-1]), -1, p)
    for shift in range(len(num) - len(den), -1, -1):
        c = rem[shift + len(den) - 1] * lead_inv % p
        if c:
            quot[shift] = c
            rem[shift: shift + len(den)] = (rem[shift: shift + len(den)] - c * den) % p
    return _trim(quot), _trim(rem[: len(den) - 1])


def inv_mod_p(a: RingElement) -> RingElement:
    """Inverse of ``a mod p`` in Z_p[x]/(x^n + 1), lifted back into R_q.

    The returned coefficients lie in ``[0, p)``. Raises :class:`NotInvertible`
    when ``a`` reduces to a non-unit mod p.
    """
    params = a.params
    n, p = params.n, params.p
    modulus = np.zeros(n + 1, dtype=np.int64)
    modulus[0] = modulus[n] = 1
    r0, r1 = modulus, _trim(a.coeffs % p)
    s0, s1 = np.zeros(0, dtype=np.int64), np.ones(1, dtype=np.int64)
    # invariant: s_i * a = r_i  mod (x^n + 1, p)
    while len(r1) > 1:
        quot, rem = _poly_divmod(r0, r1, p)
        r0, r1 = r1, rem
        prod = np.convolve(quot, s1) % p
        width = max(len(prod), len(s0))
        nxt = np.zeros(width, dtype=np.int64)
        nxt[: len(s0)] += s0
        nxt[: len(prod)] -= prod
        s0, s1 = s1, _trim(nxt % p)
    if len(r1) == 0:
        raise NotInvertible(f"element is not a unit modulo (x^n + 1, {p})")
    out = np.zeros(n, dtype=np.int64)
    out[: len(s1)] = s1 * pow(int(r1[0]), -1, p) % p
    return RingElement._wrap(params, out)


def center(a: RingElement) -> np.ndarray:
    """Signed representatives in (-q/2, q/2]."""
    q = a.params.q
    c = a.coeffs.copy()
    c[c > q // 2] -= q
    return c


def reduce(params: Params, values: Iterable[int]) -> RingElement:
    """Inverse of :func:`center`: map signed integers back into [0, q)."""
    arr = np.asarray(list(values), dtype=np.int64)
    return RingElement(params, arr % params.q)


def sample_uniform(params: Params, rng: np.random.Generator) -> RingElement:
    return RingElement._wrap(params, rng.integers(0, params.q, size=params.n, dtype=np.int64))


@functools.lru_cache(maxsize=None)
def _gaussian_table(sigma: float, bound: int) -> tuple[np.ndarray, np.ndarray]:
    support = np.arange(-bound, bound + 1, dtype=np.int64)
    weights = np.exp(-(support.astype(float) ** 2) / (2.0 * sigma * sigma))
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return support, cdf


def sample_gaussian_ints(params: Params, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Signed draws from the discrete Gaussian ``exp(-x^2 / 2 sigma^2)`` on ``[-B, B]``."""
    support, cdf = _gaussian_table(float(params.sigma), params.tail_bound)
    u = rng.random(params.n if size is None else size)
    idx = np.searchsorted(cdf, u, side="right")
    return support[np.minimum(idx, len(support) - 1)]


def sample_gaussian(params: Params, rng: np.random.Generator) -> RingElement:
    return RingElement._wrap(params, sample_gaussian_ints(params, rng) % params.q)
