"""Setup, KeyGen, Enc and Dec of the R-LWE ciphertext-policy ABE scheme.

Two knobs in :class:`~rlwe_cpabe.ring.SchemeMode` control behaviour:

* ``InverseConvention.PAPER_LITERAL`` builds attribute keys with the inverse
  of ``a_i`` modulo ``(x^n + 1, p)``, lifted to R_q.
  ``InverseConvention.EXACT_INVERSE`` uses the true inverse in R_q.
* ``Noise.OFF`` replaces every error draw with zero.

Only ``EXACT_INVERSE`` with ``Noise.OFF`` decrypts correctly in general; the
other three combinations are kept so their failure rates can be measured.
"""

from __future__ import annotations

import functools
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from . import policy
from .errors import (ConfigurationError, DecryptionFailed, NotAuthorized,
                     NotInvertible, PolicyError, SetupFailure)
from .policy import AccessTree, Path
from .ring import (InverseConvention, Noise, Params, RingElement, center,
                   inv_mod_p, inv_q, is_invertible, mul, mul_many,
                   sample_gaussian, sample_uniform, scale)

MAX_RESAMPLE = 100


@dataclass(frozen=True, eq=True)
class PublicKey:
    params: Params
    a_prime: RingElement
    pk: tuple[RingElement, ...]  # PK_0 .. PK_n

    @property
    def n_attrs(self) -> int:
        return len(self.pk) - 1


@dataclass(frozen=True)
class MasterSecretKey:
    params: Params
    s: RingElement
    a: RingElement
    a_attrs: tuple[RingElement, ...]  # a_1 .. a_n

    @property
    def n_attrs(self) -> int:
        return len(self.a_attrs)


@dataclass(frozen=True)
class UserSecretKey:
    params: Params
    identity: str
    sk_u: RingElement
    per_attr: Mapping[int, RingElement]

    @property
    def attributes(self) -> frozenset[int]:
        return frozenset(self.per_attr)


@dataclass(frozen=True)
class Ciphertext:
    params: Params
    tree: AccessTree
    c_leaves: Mapping[Path, RingElement]
    c_prime: RingElement
    c_body: RingElement


@dataclass(frozen=True)
class EncryptionTrace:
    """Randomness consumed by one encryption; exposed for tests and harnesses."""

    r: RingElement
    shares: Mapping[Path, RingElement]
    e_leaves: Mapping[Path, RingElement]
    e_prime: RingElement
    e_body: RingElement


@dataclass
class IdentityRecord:
    identity: str
    u: RingElement
    sk_u: RingElement
    attributes: set[int] = field(default_factory=set)


class IdentityRegistry:
    """Key-authority state binding each identity to one randomizer ``u``.

    Issuance for an identity happens under a lock, so concurrent requests for
    the same identity see the same ``u``.
    """

    def __init__(self, records: Iterable[IdentityRecord] = ()):
        self._records = {r.identity: r for r in records}
        self._lock = threading.RLock()

    def __contains__(self, identity):
        return identity in self._records

    def __len__(self):
        return len(self._records)

    def get(self, identity: str) -> Optional[IdentityRecord]:
        return self._records.get(identity)

    def records(self) -> list[IdentityRecord]:
        return list(self._records.values())

    @property
    def lock(self):
        return self._lock

    def _put(self, record: IdentityRecord) -> None:
        self._records[record.identity] = record


def noise(params: Params, rng: np.random.Generator) -> RingElement:
    """One draw from the error distribution, or zero when noise is off."""
    if params.mode.noise is Noise.OFF:
        return RingElement.zero(params)
    return sample_gaussian(params, rng)


def _p_noise(params: Params, rng: np.random.Generator) -> tuple[RingElement, RingElement]:
    e = noise(params, rng)
    return e, scale(e, params.p)


@functools.lru_cache(maxsize=4096)
def _cached_attr_inverse(elem: RingElement, p: int, convention: InverseConvention) -> RingElement:
    if convention is InverseConvention.EXACT_INVERSE:
        return inv_q(elem)
    return inv_mod_p(elem)


def attribute_inverse(a_i: RingElement, params: Params) -> RingElement:
    """Inverse of ``a_i`` under the active convention (mod-p lift or exact)."""
    return _cached_attr_inverse(a_i, params.p, params.mode.inverse)


def _invertible_under(elem: RingElement, params: Params, convention: InverseConvention) -> bool:
    if convention is InverseConvention.EXACT_INVERSE:
        return is_invertible(elem)
    try:
        _cached_attr_inverse(elem, params.p, convention)
    except NotInvertible:
        return False
    return True


def _sample_invertible(params: Params, rng, convention: InverseConvention, what: str) -> RingElement:
    for _ in range(MAX_RESAMPLE):
        cand = sample_uniform(params, rng)
        if _invertible_under(cand, params, convention):
            return cand
    raise SetupFailure(f"no invertible {what} after {MAX_RESAMPLE} draws")


def setup(params: Params, n_attrs: int, rng: np.random.Generator) -> tuple[PublicKey, MasterSecretKey]:
    if n_attrs < 1:
        raise ConfigurationError("the attribute universe needs at least one attribute")
    if n_attrs >= 2**32:
        raise ConfigurationError("attribute universe too large")
    s = sample_uniform(params, rng)
    a = _sample_invertible(params, rng, InverseConvention.EXACT_INVERSE, "a")
    a_prime = _sample_invertible(params, rng, InverseConvention.EXACT_INVERSE, "a'")
    a_attrs = tuple(_sample_invertible(params, rng, params.mode.inverse, f"a_{i}")
                    for i in range(1, n_attrs + 1))
    _, pe = _p_noise(params, rng)
    pk = [mul(a, s) + pe]
    for a_i in a_attrs:
        _, pe_i = _p_noise(params, rng)
        pk.append(mul(a_i, s) + pe_i)
    return (PublicKey(params, a_prime, tuple(pk)),
            MasterSecretKey(params, s, a, a_attrs))


def keygen(msk: MasterSecretKey, identity: str, attributes: Iterable[int],
           rng: np.random.Generator, registry: Optional[IdentityRegistry] = None) -> UserSecretKey:
    """Issue ``SK_u`` and one ``SK_{i,u}`` per requested attribute.

    A known identity reuses the ``u`` held in ``registry``; an unknown one gets
    a fresh uniform ``u`` that is recorded there.
    """
    params = msk.params
    att = policy.attribute_set(attributes, msk.n_attrs)
    if registry is None:
        registry = IdentityRegistry()
    with registry.lock:
        record = registry.get(identity)
        if record is None:
            u = sample_uniform(params, rng)
            _, pe = _p_noise(params, rng)
            record = IdentityRecord(identity, u, mul(u, msk.s) + pe)
            registry._put(record)
        per_attr = {}
        for i in sorted(att):
            inv = attribute_inverse(msk.a_attrs[i - 1], params)
            _, pe_i = _p_noise(params, rng)
            per_attr[i] = mul(inv, record.u) + pe_i
        record.attributes |= att
    return UserSecretKey(params, identity, record.sk_u, per_attr)


def check_message(params: Params, message: RingElement) -> None:
    if not params.same_ring(message.params):
        raise ConfigurationError("message lives in a different ring")
    if message.coeffs.max(initial=0) >= params.p:
        raise ValueError(f"message coefficients must lie in [0, {params.p})")


def encrypt_traced(pk: PublicKey, message: RingElement, tree: AccessTree,
                   rng: np.random.Generator) -> tuple[Ciphertext, EncryptionTrace]:
    """:func:`encrypt` that also returns the randomness it drew."""
    params = pk.params
    check_message(params, message)
    tree.validate(n_attrs=pk.n_attrs, q=params.q)
    r = sample_uniform(params, rng)
    shares = policy.share(tree, params, r, rng)
    paths = tree.leaf_paths()
    leaf_attr = dict(tree.leaves())
    products = mul_many([(shares[path], pk.pk[leaf_attr[path].attribute]) for path in paths]
                        + [(r, pk.a_prime), (r, pk.pk[0])])
    c_leaves, e_leaves = {}, {}
    for path, prod in zip(paths, products):
        e_leaves[path], pe = _p_noise(params, rng)
        c_leaves[path] = prod + pe
    e_prime, pe_prime = _p_noise(params, rng)
    e_body, pe_body = _p_noise(params, rng)
    c_prime = products[-2] + pe_prime
    c_body = products[-1] + pe_body + message
    ct = Ciphertext(params, tree, c_leaves, c_prime, c_body)
    return ct, EncryptionTrace(r, shares, e_leaves, e_prime, e_body)


def encrypt(pk: PublicKey, message: RingElement, tree: AccessTree,
            rng: np.random.Generator) -> Ciphertext:
    return encrypt_traced(pk, message, tree, rng)[0]


def recover_residual(ct: Ciphertext, sk_u: RingElement, per_attr: Mapping[int, RingElement],
                     pk: PublicKey) -> RingElement:
    """Compute ``C - R'`` from raw key components, skipping identity checks.

    Used by :func:`decrypt` and by collusion experiments that pool attribute
    keys from several identities. Raises :class:`NotAuthorized` if the pooled
    attributes cannot satisfy the tree.
    """
    params = pk.params
    chosen = policy.select_satisfying_subset(ct.tree, per_attr.keys())
    if chosen is None:
        raise NotAuthorized("attributes do not satisfy the ciphertext policy")
    leaf_attr = dict(ct.tree.leaves())
    order = sorted(chosen)
    prods = mul_many([(ct.c_leaves[path], per_attr[leaf_attr[path].attribute]) for path in order])
    big_r = policy.combine(ct.tree, params, dict(zip(order, prods)))
    mask = mul(mul(inv_q(pk.a_prime), sk_u - pk.pk[0]), ct.c_prime)
    return ct.c_body - (big_r - mask)


def residual_to_message(params: Params, residual: RingElement) -> RingElement:
    """Centered lift followed by reduction into ``[0, p)``."""
    return RingElement._wrap(params, center(residual) % params.p)


def decrypt(ct: Ciphertext, usk: UserSecretKey, pk: PublicKey, self_check: bool = False) -> RingElement:
    """Recover the message, or raise :class:`NotAuthorized`.

    With ``self_check`` the centered residual ``C - R'`` must fall inside the
    range a successful decryption produces: ``[0, p)`` without noise, and
    magnitude below ``q/4`` with noise. Otherwise :class:`DecryptionFailed`.
    """
    params = pk.params
    if not (params.same_ring(ct.params) and params.same_ring(usk.params)):
        raise ConfigurationError("ciphertext, key and public key use different rings")
    residual = recover_residual(ct, usk.sk_u, usk.per_attr, pk)
    if self_check:
        centered = center(residual)
        if params.mode.noise is Noise.OFF:
            ok = centered.min() >= 0 and centered.max() < params.p
        else:
            ok = np.abs(centered).max() < params.q / 4
        if not ok:
            raise DecryptionFailed("decryption residual outside the expected range")
    return residual_to_message(params, residual)


# ---------------------------------------------------------------------------
# byte payloads <-> plaintext ring elements

def max_payload(params: Params) -> int:
    """Largest byte string that :func:`message_embed` accepts."""
    space = params.p ** params.n
    length = ((space.bit_length() - 1) // 8)
    # bijective base-256 needs sum_{i=1..L} 256^i < p^n
    while length and (256 ** (length + 1) - 256) // 255 >= space:
        length -= 1
    return length


def message_embed(params: Params, data: bytes) -> RingElement:
    """Pack bytes into base-p digits, most significant digit in coefficient 0.

    The byte string is read as a bijective base-256 numeral, so leading zero
    bytes survive the round trip and the empty string maps to zero.
    """
    if len(data) > max_payload(params):
        raise ValueError(f"payload of {len(data)} bytes exceeds {max_payload(params)}")
    value = 0
    for byte in data:
        value = value * 256 + byte + 1
    digits = [0] * params.n
    for k in range(params.n - 1, -1, -1):
        value, digits[k] = divmod(value, params.p)
    return RingElement(params, digits)


def message_extract(elem: RingElement) -> bytes:
    params = elem.params
    value = 0
    for d in elem.to_list():
        if d >= params.p:
            raise ValueError("coefficient outside the message space")
        value = value * params.p + d
    out = bytearray()
    while value:
        value -= 1
        value, byte = divmod(value, 256)
        out.append(byte)
    return bytes(reversed(out))
