"""Binary envelopes for parameters, keys, ciphertexts and CLI containers.

Every envelope starts with::

    magic   6 bytes  b"RTABE1"
    kind    u8       see ``Kind``
    mode    u8       inverse convention * 2 + noise flag
    n       u32
    q       u64
    p       u64
    sigma   f64

followed by a kind-specific body. Integers are little-endian. Ring elements
are ``n`` fixed-width coefficients, the width being the smallest of 2, 4 or
8 bytes that holds ``q - 1``. Counts are u32.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import AbeError, DecodeError
from .policy import AccessTree, Inner, Leaf
from .ring import Params, RingElement, SchemeMode
from .scheme import Ciphertext, IdentityRecord, MasterSecretKey, PublicKey, UserSecretKey

MAGIC = b"RTABE1"
MAX_TREE_DEPTH = 256


class Kind(enum.IntEnum):
    PARAMS = 1
    PUBLIC_KEY = 2
    MASTER_SECRET_KEY = 3
    USER_SECRET_KEY = 4
    CIPHERTEXT = 5
    CONTAINER = 6
    IDENTITY_RECORD = 7


@dataclass(frozen=True)
class Container:
    """Multi-block ciphertext file written by the CLI."""

    params: Params
    blocks: tuple[Ciphertext, ...]
    length: int  # plaintext byte count


Encodable = Union[Params, PublicKey, MasterSecretKey, UserSecretKey, Ciphertext,
                  Container, IdentityRecord]

_HEAD = struct.Struct("<6sBBIQQd")


def coeff_width(q: int) -> int:
    for width in (2, 4, 8):
        if q - 1 < 1 << (8 * width):
            return width
    raise ValueError("modulus too large")


_DTYPES = {2: "<u2", 4: "<u4", 8: "<u8"}


# ---------------------------------------------------------------------------
# encoding

class _Writer:
    def __init__(self, params: Params):
        self.params = params
        self.parts: list[bytes] = []

    def u8(self, v):
        self.parts.append(struct.pack("<B", v))

    def u32(self, v):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v):
        self.parts.append(struct.pack("<Q", v))

    def raw(self, b):
        self.parts.append(b)

    def elem(self, e: RingElement):
        if not self.params.same_ring(e.params):
            raise ValueError("element ring differs from envelope parameters")
        self.parts.append(e.coeffs.astype(_DTYPES[coeff_width(self.params.q)]).tobytes())

    def text(self, s: str):
        data = s.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def tree(self, tree: AccessTree):
        for _, node in tree.walk():
            if isinstance(node, Leaf):
                self.u8(0)
                self.u32(1)
                self.u32(0)
                self.u32(node.attribute)
            else:
                self.u8(1)
                self.u32(node.threshold)
                self.u32(len(node.children))

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


def _header(kind: Kind, params: Params) -> bytes:
    return _HEAD.pack(MAGIC, kind, params.mode.to_byte(), params.n, params.q, params.p, params.sigma)


def encode(obj: Encodable) -> bytes:
    if isinstance(obj, Params):
        return _header(Kind.PARAMS, obj)
    params = obj.params if not isinstance(obj, IdentityRecord) else obj.u.params
    w = _Writer(params)
    if isinstance(obj, PublicKey):
        kind = Kind.PUBLIC_KEY
        w.elem(obj.a_prime)
        w.u32(len(obj.pk))
        for e in obj.pk:
            w.elem(e)
    elif isinstance(obj, MasterSecretKey):
        kind = Kind.MASTER_SECRET_KEY
        w.elem(obj.s)
        w.elem(obj.a)
        w.u32(len(obj.a_attrs))
        for e in obj.a_attrs:
            w.elem(e)
    elif isinstance(obj, UserSecretKey):
        kind = Kind.USER_SECRET_KEY
        w.text(obj.identity)
        w.elem(obj.sk_u)
        w.u32(len(obj.per_attr))
        for attr in sorted(obj.per_attr):
            w.u32(attr)
            w.elem(obj.per_attr[attr])
    elif isinstance(obj, Ciphertext):
        kind = Kind.CIPHERTEXT
        w.tree(obj.tree)
        paths = obj.tree.leaf_paths()
        w.u32(len(paths))
        for path in paths:
            w.elem(obj.c_leaves[path])
        w.elem(obj.c_prime)
        w.elem(obj.c_body)
    elif isinstance(obj, Container):
        kind = Kind.CONTAINER
        w.u32(len(obj.blocks))
        for block in obj.blocks:
            w.raw(encode(block))
        w.u64(obj.length)
    elif isinstance(obj, IdentityRecord):
        kind = Kind.IDENTITY_RECORD
        w.text(obj.identity)
        w.elem(obj.u)
        w.elem(obj.sk_u)
        w.u32(len(obj.attributes))
        for attr in sorted(obj.attributes):
            w.u32(attr)
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")
    return _header(kind, params) + w.getvalue()


# ---------------------------------------------------------------------------
# decoding

class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = memoryview(data)
        self.pos = pos
        self.params: Params | None = None

    def need(self, size: int, what: str) -> memoryview:
        if self.pos + size > len(self.data):
            raise DecodeError(f"truncated input while reading {what}", self.pos)
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def u8(self, what):
        return self.need(1, what)[0]

    def u32(self, what):
        return struct.unpack("<I", self.need(4, what))[0]

    def u64(self, what):
        return struct.unpack("<Q", self.need(8, what))[0]

    def text(self, what):
        start = self.pos
        size = self.u32(what)
        try:
            return bytes(self.need(size, what)).decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(f"{what} is not valid UTF-8", start) from None

    def elem(self, what) -> RingElement:
        params = self.params
        width = coeff_width(params.q)
        start = self.pos
        raw = self.need(width * params.n, what)
        stored = np.frombuffer(raw, dtype=_DTYPES[width])
        if stored.max(initial=0) >= params.q:
            raise DecodeError(f"{what} has a coefficient >= q", start)
        return RingElement._wrap(params, stored.astype(np.int64))

    def count(self, what, limit=None):
        start = self.pos
        c = self.u32(what)
        if limit is not None and c > limit:
            raise DecodeError(f"{what} {c} exceeds remaining input", start)
        return c

    def tree(self) -> AccessTree:
        def node(depth):
            if depth > MAX_TREE_DEPTH:
                raise DecodeError("access tree too deep", self.pos)
            start = self.pos
            tag = self.u8("node tag")
            k = self.u32("threshold")
            arity = self.u32("child count")
            if tag == 0:
                attr_at = self.pos
                attr = self.u32("attribute")
                if k != 1 or arity != 0:
                    raise DecodeError("leaf must have threshold 1 and no children", start)
                if attr < 1:
                    raise DecodeError("attribute ids start at 1", attr_at)
                return Leaf(attr)
            if tag != 1:
                raise DecodeError(f"unknown node tag {tag}", start)
            if arity < 1 or not 1 <= k <= arity:
                raise DecodeError(f"threshold {k} invalid for {arity} children", start)
            if arity > len(self.data) - self.pos:
                raise DecodeError("child count exceeds remaining input", start)
            return Inner(k, tuple(node(depth + 1) for _ in range(arity)))

        return AccessTree(node(0))


def _read_header(r: _Reader) -> Kind:
    start = r.pos
    if len(r.data) - start < len(MAGIC) or bytes(r.data[start:start + len(MAGIC)]) != MAGIC:
        raise DecodeError("bad magic", start)
    magic, kind, mode, n, q, p, sigma = _HEAD.unpack(r.need(_HEAD.size, "header"))
    try:
        kind = Kind(kind)
    except ValueError:
        raise DecodeError(f"unknown envelope kind {kind}", start + 6) from None
    try:
        r.params = Params(n, q, p, sigma, SchemeMode.from_byte(mode))
    except AbeError as exc:
        raise DecodeError(f"invalid parameters: {exc}", start + 7) from None
    return kind


def _read_envelope(r: _Reader) -> Encodable:
    kind = _read_header(r)
    params = r.params
    if kind is Kind.PARAMS:
        return params
    if kind is Kind.PUBLIC_KEY:
        a_prime = r.elem("a'")
        at = r.pos
        count = r.count("public key count")
        if count < 2:
            raise DecodeError("public key needs PK_0 and at least one attribute", at)
        return PublicKey(params, a_prime, tuple(r.elem(f"PK_{i}") for i in range(count)))
    if kind is Kind.MASTER_SECRET_KEY:
        s = r.elem("s")
        a = r.elem("a")
        at = r.pos
        count = r.count("attribute count")
        if count < 1:
            raise DecodeError("master key needs at least one attribute", at)
        return MasterSecretKey(params, s, a, tuple(r.elem(f"a_{i + 1}") for i in range(count)))
    if kind is Kind.USER_SECRET_KEY:
        identity = r.text("identity")
        sk_u = r.elem("SK_u")
        count = r.count("attribute count")
        per_attr = {}
        prev = 0
        for _ in range(count):
            at = r.pos
            attr = r.u32("attribute")
            if attr <= prev:
                raise DecodeError("attributes must be positive and strictly increasing", at)
            prev = attr
            per_attr[attr] = r.elem(f"SK_{attr},u")
        return UserSecretKey(params, identity, sk_u, per_attr)
    if kind is Kind.CIPHERTEXT:
        tree = r.tree()
        paths = tree.leaf_paths()
        at = r.pos
        count = r.count("leaf count")
        if count != len(paths):
            raise DecodeError(f"{count} leaf components for {len(paths)} leaves", at)
        c_leaves = {path: r.elem(f"C_{path}") for path in paths}
        return Ciphertext(params, tree, c_leaves, r.elem("C'"), r.elem("C"))
    if kind is Kind.CONTAINER:
        count = r.count("block count")
        blocks = []
        for _ in range(count):
            at = r.pos
            block = _read_envelope(r)
            if not isinstance(block, Ciphertext) or block.params != params:
                raise DecodeError("container block is not a matching ciphertext", at)
            blocks.append(block)
            r.params = params
        return Container(params, tuple(blocks), r.u64("original length"))
    if kind is Kind.IDENTITY_RECORD:
        identity = r.text("identity")
        u = r.elem("u")
        sk_u = r.elem("SK_u")
        count = r.count("attribute count")
        attrs = set()
        prev = 0
        for _ in range(count):
            at = r.pos
            attr = r.u32("attribute")
            if attr <= prev:
                raise DecodeError("attributes must be positive and strictly increasing", at)
            prev = attr
            attrs.add(attr)
        return IdentityRecord(identity, u, sk_u, attrs)
    raise DecodeError(f"unhandled kind {kind}", 6)  # pragma: no cover


def decode(data: bytes) -> Encodable:
    """Parse exactly one envelope; trailing bytes are an error."""
    r = _Reader(bytes(data))
    obj = _read_envelope(r)
    if r.pos != len(r.data):
        raise DecodeError("trailing bytes after envelope", r.pos)
    return obj


def decode_as(data: bytes, cls: type):
    obj = decode(data)
    if not isinstance(obj, cls):
        raise DecodeError(f"expected {cls.__name__}, found {type(obj).__name__}", 6)
    return obj
