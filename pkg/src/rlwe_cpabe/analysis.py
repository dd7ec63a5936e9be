"""Empirical harnesses behind the ``bench`` and ``noise-report`` commands."""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from .policy import random_tree
from .ring import ALL_MODES, Params, SchemeMode
from .scheme import IdentityRegistry, decrypt, encrypt, keygen, max_payload, message_embed, setup


@dataclass(frozen=True)
class FailureRow:
    mode: SchemeMode
    trials: int
    failures: int

    @property
    def rate(self) -> float:
        return self.failures / self.trials if self.trials else 0.0


def random_message(params: Params, rng: np.random.Generator):
    size = int(rng.integers(0, max_payload(params) + 1))
    return message_embed(params, rng.integers(0, 256, size, dtype=np.uint8).tobytes())


def failure_rate(params: Params, trials: int, rng: np.random.Generator, n_attrs: int = 4) -> FailureRow:
    """Fraction of authorized decryptions that do not return the plaintext.

    Each trial encrypts a random message under a random tree and decrypts it
    with a key holding the whole attribute universe. One system is set up per
    call.
    """
    pk, msk = setup(params, n_attrs, rng)
    usk = keygen(msk, "reporter", range(1, n_attrs + 1), rng, IdentityRegistry())
    failures = 0
    for _ in range(trials):
        tree = random_tree(rng, n_attrs, max_leaves=8, max_depth=3)
        m = random_message(params, rng)
        if decrypt(encrypt(pk, m, tree, rng), usk, pk) != m:
            failures += 1
    return FailureRow(params.mode, trials, failures)


def noise_report(params: Params, trials: int, seed: int, n_attrs: int = 4) -> list[FailureRow]:
    rows = []
    for i, mode in enumerate(ALL_MODES):
        rng = np.random.default_rng([seed, i])
        rows.append(failure_rate(params.with_mode(mode.inverse, mode.noise), trials, rng, n_attrs))
    return rows


@dataclass(frozen=True)
class Timing:
    name: str
    samples: tuple[float, ...]

    @property
    def median(self) -> float:
        return statistics.median(self.samples)

    @property
    def p95(self) -> float:
        return float(np.percentile(self.samples, 95))


def benchmark(params: Params, trials: int, seed: int, n_attrs: int = 8) -> list[Timing]:
    """Wall-clock latency of each algorithm, one fresh system per trial."""
    rng = np.random.default_rng(seed)
    times: dict[str, list[float]] = {"setup": [], "keygen": [], "encrypt": [], "decrypt": []}
    clock = time.perf_counter
    for _ in range(trials):
        t0 = clock()
        pk, msk = setup(params, n_attrs, rng)
        t1 = clock()
        usk = keygen(msk, "bench", range(1, n_attrs + 1), rng)
        t2 = clock()
        tree = random_tree(rng, n_attrs, max_leaves=8, max_depth=3)
        ct = encrypt(pk, random_message(params, rng), tree, rng)
        t3 = clock()
        decrypt(ct, usk, pk)
        t4 = clock()
        for key, dt in zip(times, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
            times[key].append(dt)
    return [Timing(k, tuple(v)) for k, v in times.items()]
