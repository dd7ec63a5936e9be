"""Command-line front end: ``rlwe-cpabe <command> ...``.

Exit codes: 0 success, 2 usage, 3 not authorized, 4 malformed input,
5 internal or decryption failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, codec, game
from .codec import Container, decode_as
from .errors import AbeError, DecodeError, NotAuthorized, PolicyError, PolicySyntaxError
from .policy import evaluate, parse_policy
from .ring import PRESETS, InverseConvention, Noise
from .scheme import (IdentityRegistry, MasterSecretKey, PublicKey, UserSecretKey,
                     decrypt, encrypt, keygen, max_payload, message_embed,
                     message_extract, setup)

EXIT_OK, EXIT_USAGE, EXIT_UNAUTHORIZED, EXIT_MALFORMED, EXIT_INTERNAL = 0, 2, 3, 4, 5

ATTR_MAP = "attrs.map"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _rng(seed):
    return np.random.default_rng(seed)


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_USAGE) from None


def _write(path, data: bytes) -> None:
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror}", EXIT_USAGE) from None


def load_attr_map(directory) -> dict[str, int]:
    path = Path(directory) / ATTR_MAP
    if not path.exists():
        return {}
    names = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, ident = line.partition("=")
        if not sep or not ident.strip().isdigit():
            raise CliError(f"{path}:{lineno}: expected name=id", EXIT_MALFORMED)
        names[name.strip()] = int(ident)
    return names


def parse_attr_list(text: str, names: dict[str, int], n_attrs: int) -> list[int]:
    out = []
    for item in filter(None, (t.strip() for t in text.split(","))):
        if item.isdigit():
            attr = int(item)
        elif item in names:
            attr = names[item]
        else:
            raise CliError(f"unknown attribute {item!r}", EXIT_USAGE)
        if not 1 <= attr <= n_attrs:
            raise CliError(f"attribute {attr} outside 1..{n_attrs}", EXIT_USAGE)
        out.append(attr)
    return out


def _registry_dir(authority) -> Path:
    return Path(authority) / "registry"


def _record_path(authority, identity: str) -> Path:
    return _registry_dir(authority) / (identity.encode("utf-8").hex() + ".bin")


def load_registry(authority) -> IdentityRegistry:
    records = []
    rdir = _registry_dir(authority)
    if rdir.is_dir():
        for f in sorted(rdir.glob("*.bin")):
            records.append(decode_as(f.read_bytes(), codec.IdentityRecord))
    return IdentityRegistry(records)


# ---------------------------------------------------------------------------
# commands

def cmd_setup(args) -> int:
    params = PRESETS[args.params].with_mode(
        InverseConvention.EXACT_INVERSE if args.inverse == "exact" else InverseConvention.PAPER_LITERAL,
        Noise.ON if args.noise == "on" else Noise.OFF,
    )
    names = [n.strip() for n in args.names.split(",")] if args.names else []
    if names and len(names) != args.attrs:
        raise CliError(f"--names lists {len(names)} names for {args.attrs} attributes", EXIT_USAGE)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _registry_dir(out).mkdir(exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc.strerror}", EXIT_USAGE) from None
    pk, msk = setup(params, args.attrs, _rng(args.seed))
    _write(out / "pk.bin", codec.encode(pk))
    _write(out / "msk.bin", codec.encode(msk))
    for stale in _registry_dir(out).glob("*.bin"):
        stale.unlink()
    lines = [f"{name}={i}" for i, name in enumerate(names, 1)] or [f"att{i}={i}" for i in range(1, args.attrs + 1)]
    _write(out / ATTR_MAP, ("\n".join(lines) + "\n").encode())
    print(f"n={params.n} q={params.q} p={params.p} sigma={params.sigma} mode={params.mode.label}")
    print(f"attributes={args.attrs} payload/block={max_payload(params)} bytes")
    print(f"wrote {out / 'pk.bin'} and {out / 'msk.bin'}")
    return EXIT_OK


def cmd_keygen(args) -> int:
    auth = Path(args.authority)
    if not (auth / "msk.bin").exists():
        raise CliError(f"{auth} is not an authority directory", EXIT_USAGE)
    msk = decode_as(_read(auth / "msk.bin"), MasterSecretKey)
    attrs = parse_attr_list(args.attrs, load_attr_map(auth), msk.n_attrs)
    if not attrs:
        raise CliError("no attributes requested", EXIT_USAGE)
    registry = load_registry(auth)
    usk = keygen(msk, args.identity, attrs, _rng(args.seed), registry)
    _write(_record_path(auth, args.identity), codec.encode(registry.get(args.identity)))
    _write(args.out, codec.encode(usk))
    print(f"issued {sorted(usk.attributes)} to {args.identity!r}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    pk = decode_as(_read(args.pk), PublicKey)
    names = load_attr_map(Path(args.pk).parent)
    tree = parse_policy(args.policy, n_attrs=pk.n_attrs, names=names)
    data = _read(args.input)
    params = pk.params
    size = max_payload(params)
    rng = _rng(args.seed)
    blocks = []
    for start in range(0, len(data), size):
        blocks.append(encrypt(pk, message_embed(params, data[start:start + size]), tree, rng))
    _write(args.out, codec.encode(Container(params, tuple(blocks), len(data))))
    return EXIT_OK


def cmd_decrypt(args) -> int:
    usk = decode_as(_read(args.key), UserSecretKey)
    pk = decode_as(_read(args.pk), PublicKey)
    cont = decode_as(_read(args.input), Container)
    out = bytearray()
    for block in cont.blocks:
        out += message_extract(decrypt(block, usk, pk))
    if len(out) != cont.length:
        raise CliError("decryption produced the wrong length; wrong key or noisy mode", EXIT_INTERNAL)
    _write(args.out, bytes(out))
    return EXIT_OK


def cmd_policy_check(args) -> int:
    names = load_attr_map(Path(args.pk).parent) if args.pk else {}
    tree = parse_policy(args.policy, names=names)
    attrs = parse_attr_list(args.attrs, names, sys.maxsize) if args.attrs else []
    print("satisfied" if evaluate(tree, attrs) else "unsatisfied")
    return EXIT_OK


def cmd_bench(args) -> int:
    params = PRESETS[args.params]
    print(f"{'algorithm':<10} {'median_ms':>10} {'p95_ms':>10}   ({args.trials} trials, {params.mode.label})")
    for t in analysis.benchmark(params, args.trials, args.seed, args.attrs):
        print(f"{t.name:<10} {t.median * 1e3:>10.3f} {t.p95 * 1e3:>10.3f}")
    return EXIT_OK


def _print_summary(s: game.Summary) -> None:
    lo, hi = s.interval()
    print(f"games={s.games} wins={s.wins} losses={s.losses} aborts={s.aborts} invalid={s.invalid}")
    print(f"win_rate={s.win_rate:.4f} ci3se=[{lo:.4f}, {hi:.4f}] null_band=[{0.5 - 3 * s.null_stderr:.4f}, "
          f"{0.5 + 3 * s.null_stderr:.4f}]")


def cmd_game(args) -> int:
    params = PRESETS[args.params]
    records = game.run_trials(args.adversary, params, args.attrs, args.trials,
                              0 if args.seed is None else args.seed, args.workers)
    if args.out:
        _write(args.out, game.to_jsonl(records).encode())
    _print_summary(game.summarize(records))
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        records = game.from_jsonl(_read(args.input).decode("utf-8"))
    except (ValueError, KeyError) as exc:
        raise CliError(f"malformed trial records: {exc}", EXIT_MALFORMED) from None
    _print_summary(game.summarize(records))
    return EXIT_OK


def cmd_noise_report(args) -> int:
    params = PRESETS[args.params]
    seed = 0 if args.seed is None else args.seed
    print(f"{'mode':<24} {'trials':>7} {'failures':>9} {'rate':>7}")
    for row in analysis.noise_report(params, args.trials, seed, args.attrs):
        print(f"{row.mode.label:<24} {row.trials:>7} {row.failures:>9} {row.rate:>7.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlwe-cpabe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def seeded(p):
        p.add_argument("--seed", type=int, default=None, help="deterministic RNG seed")
        return p

    p = seeded(sub.add_parser("setup", help="create a key authority"))
    p.add_argument("--params", choices=sorted(PRESETS), default="toy")
    p.add_argument("--attrs", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--inverse", choices=("exact", "literal"), default="exact")
    p.add_argument("--noise", choices=("on", "off"), default="off")
    p.add_argument("--names", help="comma-separated attribute names, in id order")
    p.set_defaults(func=cmd_setup)

    p = seeded(sub.add_parser("keygen", help="issue a user key"))
    p.add_argument("--identity", required=True)
    p.add_argument("--attrs", required=True)
    p.add_argument("--authority", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_keygen)

    p = seeded(sub.add_parser("encrypt", help="encrypt a file under a policy"))
    p.add_argument("--pk", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="decrypt a container")
    p.add_argument("--key", required=True)
    p.add_argument("--pk", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("policy-check", help="evaluate a policy on an attribute set")
    p.add_argument("--policy", required=True)
    p.add_argument("--attrs", default="")
    p.add_argument("--pk", help="public key whose attrs.map supplies names")
    p.set_defaults(func=cmd_policy_check)

    p = seeded(sub.add_parser("bench", help="latency of each algorithm"))
    p.add_argument("--params", choices=sorted(PRESETS), default="toy")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--attrs", type=int, default=8)
    p.set_defaults(func=cmd_bench)

    p = seeded(sub.add_parser("game", help="run IND-CPA games"))
    p.add_argument("--adversary", choices=sorted(game.ADVERSARIES), default="coinflip")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--params", choices=sorted(PRESETS), default="toy")
    p.add_argument("--attrs", type=int, default=2)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write one JSON record per game")
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("report", help="summarize game records")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_report)

    p = seeded(sub.add_parser("noise-report", help="decryption failure rate per mode"))
    p.add_argument("--params", choices=sorted(PRESETS), default="toy")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--attrs", type=int, default=4)
    p.set_defaults(func=cmd_noise_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("trials", "attrs", "workers"):
        if isinstance(getattr(args, name, None), int) and getattr(args, name) < 1:
            parser.error(f"--{name} must be at least 1")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except NotAuthorized as exc:
        print(f"not authorized: {exc}", file=sys.stderr)
        return EXIT_UNAUTHORIZED
    except (PolicySyntaxError, PolicyError, DecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (AbeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
