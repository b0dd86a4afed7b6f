"""Discrete-log chameleon hash: trapdoor commitments over a prime-order subgroup.

A hash value ``g^m * h^r mod p`` binds a message digest ``m`` for everyone who
only knows the public key ``(g, h)``, while the trapdoor holder (``x`` with
``h = g^x``) can open it to any other message by solving for a new randomizer.
All exponent arithmetic happens mod ``q``, the order of ``g``; ``p = n*q + 1``.

Every operation is a pure function of its arguments plus an explicit seed, so
parameter generation, key draws and rewrites are reproducible.
"""
from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ChHashValue",
    "ChameleonParams",
    "Digest",
    "GenerationTimeout",
    "KeyPair",
    "PublicKey",
    "Randomizer",
    "TrapdoorMismatch",
    "ch_gen",
    "ch_hash",
    "ch_rewrite",
    "ch_setup",
    "ch_verify",
    "deserialize_update",
    "digest_bytes",
    "digest_update",
    "is_probable_prime",
    "key_from_record",
    "key_to_record",
    "params_from_record",
    "params_to_record",
    "serialize_update",
]

# Message digests and randomizers live in [0, q-1]; hash values in the
# order-q subgroup of Z_p^*.
Digest = int
Randomizer = int
ChHashValue = int

MIN_LAMBDA = 4
MAX_LAMBDA = 512
MAX_EXTRA_BITS = 64


class GenerationTimeout(RuntimeError):
    """No valid parameter set was found within the retry budget."""


class TrapdoorMismatch(RuntimeError):
    """A rewrite used a trapdoor that does not open the given public key."""


def _sieve(limit: int) -> tuple[int, ...]:
    flags = bytearray([1]) * limit
    flags[0:2] = b"\x00\x00"
    for i in range(2, int(limit ** 0.5) + 1):
        if flags[i]:
            flags[i * i :: i] = b"\x00" * len(flags[i * i :: i])
    return tuple(i for i in range(limit) if flags[i])


_SMALL_PRIMES = _sieve(2048)

# Below this bound the fixed witness set is a proven-exact primality test.
_MR_EXACT_BOUND = 3_317_044_064_679_887_385_961_981
_MR_FIXED_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def is_probable_prime(n: int, rounds: int = 64) -> bool:
    """Miller-Rabin test.

    Small inputs use the fixed witness set (deterministic and exact below
    ~3.3e24).  Larger inputs additionally draw witnesses from a per-``n``
    seeded stream until ``rounds`` witnesses have been checked, so the result
    is still deterministic for a given ``n``.
    """
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n == sp:
            return True
        if n % sp == 0:
            return False
    d = n - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1

    def witness_passes(a: int) -> bool:
        v = pow(a, d, n)
        if v in (1, n - 1):
            return True
        for _ in range(s - 1):
            v = (v * v) % n
            if v == n - 1:
                return True
        return False

    for a in _MR_FIXED_WITNESSES:
        if not witness_passes(a):
            return False
    if n < _MR_EXACT_BOUND:
        return True
    extra = random.Random(n)
    for _ in range(max(0, rounds - len(_MR_FIXED_WITNESSES))):
        if not witness_passes(extra.randrange(2, n - 1)):
            return False
    return True


@dataclass(frozen=True)
class ChameleonParams:
    """Group parameters: primes ``p`` and ``q`` with ``q | p - 1`` and a
    generator ``g`` of the order-``q`` subgroup.  ``lambda_bits`` is the bit
    length of ``q``."""

    p: int
    q: int
    g: int
    lambda_bits: int

    def __post_init__(self) -> None:
        if not is_probable_prime(self.q):
            raise ValueError("q is not prime")
        if not is_probable_prime(self.p):
            raise ValueError("p is not prime")
        if (self.p - 1) % self.q != 0:
            raise ValueError("q does not divide p - 1")
        if not 1 < self.g < self.p:
            raise ValueError("generator out of range")
        if pow(self.g, self.q, self.p) != 1:
            raise ValueError("generator does not have order q")
        if self.q.bit_length() != self.lambda_bits:
            raise ValueError("lambda_bits does not match the bit length of q")


@dataclass(frozen=True)
class PublicKey:
    """Hashing key ``(g, h)`` over a parameter set."""

    params: ChameleonParams
    h: int

    def __post_init__(self) -> None:
        if not 1 < self.h < self.params.p:
            raise ValueError("h out of range")
        if pow(self.h, self.params.q, self.params.p) != 1:
            raise ValueError("h is not in the order-q subgroup")


@dataclass(frozen=True)
class KeyPair:
    """Public key plus trapdoor exponent.

    ``h == g^x`` is deliberately not enforced here: rewrite attempts with a
    foreign trapdoor must be constructible so that post-collision verification
    can reject them.  Honest pairs come from :func:`ch_gen`; use
    :meth:`is_consistent` to check the relation explicitly.
    """

    pk: PublicKey
    x: int

    def __post_init__(self) -> None:
        if not 1 <= self.x <= self.pk.params.q - 1:
            raise ValueError("trapdoor out of range")

    def is_consistent(self) -> bool:
        params = self.pk.params
        return pow(params.g, self.x, params.p) == self.pk.h


def _resolve_rng(seed: int | random.Random | None) -> random.Random:
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


def _find_prime(rng: random.Random, bits: int, budget: int) -> int | None:
    for _ in range(budget):
        cand = rng.randrange(1 << (bits - 1), 1 << bits) | 1
        if is_probable_prime(cand):
            return cand
    return None


def ch_setup(
    lambda_bits: int,
    seed: int | random.Random | None = None,
    extra_bits: int | None = None,
    max_attempts: int = 4096,
) -> ChameleonParams:
    """Generate parameters with ``q`` of exactly ``lambda_bits`` bits.

    ``p = n*q + 1`` carries between 1 and 64 more bits than ``q``; the extra
    width is drawn per attempt unless ``extra_bits`` pins it.  Raises
    :class:`GenerationTimeout` when the retry budget runs out.
    """
    if not MIN_LAMBDA <= lambda_bits <= MAX_LAMBDA:
        raise ValueError(f"lambda_bits must be in [{MIN_LAMBDA}, {MAX_LAMBDA}]")
    if extra_bits is not None and not 1 <= extra_bits <= MAX_EXTRA_BITS:
        raise ValueError(f"extra_bits must be in [1, {MAX_EXTRA_BITS}]")
    rng = _resolve_rng(seed)

    q = _find_prime(rng, lambda_bits, max_attempts)
    if q is None:
        raise GenerationTimeout("no prime q found within budget")

    for _ in range(max_attempts):
        e = extra_bits if extra_bits is not None else rng.randint(1, MAX_EXTRA_BITS)
        total = lambda_bits + e
        n_lo = ((1 << (total - 1)) - 1) // q + 1
        n_hi = ((1 << total) - 2) // q
        if n_hi < n_lo:
            continue
        n = rng.randrange(n_lo, n_hi + 1)
        if n % 2:  # q is odd, so n must be even for p = n*q + 1 to be odd
            n += 1
            if n > n_hi:
                continue
        p = n * q + 1
        if p.bit_length() != total or not is_probable_prime(p):
            continue
        for _ in range(256):
            a = rng.randrange(2, p - 1)
            g = pow(a, (p - 1) // q, p)
            if g != 1:
                return ChameleonParams(p=p, q=q, g=g, lambda_bits=lambda_bits)
    raise GenerationTimeout("no prime p = n*q + 1 found within budget")


def ch_gen(params: ChameleonParams, seed: int | random.Random | None = None) -> KeyPair:
    """Draw a trapdoor uniformly from [1, q-1] and return the key pair."""
    rng = _resolve_rng(seed)
    x = rng.randrange(params.q)
    while x == 0:  # x = 0 would make h = 1 and rewrites impossible
        x = rng.randrange(params.q)
    h = pow(params.g, x, params.p)
    return KeyPair(pk=PublicKey(params=params, h=h), x=x)


def _check_exponent(name: str, value: int, q: int) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if not 0 <= value < q:
        raise ValueError(f"{name} must lie in [0, q-1]")


def ch_hash(pk: PublicKey, m: Digest, r: Randomizer) -> ChHashValue:
    """Hash value ``g^m * h^r mod p``; deterministic in ``(pk, m, r)``."""
    params = pk.params
    _check_exponent("message digest", m, params.q)
    _check_exponent("randomizer", r, params.q)
    return (pow(params.g, m, params.p) * pow(pk.h, r, params.p)) % params.p


def ch_verify(pk: PublicKey, m: Digest, value: ChHashValue, r: Randomizer) -> bool:
    """Accept iff hashing ``(m, r)`` under ``pk`` reproduces ``value``.

    Malformed inputs reject rather than raise.
    """
    try:
        return ch_hash(pk, m, r) == value
    except (TypeError, ValueError):
        return False


def ch_rewrite(keys: KeyPair, m: Digest, m_new: Digest, r: Randomizer) -> Randomizer:
    """Collision randomizer: returns ``r_bar`` with
    ``ch_hash(pk, m_new, r_bar) == ch_hash(pk, m, r)``.

    The trapdoor inverts mod ``q``, which always exists for prime ``q`` and
    ``x != 0``.  A trapdoor that does not belong to ``keys.pk`` is detected by
    the post-collision verification and raises :class:`TrapdoorMismatch`.
    """
    q = keys.pk.params.q
    _check_exponent("message digest", m, q)
    _check_exponent("new message digest", m_new, q)
    _check_exponent("randomizer", r, q)
    x_inv = pow(keys.x, -1, q)
    r_bar = ((m - m_new) * x_inv + r) % q
    if ch_hash(keys.pk, m_new, r_bar) != ch_hash(keys.pk, m, r):
        raise TrapdoorMismatch("trapdoor does not open this public key")
    return r_bar


def serialize_update(values) -> bytes:
    """Canonical byte form of a flat float vector: u64 little-endian length
    prefix followed by the components as little-endian float64."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("update must be a flat vector")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("update contains non-finite components")
    return struct.pack("<Q", arr.size) + arr.astype("<f8", copy=False).tobytes()


def deserialize_update(data: bytes) -> np.ndarray:
    if len(data) < 8:
        raise ValueError("truncated update payload")
    (count,) = struct.unpack_from("<Q", data, 0)
    if len(data) != 8 + 8 * count:
        raise ValueError("update payload length mismatch")
    return np.frombuffer(data, dtype="<f8", count=count, offset=8).copy()


def digest_bytes(data: bytes, params: ChameleonParams) -> Digest:
    """SHA-256 of ``data`` interpreted as a big-endian integer, reduced mod q."""
    return int.from_bytes(hashlib.sha256(data).digest(), "big") % params.q


def digest_update(update, params: ChameleonParams) -> Digest:
    """Embed an update vector into [0, q-1] via its canonical serialization."""
    return digest_bytes(serialize_update(update), params)


def params_to_record(params: ChameleonParams) -> dict:
    """Decimal-string record: fields p, q, g, lambda."""
    return {
        "p": str(params.p),
        "q": str(params.q),
        "g": str(params.g),
        "lambda": str(params.lambda_bits),
    }


def params_from_record(record: dict) -> ChameleonParams:
    return ChameleonParams(
        p=int(record["p"]),
        q=int(record["q"]),
        g=int(record["g"]),
        lambda_bits=int(record["lambda"]),
    )


def key_to_record(keys: KeyPair | PublicKey, include_secret: bool = True) -> dict:
    """Decimal-string record: fields p, q, g, h and optionally x."""
    pk = keys.pk if isinstance(keys, KeyPair) else keys
    record = params_to_record(pk.params)
    record["h"] = str(pk.h)
    if include_secret and isinstance(keys, KeyPair):
        record["x"] = str(keys.x)
    return record


def key_from_record(record: dict) -> KeyPair | PublicKey:
    """Rebuild a key from a record; returns a KeyPair when ``x`` is present."""
    pk = PublicKey(params=params_from_record(record), h=int(record["h"]))
    if "x" in record:
        return KeyPair(pk=pk, x=int(record["x"]))
    return pk
