"""Content-addressed off-chain store with trapdoor rewrites.

Entries are keyed by their chameleon hash, so the on-chain commitment doubles
as the storage key.  A rewrite replaces the payload with fresh uniform noise
and solves for the collision randomizer; the key (and therefore every on-chain
reference) is unchanged while the original bytes are physically discarded.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chameleon import (
    ChHashValue,
    KeyPair,
    PublicKey,
    Randomizer,
    TrapdoorMismatch,
    ch_hash,
    ch_rewrite,
    ch_verify,
    deserialize_update,
    digest_bytes,
    serialize_update,
)

__all__ = ["OffchainStore", "StoredEntry", "UnknownKey"]

_MAGIC = b"FUO1"


class UnknownKey(KeyError):
    """No entry is stored under the requested hash key."""


@dataclass
class StoredEntry:
    key: ChHashValue
    payload: bytes          # canonical update serialization
    randomizer: Randomizer
    owner: str
    rewritten: bool = False


def _resolve_np_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class OffchainStore:
    """In-memory entry map with optional directory persistence.

    ``replacement_scale`` bounds the uniform replacement payload drawn during
    rewrites: each component lands in [-scale, scale].
    """

    def __init__(self, replacement_scale: float = 1.0) -> None:
        if not replacement_scale > 0:
            raise ValueError("replacement_scale must be positive")
        self.replacement_scale = float(replacement_scale)
        self._entries: dict[ChHashValue, StoredEntry] = {}
        self._owner_keys: dict[str, PublicKey] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def keys(self):
        return self._entries.keys()

    def register_owner(self, owner: str, pk: PublicKey) -> None:
        known = self._owner_keys.get(owner)
        if known is not None and known != pk:
            raise ValueError(f"conflicting public key for owner {owner}")
        self._owner_keys[owner] = pk

    def owner_key(self, owner: str) -> PublicKey:
        if owner not in self._owner_keys:
            raise KeyError(f"no public key registered for owner {owner}")
        return self._owner_keys[owner]

    def put(self, owner: str, payload, pk: PublicKey, r: Randomizer) -> ChHashValue:
        """Store a payload vector under its chameleon hash and return the key."""
        data = serialize_update(payload)
        digest = digest_bytes(data, pk.params)
        key = ch_hash(pk, digest, r)
        existing = self._entries.get(key)
        if existing is not None and (existing.payload != data or existing.owner != owner):
            raise RuntimeError("hash key collision between distinct entries")
        self.register_owner(owner, pk)
        self._entries[key] = StoredEntry(key=key, payload=data, randomizer=r, owner=owner)
        return key

    def get(self, key: ChHashValue) -> tuple[np.ndarray, Randomizer]:
        """Current payload vector and its current randomizer."""
        entry = self._entries.get(key)
        if entry is None:
            raise UnknownKey(key)
        return deserialize_update(entry.payload), entry.randomizer

    def entry(self, key: ChHashValue) -> StoredEntry:
        if key not in self._entries:
            raise UnknownKey(key)
        return self._entries[key]

    def payload_bytes(self, key: ChHashValue) -> bytes:
        return self.entry(key).payload

    def rewrite_entry(self, key: ChHashValue, trapdoor: int, rng) -> Randomizer:
        """Replace the payload under ``key`` with fresh uniform noise.

        The collision randomizer is verified against the owner's public key
        before anything is mutated; on mismatch the entry is untouched and
        :class:`TrapdoorMismatch` propagates.  On success the original bytes
        are discarded and the new randomizer is returned.
        """
        entry = self.entry(key)
        pk = self.owner_key(entry.owner)
        gen = _resolve_np_rng(rng)

        old_vec = deserialize_update(entry.payload)
        replacement = gen.uniform(-self.replacement_scale, self.replacement_scale, old_vec.size)
        new_data = serialize_update(replacement)

        old_digest = digest_bytes(entry.payload, pk.params)
        new_digest = digest_bytes(new_data, pk.params)
        attempt = KeyPair(pk=pk, x=trapdoor)  # foreign trapdoors are caught below
        new_r = ch_rewrite(attempt, old_digest, new_digest, entry.randomizer)
        if not ch_verify(pk, new_digest, key, new_r):
            raise TrapdoorMismatch("rewrite verification failed; entry left unchanged")

        entry.payload = new_data
        entry.randomizer = new_r
        entry.rewritten = True
        return new_r

    # ---- directory persistence ------------------------------------------

    @staticmethod
    def _encode_entry(entry: StoredEntry) -> bytes:
        r_ascii = str(entry.randomizer).encode("ascii")
        owner = entry.owner.encode("utf-8")
        return b"".join(
            [
                _MAGIC,
                struct.pack("<Q", len(entry.payload)),
                entry.payload,
                struct.pack("<I", len(r_ascii)),
                r_ascii,
                struct.pack("<I", len(owner)),
                owner,
                struct.pack("<B", 1 if entry.rewritten else 0),
            ]
        )

    @staticmethod
    def _decode_entry(key: ChHashValue, blob: bytes) -> StoredEntry:
        if blob[:4] != _MAGIC:
            raise ValueError("bad entry magic")
        offset = 4
        (payload_len,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        payload = blob[offset : offset + payload_len]
        offset += payload_len
        (r_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        randomizer = int(blob[offset : offset + r_len].decode("ascii"))
        offset += r_len
        (owner_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        owner = blob[offset : offset + owner_len].decode("utf-8")
        offset += owner_len
        (rewritten,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        if offset != len(blob):
            raise ValueError("trailing bytes in entry blob")
        return StoredEntry(
            key=key, payload=payload, randomizer=randomizer, owner=owner, rewritten=bool(rewritten)
        )

    def save_dir(self, path) -> None:
        directory = Path(path)
        directory.mkdir(parents=True, exist_ok=True)
        for stale in directory.glob("*.entry"):
            stale.unlink()
        for key, entry in self._entries.items():
            (directory / f"{key:x}.entry").write_bytes(self._encode_entry(entry))

    @classmethod
    def load_dir(cls, path, replacement_scale: float = 1.0) -> "OffchainStore":
        store = cls(replacement_scale=replacement_scale)
        directory = Path(path)
        for file in sorted(directory.glob("*.entry")):
            key = int(file.stem, 16)
            store._entries[key] = cls._decode_entry(key, file.read_bytes())
        return store
