"""Stable per-subsystem seed derivation.

Subsystems (data, keys, training, rewrites, consensus, ...) draw from
independent streams derived from one master seed, so exercising one subsystem
differently (e.g. swapping the consensus stub) never perturbs the others.
"""
from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(master: int, label: str) -> int:
    blob = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(blob[:8], "little")
