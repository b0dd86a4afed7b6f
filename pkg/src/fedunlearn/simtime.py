"""Deterministic simulated-time accounting.

Wall clocks are never consulted: every operation charges a configurable cost
into a named class, so identical schedules always produce identical timing
streams (and identical emitted metrics).  Counts are tracked alongside times
so consensus-independent workloads can be compared by operation count.
"""
from __future__ import annotations

from dataclasses import dataclass

__all__ = ["CostModel", "OP_CLASSES", "SimClock"]

OP_CLASSES = ("train", "agg", "commit", "seal", "lv", "lr")


@dataclass(frozen=True)
class CostModel:
    """Unit costs in simulated milliseconds."""

    contract_ms: float = 500.0      # one contract call (commit or query)
    seal_dpos_ms: float = 100.0     # sealing a block under validator rotation
    pow_attempt_ms: float = 0.05    # per hash tried in the proof-of-work race
    train_ms_per_batch: float = 20.0
    agg_ms_per_update: float = 5.0
    lv_ms_per_entry: float = 5.0    # verification work per fetched entry
    lr_ms_per_entry: float = 5.0    # rewrite work per stored entry


class SimClock:
    """Accumulates simulated milliseconds and operation counts per class."""

    def __init__(self) -> None:
        self.times_ms: dict[str, float] = {c: 0.0 for c in OP_CLASSES}
        self.counts: dict[str, int] = {c: 0 for c in OP_CLASSES}

    def charge(self, op_class: str, ms: float, count: int = 1) -> None:
        if op_class not in self.times_ms:
            raise ValueError(f"unknown operation class: {op_class}")
        if ms < 0 or count < 0:
            raise ValueError("charges must be non-negative")
        self.times_ms[op_class] += ms
        self.counts[op_class] += count

    def total_ms(self) -> float:
        return sum(self.times_ms.values())

    def snapshot(self) -> dict[str, float]:
        return dict(self.times_ms)

    @staticmethod
    def delta(before: dict[str, float], after: dict[str, float]) -> dict[str, float]:
        return {c: after[c] - before[c] for c in after}
