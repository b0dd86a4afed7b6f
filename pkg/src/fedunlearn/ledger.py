"""Simulated append-only ledger with contract-style state.

Blocks carry typed transactions (hash commitments, unlearning requests, key
registrations).  Contract state is a pure fold over the ordered transaction
log, so replaying a dumped chain reproduces it exactly.  Consensus is a stub:
deterministic validator rotation ("dpos") or a seeded toy hash puzzle ("pow").
Timing is simulated through an optional :class:`~fedunlearn.simtime.SimClock`.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .simtime import CostModel, SimClock

__all__ = [
    "Block",
    "ConsensusStub",
    "ContractState",
    "Ledger",
    "PowTimeout",
    "Receipt",
    "Transaction",
    "UnknownRound",
    "KIND_COMMIT_LOCAL",
    "KIND_COMMIT_GLOBAL",
    "KIND_COMMIT_CALIBRATION",
    "KIND_UNLEARN_REQUEST",
    "KIND_KEY_REGISTRATION",
]

ZERO_HASH = "0" * 64

KIND_COMMIT_LOCAL = "commit-local-hash"
KIND_COMMIT_GLOBAL = "commit-global-hash"
KIND_COMMIT_CALIBRATION = "commit-calibration-hash"
KIND_UNLEARN_REQUEST = "unlearn-request"
KIND_KEY_REGISTRATION = "public-key-registration"

COMMIT_KINDS = (KIND_COMMIT_LOCAL, KIND_COMMIT_GLOBAL, KIND_COMMIT_CALIBRATION)
ALL_KINDS = COMMIT_KINDS + (KIND_UNLEARN_REQUEST, KIND_KEY_REGISTRATION)

# payload keys holding big integers, per kind (decimal strings on the wire)
_INT_PAYLOAD_KEYS = {
    KIND_COMMIT_LOCAL: ("value",),
    KIND_COMMIT_GLOBAL: ("value",),
    KIND_COMMIT_CALIBRATION: ("value", "randomizer"),
    KIND_UNLEARN_REQUEST: (),
    KIND_KEY_REGISTRATION: ("p", "q", "g", "h"),
}


class PowTimeout(RuntimeError):
    """The proof-of-work search exhausted its attempt budget."""


class UnknownRound(KeyError):
    """No local commitments exist for the queried round."""


@dataclass(frozen=True)
class Transaction:
    """Typed ledger transaction.

    ``nonce`` is a per-client monotone counter; ``(kind, round, client_id,
    nonce)`` is unique chain-wide.  Payload contents depend on the kind.
    """

    kind: str
    round: int
    client_id: str
    payload: dict
    nonce: int

    @staticmethod
    def commit_local(round: int, client_id: str, nonce: int, value: int) -> "Transaction":
        return Transaction(KIND_COMMIT_LOCAL, round, client_id, {"value": int(value)}, nonce)

    @staticmethod
    def commit_global(round: int, client_id: str, nonce: int, value: int) -> "Transaction":
        return Transaction(KIND_COMMIT_GLOBAL, round, client_id, {"value": int(value)}, nonce)

    @staticmethod
    def commit_calibration(
        round: int, client_id: str, nonce: int, value: int, randomizer: int
    ) -> "Transaction":
        payload = {"value": int(value), "randomizer": int(randomizer)}
        return Transaction(KIND_COMMIT_CALIBRATION, round, client_id, payload, nonce)

    @staticmethod
    def unlearn_request(round: int, client_id: str, nonce: int, targets) -> "Transaction":
        payload = {"targets": sorted(str(t) for t in targets)}
        return Transaction(KIND_UNLEARN_REQUEST, round, client_id, payload, nonce)

    @staticmethod
    def key_registration(client_id: str, nonce: int, p: int, q: int, g: int, h: int) -> "Transaction":
        payload = {"p": int(p), "q": int(q), "g": int(g), "h": int(h)}
        return Transaction(KIND_KEY_REGISTRATION, 0, client_id, payload, nonce)


def tx_to_record(tx: Transaction) -> dict:
    payload = {}
    for k, v in tx.payload.items():
        payload[k] = str(v) if isinstance(v, int) else v
    return {
        "kind": tx.kind,
        "round": tx.round,
        "client": tx.client_id,
        "nonce": tx.nonce,
        "payload": payload,
    }


def tx_from_record(record: dict) -> Transaction:
    kind = record["kind"]
    payload = dict(record["payload"])
    for key in _INT_PAYLOAD_KEYS.get(kind, ()):
        payload[key] = int(payload[key])
    return Transaction(
        kind=kind,
        round=int(record["round"]),
        client_id=record["client"],
        payload=payload,
        nonce=int(record["nonce"]),
    )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    proposer: str
    consensus_proof: dict
    txs: tuple[Transaction, ...]
    hash: str


def block_digest(height: int, prev_hash: str, proposer: str, proof: dict, txs) -> str:
    content = {
        "height": height,
        "prev_hash": prev_hash,
        "proposer": proposer,
        "consensus": proof,
        "txs": [tx_to_record(tx) for tx in txs],
    }
    blob = json.dumps(content, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def block_to_record(block: Block) -> dict:
    return {
        "height": block.height,
        "prev_hash": block.prev_hash,
        "proposer": block.proposer,
        "consensus": block.consensus_proof,
        "txs": [tx_to_record(tx) for tx in block.txs],
        "hash": block.hash,
    }


def block_from_record(record: dict) -> Block:
    return Block(
        height=int(record["height"]),
        prev_hash=record["prev_hash"],
        proposer=record["proposer"],
        consensus_proof=dict(record["consensus"]),
        txs=tuple(tx_from_record(t) for t in record["txs"]),
        hash=record["hash"],
    )


def _leading_zero_bits(digest_hex: str) -> int:
    value = int(digest_hex, 16)
    return 256 - value.bit_length()


@dataclass
class ContractState:
    """Pure fold of the transaction log."""

    local_hashes: dict = field(default_factory=dict)        # (round, client) -> value
    global_hashes: dict = field(default_factory=dict)       # round -> value
    calibration_hashes: dict = field(default_factory=dict)  # round -> {value, randomizer}
    pending_requests: list = field(default_factory=list)    # ordered request records
    registered_keys: dict = field(default_factory=dict)     # client -> {p, q, g, h}

    def apply(self, tx: Transaction) -> None:
        if tx.kind == KIND_COMMIT_LOCAL:
            key = (tx.round, tx.client_id)
            if key in self.local_hashes:
                raise ValueError(f"local commitment overwrite at {key}")
            self.local_hashes[key] = tx.payload["value"]
        elif tx.kind == KIND_COMMIT_GLOBAL:
            if tx.round in self.global_hashes:
                raise ValueError(f"global commitment overwrite at round {tx.round}")
            self.global_hashes[tx.round] = tx.payload["value"]
        elif tx.kind == KIND_COMMIT_CALIBRATION:
            if tx.round in self.calibration_hashes:
                raise ValueError(f"calibration commitment overwrite at round {tx.round}")
            self.calibration_hashes[tx.round] = {
                "value": tx.payload["value"],
                "randomizer": tx.payload["randomizer"],
            }
        elif tx.kind == KIND_UNLEARN_REQUEST:
            self.pending_requests.append(
                {
                    "round": tx.round,
                    "client": tx.client_id,
                    "targets": tuple(tx.payload["targets"]),
                }
            )
        elif tx.kind == KIND_KEY_REGISTRATION:
            if tx.client_id in self.registered_keys:
                raise ValueError(f"key re-registration for {tx.client_id}")
            self.registered_keys[tx.client_id] = dict(tx.payload)
        else:
            raise ValueError(f"unknown transaction kind: {tx.kind}")

    @classmethod
    def replay(cls, blocks) -> "ContractState":
        state = cls()
        for block in blocks:
            for tx in block.txs:
                state.apply(tx)
        return state


@dataclass(frozen=True)
class ConsensusStub:
    """Deterministic consensus stand-in.

    ``dpos`` rotates through the validator list by height.  ``pow`` runs a
    seeded lockstep race: every validator tries nonces in a deterministic
    order and the first success (lowest attempt, then list order) proposes.
    """

    kind: str
    validators: tuple[str, ...]
    difficulty: int = 12
    seed: int = 0
    max_attempts: int = 1 << 22

    def __post_init__(self) -> None:
        if self.kind not in ("dpos", "pow"):
            raise ValueError("consensus kind must be 'dpos' or 'pow'")
        if not self.validators:
            raise ValueError("validator list must be non-empty")
        if self.kind == "pow" and not 1 <= self.difficulty <= 48:
            raise ValueError("toy pow difficulty must be in [1, 48]")

    def selected_server(self, height: int) -> str:
        """The unique node entitled to seal the block at ``height``."""
        if self.kind == "dpos":
            return self.validators[height % len(self.validators)]
        winner, _ = self.selection_race(height)
        return winner

    def selection_race(self, height: int) -> tuple[str, int]:
        """Returns (winner, total hash attempts spent across all racers)."""
        for attempt in range(self.max_attempts):
            for idx, validator in enumerate(self.validators):
                material = f"select|{self.seed}|{height}|{validator}|{attempt}".encode()
                digest = hashlib.sha256(material).hexdigest()
                if _leading_zero_bits(digest) >= self.difficulty:
                    return validator, attempt * len(self.validators) + idx + 1
        raise PowTimeout(f"selection race unsolved at height {height}")


@dataclass(frozen=True)
class Receipt:
    accepted: bool
    height: int | None = None
    reason: str | None = None


class Ledger:
    """Append-only block chain plus live contract state and a mempool.

    Single-writer: one proposer per height, so submissions are validated
    against both applied state and the pending pool.
    """

    def __init__(
        self,
        stub: ConsensusStub,
        clock: SimClock | None = None,
        costs: CostModel | None = None,
    ) -> None:
        self.stub = stub
        self.clock = clock
        self.costs = costs or CostModel()
        genesis_proof = {"kind": "genesis"}
        genesis_hash = block_digest(0, ZERO_HASH, "genesis", genesis_proof, ())
        self._blocks: list[Block] = [
            Block(0, ZERO_HASH, "genesis", genesis_proof, (), genesis_hash)
        ]
        self.state = ContractState()
        self._mempool: list[Transaction] = []
        self._next_nonce: dict[str, int] = {}
        self._pending_local: set[tuple[int, str]] = set()
        self._pending_global: set[int] = set()
        self._pending_calibration: set[int] = set()
        self._pending_registration: set[str] = set()

    @property
    def blocks(self) -> tuple[Block, ...]:
        return tuple(self._blocks)

    @property
    def height(self) -> int:
        return len(self._blocks) - 1

    def next_nonce(self, client_id: str) -> int:
        """The nonce the client's next transaction must carry."""
        return self._next_nonce.get(client_id, 0)

    def _charge_contract_call(self) -> None:
        if self.clock is not None:
            self.clock.charge("commit", self.costs.contract_ms)

    def _registered(self, client_id: str) -> bool:
        return client_id in self.state.registered_keys or client_id in self._pending_registration

    def _registration_params(self, client_id: str):
        if client_id in self.state.registered_keys:
            return self.state.registered_keys[client_id]
        for tx in self._mempool:
            if tx.kind == KIND_KEY_REGISTRATION and tx.client_id == client_id:
                return tx.payload
        return None

    def _validate(self, tx: Transaction) -> str | None:
        if tx.kind not in ALL_KINDS:
            return "unknown-kind"
        if tx.round < 0:
            return "malformed-payload"
        expected = self._next_nonce.get(tx.client_id, 0)
        if tx.nonce != expected:
            return "duplicate-nonce" if tx.nonce < expected else "nonce-gap"

        if tx.kind == KIND_KEY_REGISTRATION:
            if self._registered(tx.client_id):
                return "overwrite-attempt"
            p, q, g, h = (tx.payload.get(k) for k in ("p", "q", "g", "h"))
            if not all(isinstance(v, int) and v > 0 for v in (p, q, g, h)):
                return "malformed-payload"
            if (p - 1) % q != 0 or not 1 < g < p or not 1 < h < p:
                return "malformed-payload"
            if pow(g, q, p) != 1 or pow(h, q, p) != 1:
                return "malformed-payload"
            return None

        if tx.kind in COMMIT_KINDS:
            if not self._registered(tx.client_id):
                return "unknown-client"
            reg = self._registration_params(tx.client_id)
            value = tx.payload.get("value")
            if not isinstance(value, int) or not 0 < value < reg["p"]:
                return "malformed-payload"
            if pow(value, reg["q"], reg["p"]) != 1:
                return "malformed-payload"
            if tx.kind == KIND_COMMIT_LOCAL:
                key = (tx.round, tx.client_id)
                if key in self.state.local_hashes or key in self._pending_local:
                    return "overwrite-attempt"
            elif tx.kind == KIND_COMMIT_GLOBAL:
                if tx.round in self.state.global_hashes or tx.round in self._pending_global:
                    return "overwrite-attempt"
            else:
                randomizer = tx.payload.get("randomizer")
                if not isinstance(randomizer, int) or not 0 <= randomizer < reg["q"]:
                    return "malformed-payload"
                if tx.round in self.state.calibration_hashes or tx.round in self._pending_calibration:
                    return "overwrite-attempt"
            return None

        # unlearn request
        targets = tx.payload.get("targets")
        if not targets:
            return "empty-targets"
        if not all(self._registered(t) for t in targets):
            return "unknown-client"
        return None

    def submit_tx(self, tx: Transaction) -> Receipt:
        """Validate against state + pending pool; accepted transactions enter
        the next proposed block."""
        self._charge_contract_call()
        reason = self._validate(tx)
        if reason is not None:
            return Receipt(accepted=False, reason=reason)
        self._mempool.append(tx)
        self._next_nonce[tx.client_id] = tx.nonce + 1
        if tx.kind == KIND_COMMIT_LOCAL:
            self._pending_local.add((tx.round, tx.client_id))
        elif tx.kind == KIND_COMMIT_GLOBAL:
            self._pending_global.add(tx.round)
        elif tx.kind == KIND_COMMIT_CALIBRATION:
            self._pending_calibration.add(tx.round)
        elif tx.kind == KIND_KEY_REGISTRATION:
            self._pending_registration.add(tx.client_id)
        return Receipt(accepted=True, height=len(self._blocks))

    def seal_block(self, allow_empty: bool = False) -> Block:
        """Seal the pending transactions into the next block."""
        if not self._mempool and not allow_empty:
            raise ValueError("refusing to seal an empty block")
        height = len(self._blocks)
        prev_hash = self._blocks[-1].hash
        txs = tuple(self._mempool)

        if self.stub.kind == "dpos":
            proposer = self.stub.selected_server(height)
            proof = {"kind": "dpos", "slot": height % len(self.stub.validators)}
            digest = block_digest(height, prev_hash, proposer, proof, txs)
            if self.clock is not None:
                self.clock.charge("seal", self.costs.seal_dpos_ms)
        else:
            proposer, spent = self.stub.selection_race(height)
            digest = None
            proof = None
            for nonce in range(self.stub.max_attempts):
                candidate = {"kind": "pow", "selection_attempts": spent, "nonce": nonce}
                d = block_digest(height, prev_hash, proposer, candidate, txs)
                if _leading_zero_bits(d) >= self.stub.difficulty:
                    proof, digest = candidate, d
                    break
            if proof is None:
                raise PowTimeout(f"block puzzle unsolved at height {height}")
            if self.clock is not None:
                self.clock.charge("seal", (spent + proof["nonce"] + 1) * self.costs.pow_attempt_ms)

        block = Block(height, prev_hash, proposer, proof, txs, digest)
        self._blocks.append(block)
        for tx in txs:
            self.state.apply(tx)
        self._mempool.clear()
        self._pending_local.clear()
        self._pending_global.clear()
        self._pending_calibration.clear()
        self._pending_registration.clear()
        return block

    def query_hashes(self, round: int, exclude=()) -> dict[str, int]:
        """Committed local hashes for a round, minus excluded clients."""
        self._charge_contract_call()
        excluded = set(exclude)
        found = {
            client: value
            for (r, client), value in self.state.local_hashes.items()
            if r == round
        }
        if not found:
            raise UnknownRound(round)
        return {c: v for c, v in found.items() if c not in excluded}

    def verify_chain(self) -> int | None:
        """None when every block checks out, else the lowest invalid height."""
        for i, block in enumerate(self._blocks):
            recomputed = block_digest(
                block.height, block.prev_hash, block.proposer, block.consensus_proof, block.txs
            )
            if block.height != i or recomputed != block.hash:
                return i
            if i == 0:
                if block.prev_hash != ZERO_HASH:
                    return i
                continue
            if block.prev_hash != self._blocks[i - 1].hash:
                return i
            proof = block.consensus_proof
            if proof.get("kind") == "dpos":
                slot = i % len(self.stub.validators)
                if proof.get("slot") != slot or block.proposer != self.stub.validators[slot]:
                    return i
            elif proof.get("kind") == "pow":
                if _leading_zero_bits(block.hash) < self.stub.difficulty:
                    return i
            else:
                return i
        return None

    def dumps(self) -> str:
        """Line-delimited dump: one block per line, big integers as decimal strings."""
        lines = [
            json.dumps(block_to_record(b), sort_keys=True, separators=(",", ":"))
            for b in self._blocks
        ]
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(
        cls,
        path,
        stub: ConsensusStub,
        clock: SimClock | None = None,
        costs: CostModel | None = None,
    ) -> "Ledger":
        with open(path, "r", encoding="utf-8") as fh:
            blocks = [block_from_record(json.loads(line)) for line in fh if line.strip()]
        if not blocks or blocks[0].height != 0:
            raise ValueError("dump does not start at the genesis block")
        ledger = cls(stub, clock=clock, costs=costs)
        ledger._blocks = blocks
        ledger.state = ContractState.replay(blocks)
        nonces: dict[str, int] = {}
        for block in blocks:
            for tx in block.txs:
                nonces[tx.client_id] = max(nonces.get(tx.client_id, 0), tx.nonce + 1)
        ledger._next_nonce = nonces
        return ledger
