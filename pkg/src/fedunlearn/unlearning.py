"""Calibration-based unlearning with verifiable commitments.

Removing a client's influence works in three verifiable moves: (1) the server
re-aggregates the stored retained updates with a calibrated weighting and
commits the result's chameleon hash; (2) the target's stored updates are
rewritten in place (same keys, fresh noise payloads) using its trapdoor; and
(3) a bounded number of adaptive retraining rounds walk the model forward on
retained data only, each round committed and re-verified by the targets.

The number of retraining rounds adapts to how much the targets contributed,
measured by the running mean angle between each client's update and the
aggregate, squashed through a Gompertz curve.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .chameleon import KeyPair, PublicKey, TrapdoorMismatch, ch_hash, digest_update
from .flcore import DivergenceError, GlobalModel, ModelUpdate, TrainConfig, apply_update, batches_per_round, local_train
from .ledger import Ledger, Transaction
from .offchain import OffchainStore, UnknownKey
from .seeds import derive_seed
from .simtime import CostModel, SimClock

__all__ = [
    "ContributionTracker",
    "RetrainPlan",
    "RewriteOutcome",
    "UnlearnOutcome",
    "UnlearnRequest",
    "VerificationFailure",
    "adaptive_rounds",
    "build_plan",
    "calibrate_aggregate",
    "contribution_angle",
    "global_calibrate",
    "gompertz_contribution",
    "run_unlearning",
    "unlearn_rewrite_all",
    "update_running_angle",
    "verify_calibration",
]


class VerificationFailure(RuntimeError):
    """A committed calibration hash failed re-verification."""

    def __init__(self, step: int, round: int, reason: str) -> None:
        super().__init__(f"calibration step {step} (round {round}) rejected: {reason}")
        self.step = step
        self.round = round
        self.reason = reason


@dataclass(frozen=True)
class UnlearnRequest:
    """Request to erase the listed clients' contributions.

    ``round`` names the last committed training round whose stored updates
    seed the calibration.
    """

    targets: tuple[str, ...]
    round: int
    requester: str = ""

    def __post_init__(self) -> None:
        if not self.targets:
            raise ValueError("request must name at least one target")
        if self.round < 0:
            raise ValueError("request round must be non-negative")
        object.__setattr__(self, "targets", tuple(sorted(str(t) for t in self.targets)))


def _weighted_calibration(updates, weights, total_clients: int, strict: bool) -> ModelUpdate:
    dim = updates[0].delta.shape[0]
    acc = np.zeros(dim)
    weight_sum = 0.0
    for upd in updates:
        if upd.delta.shape[0] != dim:
            raise ValueError("update dimension mismatch")
        w = float(weights[upd.client_id])
        if not w > 0:
            raise ValueError("aggregation weights must be positive")
        acc += w * upd.delta
        weight_sum += w
    denominator = weight_sum * (total_clients - 1) if strict else weight_sum
    return ModelUpdate(delta=acc / denominator, client_id="server", round=updates[0].round)


def calibrate_aggregate(updates, weights, total_clients: int, strict: bool = True) -> ModelUpdate:
    """Calibrated weighted mean of retained updates.

    With ``strict`` the weighted sum is divided by ``(total_clients - 1)``
    times the weight sum; otherwise by the weight sum alone (plain weighted
    mean).
    """
    updates = list(updates)
    if total_clients < 2:
        raise ValueError("need at least 2 clients overall")
    if not 1 <= len(updates) <= total_clients - 1:
        raise ValueError("retained update count must be in [1, total_clients - 1]")
    return _weighted_calibration(updates, weights, total_clients, strict)


def global_calibrate(model: GlobalModel, update: ModelUpdate) -> GlobalModel:
    """Apply a calibrated update to the running model."""
    calibrated = apply_update(model, update)
    if not np.isfinite(calibrated.weights).all():
        raise DivergenceError("calibrated model has non-finite parameters")
    return calibrated


def verify_calibration(
    server_pk: PublicKey,
    committed_value: int,
    committed_randomizer: int,
    retained_hashes,
    store: OffchainStore,
    weights,
    total_clients: int,
    strict: bool = True,
) -> tuple[bool, str]:
    """Recompute the calibrated aggregate from public data and compare hashes.

    Uses only public inputs: on-chain hash keys, off-chain payloads with their
    randomizers, published weights and the server's public key.
    """
    updates = []
    for client_id in sorted(retained_hashes):
        try:
            vector, _ = store.get(retained_hashes[client_id])
        except UnknownKey:
            return False, "missing-entry"
        updates.append(ModelUpdate(delta=vector, client_id=client_id, round=0))
    if not updates:
        return False, "missing-entry"
    calibrated = calibrate_aggregate(updates, weights, total_clients, strict)
    digest = digest_update(calibrated.delta, server_pk.params)
    try:
        recomputed = ch_hash(server_pk, digest, committed_randomizer)
    except ValueError:
        return False, "malformed-commitment"
    if recomputed != committed_value:
        return False, "hash-mismatch"
    return True, ""


@dataclass(frozen=True)
class RewriteOutcome:
    round: int
    client_id: str
    key: int
    success: bool
    error: str = ""


def unlearn_rewrite_all(
    targets,
    trapdoors,
    store: OffchainStore,
    ledger: Ledger,
    rng,
    clock: SimClock | None = None,
    costs: CostModel | None = None,
) -> list[RewriteOutcome]:
    """Rewrite every stored entry any target committed in any round.

    Keys (and therefore every on-chain commitment) stay unchanged; payloads
    become fresh noise.  Failures are reported per entry, not raised.
    """
    target_set = {str(t) for t in targets}
    costs = costs or CostModel()
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    outcomes = []
    entries = sorted(
        (round_, client, key)
        for (round_, client), key in ledger.state.local_hashes.items()
        if client in target_set
    )
    for round_, client, key in entries:
        if clock is not None:
            clock.charge("lr", costs.lr_ms_per_entry)
        try:
            store.rewrite_entry(key, trapdoors[client], gen)
            outcomes.append(RewriteOutcome(round_, client, key, True))
        except (TrapdoorMismatch, UnknownKey) as exc:
            outcomes.append(RewriteOutcome(round_, client, key, False, str(exc)))
    return outcomes


# ---- contribution tracking ------------------------------------------------


@dataclass
class ContributionTracker:
    """Running mean angle between each client's update and the aggregate."""

    running_angle: dict = field(default_factory=dict)  # client -> mean angle
    last_angle: dict = field(default_factory=dict)     # client -> latest angle
    rounds_seen: dict = field(default_factory=dict)    # client -> update count

    def to_record(self) -> dict:
        return {
            "running_angle": dict(self.running_angle),
            "last_angle": dict(self.last_angle),
            "rounds_seen": dict(self.rounds_seen),
        }

    @classmethod
    def from_record(cls, record: dict) -> "ContributionTracker":
        return cls(
            running_angle={k: float(v) for k, v in record["running_angle"].items()},
            last_angle={k: float(v) for k, v in record["last_angle"].items()},
            rounds_seen={k: int(v) for k, v in record["rounds_seen"].items()},
        )


def contribution_angle(local, aggregate) -> float:
    """Angle in [0, pi] between a local update and the aggregated update.

    Either vector having zero norm yields pi/2 (no usable direction).
    """
    a = local.delta if isinstance(local, ModelUpdate) else np.asarray(local, dtype=np.float64)
    b = (
        aggregate.delta
        if isinstance(aggregate, ModelUpdate)
        else np.asarray(aggregate, dtype=np.float64)
    )
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return math.pi / 2.0
    cosine = float(np.dot(a, b) / (na * nb))
    return math.acos(min(1.0, max(-1.0, cosine)))


def update_running_angle(tracker: ContributionTracker, client_id: str, angle: float, t: int) -> float:
    """Fold one more angle into the client's running mean.

    ``t`` is the 1-based update count and must advance by exactly one.
    """
    if not 0.0 <= angle <= math.pi + 1e-12:
        raise ValueError("angle out of range")
    seen = tracker.rounds_seen.get(client_id, 0)
    if t != seen + 1:
        raise ValueError(f"non-consecutive round for {client_id}: have {seen}, got {t}")
    previous = tracker.running_angle.get(client_id, 0.0)
    value = ((t - 1) / t) * previous + angle / t
    tracker.running_angle[client_id] = value
    tracker.last_angle[client_id] = angle
    tracker.rounds_seen[client_id] = t
    return value


def gompertz_contribution(mean_angle: float, alpha: float = 1.0) -> float:
    """Squash a running mean angle into a contribution score.

    ``alpha * (1 - exp(-alpha * exp(mean_angle - 1)))``: monotone in the
    angle, saturating at ``alpha``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return alpha * (1.0 - math.exp(-alpha * math.exp(mean_angle - 1.0)))


def adaptive_rounds(
    targets,
    tracker: ContributionTracker,
    alpha: float,
    total_rounds: int,
    max_rounds: int | None = None,
) -> int:
    """Retraining budget scaled down by the targets' share of contribution.

    ``ceil((1 - f_targets / f_retained) * total_rounds)`` clamped to
    ``[0, total_rounds]``; a degenerate zero retained contribution falls back
    to the full budget.
    """
    if total_rounds < 1:
        raise ValueError("total_rounds must be at least 1")
    target_set = {str(t) for t in targets}
    for t in sorted(target_set):
        if t not in tracker.running_angle:
            raise ValueError(f"no tracked contribution for target {t}")
    f_targets = sum(gompertz_contribution(tracker.running_angle[t], alpha) for t in sorted(target_set))
    retained = [c for c in tracker.running_angle if c not in target_set]
    f_retained = sum(gompertz_contribution(tracker.running_angle[c], alpha) for c in retained)
    if f_retained <= 0.0:
        rounds = total_rounds
    else:
        rounds = math.ceil((1.0 - f_targets / f_retained) * total_rounds)
        rounds = max(0, min(total_rounds, rounds))
    if max_rounds is not None:
        rounds = min(rounds, max_rounds)
    return rounds


@dataclass(frozen=True)
class RetrainPlan:
    """Adaptive retraining budget plus calibration hyperparameters."""

    adaptive_rounds: int
    calibrated_epochs: int
    alpha: float
    delta_t: float
    calibration_ratio: float

    def __post_init__(self) -> None:
        if self.adaptive_rounds < 0:
            raise ValueError("adaptive_rounds must be non-negative")
        if self.calibrated_epochs < 1:
            raise ValueError("calibrated_epochs must be at least 1")
        if not 0 < self.delta_t <= 1:
            raise ValueError("delta_t must lie in (0, 1]")
        if not 0 < self.calibration_ratio <= 1:
            raise ValueError("calibration_ratio must lie in (0, 1]")


def build_plan(
    targets,
    tracker: ContributionTracker,
    *,
    alpha: float,
    delta_t: float,
    calibration_ratio: float,
    total_rounds: int,
    local_epochs: int,
    max_rounds: int | None = None,
) -> RetrainPlan:
    rounds = adaptive_rounds(targets, tracker, alpha, total_rounds, max_rounds)
    epochs = max(1, math.ceil(calibration_ratio * local_epochs))
    return RetrainPlan(
        adaptive_rounds=rounds,
        calibrated_epochs=epochs,
        alpha=alpha,
        delta_t=delta_t,
        calibration_ratio=calibration_ratio,
    )


# ---- unlearning driver ------------------------------------------------------


@dataclass
class UnlearnOutcome:
    model: GlobalModel
    plan: RetrainPlan
    rewrites: list
    calibration_log: list  # one record per calibration step


def _charge_lv(clock, costs, entries: int) -> None:
    if clock is not None:
        clock.charge("lv", costs.lv_ms_per_entry * entries, count=entries)


def _charge_agg(clock, costs, updates: int) -> None:
    if clock is not None:
        clock.charge("agg", costs.agg_ms_per_update * updates, count=updates)


def run_unlearning(
    request: UnlearnRequest,
    ledger: Ledger,
    store: OffchainStore,
    *,
    arch,
    model: GlobalModel,
    clients,
    weights,
    train_cfg: TrainConfig,
    plan: RetrainPlan,
    server_id: str,
    server_keys: KeyPair,
    trapdoors,
    total_clients: int,
    seed: int,
    nonce_fn,
    clock: SimClock | None = None,
    costs: CostModel | None = None,
    strict_calibration: bool = True,
    time_interval: int = 0,
    tamper_round: int | None = None,
    round_hook=None,
) -> UnlearnOutcome:
    """Execute one unlearning request end to end.

    Step 0 re-aggregates the stored request-round retained updates, commits
    the calibration hash and has every target verify it.  The targets' stored
    entries are then rewritten, and ``plan.adaptive_rounds`` retraining rounds
    follow: retained clients train for the reduced epoch budget from the
    current calibrated model, scale their updates by ``delta_t``, commit, the
    server calibrates + commits, and the targets verify.  A failed
    verification aborts with :class:`VerificationFailure` naming the step.

    When ``tamper_round`` is set, the server dishonestly folds the targets'
    request-round stored updates into the aggregate at that step.
    """
    costs = costs or CostModel()
    targets = list(request.targets)
    retained = sorted(c for c in clients if c not in set(targets))
    if not retained:
        raise ValueError("no retained clients remain")
    on_chain = ledger.state.pending_requests
    if not any(
        rec["targets"] == tuple(request.targets) and rec["round"] == request.round
        for rec in on_chain
    ):
        raise ValueError("request is not committed on-chain")
    params = server_keys.pk.params
    rewrite_rng = np.random.default_rng(derive_seed(seed, "rewrite"))
    calibration_log = []

    def _submit(tx: Transaction) -> None:
        receipt = ledger.submit_tx(tx)
        if not receipt.accepted:
            raise RuntimeError(f"ledger rejected {tx.kind}: {receipt.reason}")

    def _tampered_updates(round_: int) -> list[ModelUpdate]:
        all_hashes = ledger.query_hashes(request.round)
        extras = []
        for target in targets:
            if target in all_hashes:
                vector, _ = store.get(all_hashes[target])
                extras.append(ModelUpdate(delta=vector, client_id=target, round=round_))
        return extras

    def _calibrate_and_commit(step: int, round_: int, updates) -> ModelUpdate:
        inputs = list(updates)
        _charge_agg(clock, costs, len(inputs))
        if tamper_round is not None and step == tamper_round:
            # dishonest server: fold the targets' stored updates back in,
            # bypassing the honest retained-only input validation
            inputs = inputs + _tampered_updates(round_)
            extended = dict(weights)
            for upd in inputs:
                extended.setdefault(upd.client_id, 1.0)
            calibrated = _weighted_calibration(inputs, extended, total_clients, strict_calibration)
        else:
            calibrated = calibrate_aggregate(inputs, weights, total_clients, strict_calibration)
        r = random.Random(derive_seed(seed, f"cal-randomizer:{step}")).randrange(params.q)
        key = store.put(server_id, calibrated.delta, server_keys.pk, r)
        _submit(
            Transaction.commit_calibration(round_, server_id, nonce_fn(server_id), key, r)
        )
        return calibrated

    def _targets_verify(step: int, round_: int) -> tuple[bool, str]:
        committed = ledger.state.calibration_hashes[round_]
        retained_hashes = ledger.query_hashes(round_, exclude=targets)
        verdict, why = True, ""
        for _ in targets:
            _charge_lv(clock, costs, len(retained_hashes) + 1)
            ok, reason = verify_calibration(
                server_keys.pk,
                committed["value"],
                committed["randomizer"],
                retained_hashes,
                store,
                weights,
                total_clients,
                strict_calibration,
            )
            if not ok:
                verdict, why = False, reason
        return verdict, why

    def _finish_step(step: int, round_: int, current: GlobalModel, ok: bool, reason: str):
        verification = "accept" if ok else "reject"
        calibration_log.append({"step": step, "round": round_, "verification": verification})
        if round_hook is not None:
            round_hook(step=step, round=round_, model=current, verification=verification)
        if not ok:
            raise VerificationFailure(step, round_, reason)

    # step 0: calibrate from the stored request-round updates
    retained_hashes = ledger.query_hashes(request.round, exclude=targets)
    stored_updates = []
    for cid in sorted(retained_hashes):
        vector, _ = store.get(retained_hashes[cid])
        stored_updates.append(ModelUpdate(delta=vector, client_id=cid, round=request.round))
    calibrated = _calibrate_and_commit(0, request.round, stored_updates)
    ledger.seal_block()
    current = global_calibrate(model, calibrated)
    ok, reason = _targets_verify(0, request.round)
    _finish_step(0, request.round, current, ok, reason)

    rewrites = unlearn_rewrite_all(
        targets, trapdoors, store, ledger, rewrite_rng, clock=clock, costs=costs
    )

    # adaptive retraining rounds on retained data only
    for step in range(1, plan.adaptive_rounds + 1):
        round_ = request.round + step
        local_updates = []
        for cid in retained:
            gen = np.random.default_rng(derive_seed(seed, f"cal-train:{step}:{cid}"))
            raw = local_train(current, clients[cid], train_cfg, rng=gen, epochs=plan.calibrated_epochs)
            if clock is not None:
                clock.charge(
                    "train",
                    costs.train_ms_per_batch
                    * batches_per_round(clients[cid], train_cfg, plan.calibrated_epochs),
                    count=batches_per_round(clients[cid], train_cfg, plan.calibrated_epochs),
                )
                if time_interval > 0:
                    # commit-latency cadence while calibrating; the exact
                    # meaning of this interval is uncertain, so it is charged
                    # as extra contract latency rather than extra transactions
                    extra = max(0, math.ceil(plan.calibrated_epochs / time_interval) - 1)
                    if extra:
                        clock.charge("commit", extra * costs.contract_ms, count=extra)
            scaled = ModelUpdate(
                delta=raw.delta * plan.delta_t, client_id=cid, round=round_
            )
            r = random.Random(derive_seed(seed, f"cal-local-randomizer:{step}:{cid}")).randrange(
                params.q
            )
            key = store.put(cid, scaled.delta, store.owner_key(cid), r)
            _submit(Transaction.commit_local(round_, cid, nonce_fn(cid), key))
            local_updates.append(scaled)
        ledger.seal_block()

        calibrated = _calibrate_and_commit(step, round_, local_updates)
        current = global_calibrate(current, calibrated)
        model_r = random.Random(derive_seed(seed, f"model-randomizer:{step}")).randrange(params.q)
        model_key = store.put(server_id, current.weights, server_keys.pk, model_r)
        _submit(Transaction.commit_global(round_, server_id, nonce_fn(server_id), model_key))
        ledger.seal_block()

        ok, reason = _targets_verify(step, round_)
        _finish_step(step, round_, current, ok, reason)

    return UnlearnOutcome(
        model=current, plan=plan, rewrites=rewrites, calibration_log=calibration_log
    )
