"""Experiment orchestration: training runs, unlearning scenarios, run folders.

A run folder persists every artifact needed to audit a run offline: the flat
key/value config, per-round metrics (CSV + JSONL), the sealed chain (JSONL),
the content-addressed store, the final model checkpoint, contribution-tracker
state, public parameters/keys and a scenario summary.  ``verify_run`` replays
the chain and recomputes every committed calibration hash from those files
alone.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chameleon import (
    ChameleonParams,
    KeyPair,
    TrapdoorMismatch,
    ch_gen,
    ch_setup,
    key_from_record,
    key_to_record,
)
from .config import ConfigError, ExperimentConfig, format_config, load_config
from .data import (
    FederatedData,
    load_delimited,
    load_idx_pair,
    make_blob_clients,
    split_rows,
)
from .flcore import (
    GlobalModel,
    TrainConfig,
    apply_update,
    batches_per_round,
    evaluate,
    fedavg_aggregate,
    load_model,
    local_train,
    save_model,
)
from .ledger import ConsensusStub, Ledger, Transaction
from .metrics import MetricsRecord, emit_metrics
from .mia import mia_probe
from .models import Architecture
from .offchain import OffchainStore
from .seeds import derive_seed
from .simtime import CostModel, SimClock
from .unlearning import (
    ContributionTracker,
    UnlearnRequest,
    VerificationFailure,
    build_plan,
    contribution_angle,
    run_unlearning,
    update_running_angle,
    verify_calibration,
)

__all__ = [
    "RunState",
    "SERVER_ID",
    "ScenarioResult",
    "client_ids",
    "load_run",
    "run_training",
    "run_unlearning_scenario",
    "save_run",
    "target_ids",
    "training_result",
    "unlearn_loaded_run",
    "verify_run",
]

SERVER_ID = "server"


def client_ids(cfg: ExperimentConfig) -> list[str]:
    return [f"c{i}" for i in range(cfg.clients)]

def target_ids(cfg: ExperimentConfig) -> tuple[str, ...]:
    return tuple(sorted({f"c{int(i)}" for i in cfg.targets}))


def _cost_model(cfg: ExperimentConfig) -> CostModel:
    return CostModel(
        contract_ms=cfg.contract_latency_ms,
        seal_dpos_ms=cfg.seal_ms,
        pow_attempt_ms=cfg.pow_attempt_ms,
        train_ms_per_batch=cfg.train_ms_per_batch,
        agg_ms_per_update=cfg.agg_ms_per_update,
        lv_ms_per_entry=cfg.lv_ms_per_entry,
        lr_ms_per_entry=cfg.lr_ms_per_entry,
    )


def _consensus(cfg: ExperimentConfig) -> ConsensusStub:
    return ConsensusStub(
        kind=cfg.consensus,
        validators=tuple(client_ids(cfg)[: cfg.validator_count]),
        difficulty=cfg.pow_difficulty,
        seed=derive_seed(cfg.seed, "consensus"),
    )


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(
        learning_rate=cfg.learning_rate,
        local_epochs=cfg.local_epochs,
        batch_size=cfg.batch_size,
        rounds=cfg.rounds,
        clients=cfg.clients,
        seed=cfg.seed,
    )


def _build_data(cfg: ExperimentConfig) -> FederatedData:
    data_seed = derive_seed(cfg.seed, "data")
    if cfg.dataset == "blobs":
        return make_blob_clients(
            cfg.clients,
            target_ids(cfg),
            n_features=cfg.features,
            n_classes=cfg.classes,
            samples_per_client=cfg.samples_per_client,
            target_samples=cfg.target_samples,
            noise_sigma=cfg.noise_sigma,
            class_radius=cfg.class_radius,
            target_shift=cfg.target_shift,
            test_samples=cfg.test_samples,
            target_holdout=cfg.target_holdout,
            weight_mode=cfg.weight_mode,
            seed=data_seed,
        )
    if cfg.dataset == "idx":
        if not cfg.idx_images or not cfg.idx_labels:
            raise ConfigError("idx dataset needs idx_images and idx_labels paths")
        X, y = load_idx_pair(cfg.idx_images, cfg.idx_labels, cfg.idx_limit or None)
    else:
        if not cfg.data_path:
            raise ConfigError("delimited dataset needs data_path")
        X, y = load_delimited(cfg.data_path)
    return _partition_rows(cfg, X, y, data_seed)


def _partition_rows(cfg, X, y, seed: int) -> FederatedData:
    """Shuffle external rows into shards plus IID test/holdout splits."""
    gen = np.random.default_rng(seed)
    order = gen.permutation(X.shape[0])
    X, y = X[order], y[order]
    test_n = min(cfg.test_samples, X.shape[0] // 5)
    hold_n = min(cfg.target_holdout, X.shape[0] // 10)
    if test_n < 1 or hold_n < 1 or X.shape[0] - test_n - hold_n < cfg.clients:
        raise ConfigError("not enough rows for the requested splits")
    fed = FederatedData()
    fed.test_X, fed.test_y = X[:test_n], y[:test_n]
    fed.target_holdout_X = X[test_n : test_n + hold_n]
    fed.target_holdout_y = y[test_n : test_n + hold_n]
    fed.clients = split_rows(
        X[test_n + hold_n :],
        y[test_n + hold_n :],
        cfg.clients,
        seed=derive_seed(cfg.seed, "shards"),
        weight_mode=cfg.weight_mode,
    )
    return fed


def _architecture(cfg: ExperimentConfig, fed: FederatedData) -> Architecture:
    if cfg.dataset == "blobs":
        n_features, n_classes = cfg.features, cfg.classes
    else:
        n_features = next(iter(fed.clients.values())).X.shape[1]
        observed = max(int(ds.y.max()) for ds in fed.clients.values())
        n_classes = max(cfg.classes, observed + 1)
    return Architecture(
        kind=cfg.model,
        n_features=n_features,
        n_classes=n_classes,
        hidden=cfg.hidden_units if cfg.model == "mlp" else 0,
        activation=cfg.activation,
    )


def _member_split(fed: FederatedData, targets) -> tuple[np.ndarray, np.ndarray]:
    xs = [fed.clients[t].X for t in targets]
    ys = [fed.clients[t].y for t in targets]
    return np.concatenate(xs), np.concatenate(ys)


def _mia_calibration(fed: FederatedData) -> tuple[np.ndarray, np.ndarray]:
    # the threshold comes from retained-distribution data only, so it stays
    # put as the model forgets the target: member losses rise across a fixed
    # bar instead of dragging the bar up with them
    return fed.test_X, fed.test_y


@dataclass
class RunState:
    """Everything a live run owns; returned by :func:`run_training`."""

    cfg: ExperimentConfig
    scenario_id: str
    arch: Architecture
    fed: FederatedData
    keys: dict                     # participant/server id -> KeyPair
    ledger: Ledger
    store: OffchainStore
    clock: SimClock
    tracker: ContributionTracker
    model: GlobalModel
    participants: tuple[str, ...]
    records: list = field(default_factory=list)

    @property
    def params(self) -> ChameleonParams:
        return self.keys[SERVER_ID].pk.params

    def weight_map(self) -> dict[str, float]:
        return {cid: self.fed.clients[cid].weight for cid in self.participants}


def _submit(ledger: Ledger, tx: Transaction) -> None:
    receipt = ledger.submit_tx(tx)
    if not receipt.accepted:
        raise RuntimeError(f"ledger rejected {tx.kind} from {tx.client_id}: {receipt.reason}")


def _round_record(
    state: RunState,
    phase: str,
    round_: int,
    spent: dict[str, float],
    reference_model: GlobalModel | None = None,
    verification: str = "",
) -> MetricsRecord:
    fed = state.fed
    accuracy, loss = evaluate(state.model, fed.test_X, fed.test_y)
    member = _member_split(fed, target_ids(state.cfg))
    target_accuracy, target_loss = evaluate(state.model, *member)
    precision, recall = mia_probe(
        state.model,
        member,
        (fed.target_holdout_X, fed.target_holdout_y),
        _mia_calibration(fed),
    )
    deviation = None
    if reference_model is not None:
        deviation = float(np.linalg.norm(state.model.weights - reference_model.weights))
    return MetricsRecord(
        scenario=state.scenario_id,
        phase=phase,
        round=round_,
        accuracy=accuracy,
        loss=loss,
        target_accuracy=target_accuracy,
        target_loss=target_loss,
        mia_precision=precision,
        mia_recall=recall,
        deviation_l2=deviation,
        verification=verification,
        time_train_ms=spent["train"],
        time_agg_ms=spent["agg"],
        time_commit_ms=spent["commit"],
        time_seal_ms=spent["seal"],
        time_lv_ms=spent["lv"],
        time_lr_ms=spent["lr"],
    )


def run_training(
    cfg: ExperimentConfig,
    *,
    include_targets: bool = True,
    phase: str = "train",
    scenario_id: str | None = None,
    reference_model: GlobalModel | None = None,
) -> RunState:
    """Federated training with per-round on-chain commitments.

    Every round: each participant trains locally, stores its update delta
    under its chameleon hash and commits the hash on-chain; the block is
    sealed; the server aggregates, applies the result, stores + commits the
    new global model and seals again.  The contribution tracker folds in one
    angle per participant per round.
    """
    cfg = cfg.validate()
    master = cfg.seed
    scenario_id = scenario_id or f"{cfg.scenario}-s{cfg.seed}"
    fed = _build_data(cfg)
    targets = set(target_ids(cfg))
    participants = tuple(
        cid for cid in client_ids(cfg) if include_targets or cid not in targets
    )
    arch = _architecture(cfg, fed)
    params = ch_setup(cfg.lambda_bits, seed=derive_seed(master, "params"))
    keys = {
        cid: ch_gen(params, seed=derive_seed(master, f"key:{cid}"))
        for cid in [*client_ids(cfg), SERVER_ID]
    }
    clock = SimClock()
    costs = _cost_model(cfg)
    ledger = Ledger(_consensus(cfg), clock=clock, costs=costs)
    store = OffchainStore(replacement_scale=cfg.replacement_scale)
    for cid, pair in keys.items():
        store.register_owner(cid, pair.pk)

    state = RunState(
        cfg=cfg,
        scenario_id=scenario_id,
        arch=arch,
        fed=fed,
        keys=keys,
        ledger=ledger,
        store=store,
        clock=clock,
        tracker=ContributionTracker(),
        model=GlobalModel(
            weights=arch.init_weights(np.random.default_rng(derive_seed(master, "init"))),
            arch=arch,
            round=0,
        ),
        participants=participants,
    )

    for cid in (*participants, SERVER_ID):
        pair = keys[cid]
        _submit(
            ledger,
            Transaction.key_registration(
                cid,
                ledger.next_nonce(cid),
                pair.pk.params.p,
                pair.pk.params.q,
                pair.pk.params.g,
                pair.pk.h,
            ),
        )
    ledger.seal_block()

    train_cfg = _train_config(cfg)
    weights = state.weight_map()
    for round_ in range(cfg.rounds):
        before = clock.snapshot()
        updates = []
        for cid in participants:
            data = fed.clients[cid]
            gen = np.random.default_rng(derive_seed(master, f"train:{round_}:{cid}"))
            update = local_train(state.model, data, train_cfg, rng=gen)
            n_batches = batches_per_round(data, train_cfg)
            clock.charge("train", costs.train_ms_per_batch * n_batches, count=n_batches)
            r = random.Random(derive_seed(master, f"randomizer:{round_}:{cid}")).randrange(params.q)
            key = store.put(cid, update.delta, keys[cid].pk, r)
            _submit(ledger, Transaction.commit_local(round_, cid, ledger.next_nonce(cid), key))
            updates.append(update)
        ledger.seal_block()

        aggregate = fedavg_aggregate(updates, weights)
        clock.charge("agg", costs.agg_ms_per_update * len(updates), count=len(updates))
        for update in updates:
            update_running_angle(
                state.tracker,
                update.client_id,
                contribution_angle(update, aggregate),
                round_ + 1,
            )
        state.model = apply_update(state.model, aggregate)
        model_r = random.Random(derive_seed(master, f"global-randomizer:{round_}")).randrange(params.q)
        model_key = store.put(SERVER_ID, state.model.weights, keys[SERVER_ID].pk, model_r)
        _submit(
            ledger,
            Transaction.commit_global(round_, SERVER_ID, ledger.next_nonce(SERVER_ID), model_key),
        )
        ledger.seal_block()

        state.records.append(
            _round_record(
                state, phase, round_, SimClock.delta(before, clock.snapshot()), reference_model
            )
        )
    return state


@dataclass
class ScenarioResult:
    cfg: ExperimentConfig
    scenario_id: str
    state: RunState
    records: list
    summary: dict
    exit_code: int
    reference: RunState | None = None


def _base_summary(cfg: ExperimentConfig, state: RunState) -> dict:
    return {
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "consensus": cfg.consensus,
        "clients": cfg.clients,
        "rounds": cfg.rounds,
        "targets": list(target_ids(cfg)),
        "chain_height": state.ledger.height,
        "chain_ok": state.ledger.verify_chain() is None,
        "store_entries": len(state.store),
        "sim_time_ms": state.clock.total_ms(),
        "sim_time_by_class": state.clock.snapshot(),
        "op_counts": dict(state.clock.counts),
    }


def _record_fields(record: MetricsRecord | None, suffix: str) -> dict:
    if record is None:
        return {}
    return {
        f"accuracy_{suffix}": record.accuracy,
        f"loss_{suffix}": record.loss,
        f"target_accuracy_{suffix}": record.target_accuracy,
        f"target_loss_{suffix}": record.target_loss,
        f"mia_precision_{suffix}": record.mia_precision,
        f"mia_recall_{suffix}": record.mia_recall,
    }


def run_unlearning_scenario(cfg: ExperimentConfig, state: RunState | None = None) -> ScenarioResult:
    """Run one configured scenario end to end and summarize it.

    ``state`` may carry a previously trained run (targets included) to reuse
    for the honest/tamper/key-exposure scenarios; otherwise training runs
    first.  The returned exit code follows the CLI contract: 0 on success, 2
    when a verification-style property fails.
    """
    cfg = cfg.validate()
    if cfg.scenario == "retrain-from-scratch":
        return _retrain_scenario(cfg)
    if cfg.scenario == "no-unlearn-baseline":
        return _baseline_scenario(cfg, state)
    if cfg.scenario == "key-exposure":
        return _key_exposure_scenario(cfg, state)
    return _unlearn_flow(cfg, state)


def _retrain_scenario(cfg: ExperimentConfig) -> ScenarioResult:
    state = run_training(cfg, include_targets=False, phase="retrain")
    summary = _base_summary(cfg, state)
    summary.update(_record_fields(state.records[-1], "final"))
    return ScenarioResult(cfg, state.scenario_id, state, list(state.records), summary, 0)


def training_result(cfg: ExperimentConfig, state: RunState) -> ScenarioResult:
    """Wrap a bare training run as a saveable scenario result."""
    summary = _base_summary(cfg, state)
    summary.update(_record_fields(state.records[-1], "final"))
    return ScenarioResult(cfg, state.scenario_id, state, list(state.records), summary, 0)


def _baseline_scenario(cfg: ExperimentConfig, state: RunState | None) -> ScenarioResult:
    return training_result(cfg, state or run_training(cfg))


def _key_exposure_scenario(cfg: ExperimentConfig, state: RunState | None) -> ScenarioResult:
    state = state or run_training(cfg)
    targets = set(target_ids(cfg))
    leaked = state.keys[sorted(targets)[0]].x
    gen = np.random.default_rng(derive_seed(cfg.seed, "attack"))
    attempts = 0
    successes = 0
    for key in sorted(state.store.keys()):
        entry = state.store.entry(key)
        if entry.owner in targets:
            continue
        attempts += 1
        before = state.store.payload_bytes(key)
        try:
            state.store.rewrite_entry(key, leaked, gen)
            successes += 1
        except TrapdoorMismatch:
            if state.store.payload_bytes(key) != before:
                raise RuntimeError("rejected rewrite mutated the stored payload")
    summary = _base_summary(cfg, state)
    summary.update(_record_fields(state.records[-1], "final"))
    summary["attack_attempts"] = attempts
    summary["attack_successes"] = successes
    summary["chain_ok"] = state.ledger.verify_chain() is None
    exit_code = 0 if successes == 0 else 2
    return ScenarioResult(cfg, state.scenario_id, state, list(state.records), summary, exit_code)


def _unlearn_flow(cfg: ExperimentConfig, state: RunState | None) -> ScenarioResult:
    """Honest and tampering-server scenarios share this flow."""
    scenario_id = f"{cfg.scenario}-s{cfg.seed}"
    reference = run_training(
        cfg, include_targets=False, phase="retrain", scenario_id=scenario_id
    )
    if state is None:
        state = run_training(
            cfg, scenario_id=scenario_id, reference_model=reference.model
        )
    targets = target_ids(cfg)
    t_u = cfg.rounds - 1
    requester = targets[0]
    _submit(
        state.ledger,
        Transaction.unlearn_request(
            t_u, requester, state.ledger.next_nonce(requester), targets
        ),
    )
    state.ledger.seal_block()
    request = UnlearnRequest(targets=targets, round=t_u, requester=requester)
    plan = build_plan(
        targets,
        state.tracker,
        alpha=cfg.alpha,
        delta_t=cfg.delta_t,
        calibration_ratio=cfg.calibration_ratio,
        total_rounds=cfg.rounds,
        local_epochs=cfg.local_epochs,
        max_rounds=cfg.max_rounds or None,
    )

    unlearn_records: list[MetricsRecord] = []
    last_snap = [state.clock.snapshot()]

    def hook(*, step: int, round: int, model: GlobalModel, verification: str) -> None:
        state.model = model
        spent = SimClock.delta(last_snap[0], state.clock.snapshot())
        unlearn_records.append(
            _round_record(
                state, "unlearn", round, spent, reference.model, verification=verification
            )
        )
        last_snap[0] = state.clock.snapshot()

    pre_unlearn_ms = state.clock.total_ms()
    tamper = cfg.tamper_round if cfg.scenario == "tamper" else None
    exit_code = 0
    failure: VerificationFailure | None = None
    outcome = None
    try:
        outcome = run_unlearning(
            request,
            state.ledger,
            state.store,
            arch=state.arch,
            model=state.model,
            clients={cid: state.fed.clients[cid] for cid in state.participants},
            weights=state.weight_map(),
            train_cfg=_train_config(cfg),
            plan=plan,
            server_id=SERVER_ID,
            server_keys=state.keys[SERVER_ID],
            trapdoors={t: state.keys[t].x for t in targets},
            total_clients=cfg.clients,
            seed=cfg.seed,
            nonce_fn=state.ledger.next_nonce,
            clock=state.clock,
            costs=_cost_model(cfg),
            strict_calibration=cfg.strict_calibration,
            time_interval=cfg.time_interval,
            tamper_round=tamper,
            round_hook=hook,
        )
        state.model = outcome.model
    except VerificationFailure as exc:
        exit_code = 2
        failure = exc
    adaptive_ms = state.clock.total_ms() - pre_unlearn_ms
    full_retrain_ms = reference.clock.total_ms()
    per_round_ms = full_retrain_ms / cfg.rounds
    estimated_reduction_ms = (
        (cfg.delta_t / cfg.calibration_ratio)
        * (cfg.rounds - plan.adaptive_rounds)
        * per_round_ms
    )

    train_final = state.records[-1] if state.records else None
    unlearn_final = unlearn_records[-1] if unlearn_records else None
    summary = _base_summary(cfg, state)
    summary.update(_record_fields(train_final, "before"))
    summary.update(_record_fields(unlearn_final, "after"))
    summary.update(_record_fields(reference.records[-1], "retrain"))
    summary["request_round"] = t_u
    summary["adaptive_rounds"] = plan.adaptive_rounds
    summary["calibrated_epochs"] = plan.calibrated_epochs
    summary["adaptive_sim_ms"] = adaptive_ms
    summary["full_retrain_sim_ms"] = full_retrain_ms
    summary["measured_reduction_ms"] = full_retrain_ms - adaptive_ms
    summary["estimated_reduction_ms"] = estimated_reduction_ms
    summary["rewrites_attempted"] = len(outcome.rewrites) if outcome else 0
    summary["rewrites_succeeded"] = (
        sum(1 for r in outcome.rewrites if r.success) if outcome else 0
    )
    if failure is None:
        summary["verification"] = "all-accept"
    else:
        summary["verification"] = "reject"
        summary["failed_step"] = failure.step
        summary["failed_round"] = failure.round
        summary["failure_reason"] = failure.reason
    summary["chain_ok"] = state.ledger.verify_chain() is None
    summary["sim_time_ms"] = state.clock.total_ms()
    summary["sim_time_by_class"] = state.clock.snapshot()
    summary["op_counts"] = dict(state.clock.counts)

    records = list(state.records) + unlearn_records + list(reference.records)
    state.records = list(state.records) + unlearn_records
    return ScenarioResult(cfg, scenario_id, state, records, summary, exit_code, reference)


def unlearn_loaded_run(state: RunState) -> ScenarioResult:
    """Run an honest unlearning pass on a previously saved training run.

    Refuses runs that already carry calibration commitments (the chain is
    append-only; a second pass would collide with the committed rounds).
    """
    if state.ledger.state.calibration_hashes:
        raise ConfigError("run already contains calibration commitments")
    targets = set(target_ids(state.cfg))
    missing = [t for t in sorted(targets) if t not in state.participants]
    if missing:
        raise ConfigError(f"targets were not part of the training run: {missing}")
    return _unlearn_flow(state.cfg, state)


# ---- run folders -----------------------------------------------------------


def save_run(result: ScenarioResult, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = result.state
    (out / "config.txt").write_text(format_config(result.cfg), encoding="utf-8")
    emit_metrics(result.records, out / "metrics.csv", out / "metrics.jsonl")
    state.ledger.dump(out / "ledger.jsonl")
    state.store.save_dir(out / "store")
    save_model(state.model, out / "model.ckpt")
    (out / "tracker.json").write_text(
        json.dumps(state.tracker.to_record(), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    keys_record = {cid: key_to_record(pair) for cid, pair in state.keys.items()}
    (out / "keys.json").write_text(
        json.dumps(keys_record, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out / "summary.json").write_text(
        json.dumps(result.summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return out


def load_run(run_dir) -> RunState:
    """Rebuild a RunState from a saved run folder.

    The federated data is regenerated from the stored config (construction is
    seed-deterministic), while chain, store, keys, tracker and model come
    from the folder.
    """
    run = Path(run_dir)
    if not (run / "config.txt").exists():
        raise ConfigError(f"{run} is not a run folder (missing config.txt)")
    cfg = load_config(run / "config.txt")
    fed = _build_data(cfg)
    arch = _architecture(cfg, fed)
    keys_record = json.loads((run / "keys.json").read_text(encoding="utf-8"))
    keys = {}
    for cid, record in keys_record.items():
        pair = key_from_record(record)
        if not isinstance(pair, KeyPair):
            raise ConfigError(f"run folder key for {cid} is missing its trapdoor")
        keys[cid] = pair
    clock = SimClock()
    costs = _cost_model(cfg)
    ledger = Ledger.load(run / "ledger.jsonl", _consensus(cfg), clock=clock, costs=costs)
    store = OffchainStore.load_dir(run / "store", replacement_scale=cfg.replacement_scale)
    for cid, pair in keys.items():
        store.register_owner(cid, pair.pk)
    tracker = ContributionTracker.from_record(
        json.loads((run / "tracker.json").read_text(encoding="utf-8"))
    )
    model = load_model(run / "model.ckpt")
    participants = tuple(
        cid for cid in client_ids(cfg) if cid in ledger.state.registered_keys
    )
    return RunState(
        cfg=cfg,
        scenario_id=f"{cfg.scenario}-s{cfg.seed}",
        arch=arch,
        fed=fed,
        keys=keys,
        ledger=ledger,
        store=store,
        clock=clock,
        tracker=tracker,
        model=model,
        participants=participants,
    )


def _targets_for_round(requests: list[dict], round_: int) -> tuple[str, ...] | None:
    chosen = None
    for record in requests:
        if record["round"] <= round_:
            chosen = record["targets"]
    return tuple(chosen) if chosen is not None else None


def verify_run(state: RunState) -> tuple[bool, list[dict]]:
    """Audit a run from public data: chain integrity + every calibration hash.

    Returns (ok, detail rows).  Each calibration commitment is recomputed
    from the on-chain retained hash keys, the off-chain payloads and the
    published weights, exactly as a verifying target would.
    """
    details: list[dict] = []
    bad_height = state.ledger.verify_chain()
    details.append(
        {
            "check": "chain",
            "ok": bad_height is None,
            "detail": "intact" if bad_height is None else f"invalid at height {bad_height}",
        }
    )
    contract = state.ledger.state
    weights = {cid: ds.weight for cid, ds in state.fed.clients.items()}
    server_pk = state.keys[SERVER_ID].pk
    for round_ in sorted(contract.calibration_hashes):
        committed = contract.calibration_hashes[round_]
        targets = _targets_for_round(contract.pending_requests, round_)
        if targets is None:
            details.append(
                {"check": f"calibration round {round_}", "ok": False, "detail": "no-request"}
            )
            continue
        retained_hashes = state.ledger.query_hashes(round_, exclude=targets)
        ok, reason = verify_calibration(
            server_pk,
            committed["value"],
            committed["randomizer"],
            retained_hashes,
            state.store,
            weights,
            state.cfg.clients,
            state.cfg.strict_calibration,
        )
        details.append(
            {
                "check": f"calibration round {round_}",
                "ok": ok,
                "detail": "accept" if ok else reason,
            }
        )
    return all(row["ok"] for row in details), details
