"""Blockchain-backed federated learning with verifiable unlearning.

The package wires five pieces together: a discrete-log chameleon hash whose
trapdoor enables in-place rewrites of committed payloads; a simulated
append-only ledger with a queryable contract state under pluggable consensus
stubs; a content-addressed off-chain store keyed by those hashes; a small
federated-averaging engine; and a calibration-based unlearning flow whose
every aggregate is committed on-chain and re-verified by the clients being
forgotten.  A CLI drives desk-scale experiment scenarios and renders report
figures.
"""
from .chameleon import (
    ChameleonParams,
    KeyPair,
    PublicKey,
    TrapdoorMismatch,
    ch_gen,
    ch_hash,
    ch_rewrite,
    ch_setup,
    ch_verify,
    digest_update,
)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .data import ClientDataset, FederatedData, make_blob_clients
from .driver import (
    RunState,
    ScenarioResult,
    load_run,
    run_training,
    run_unlearning_scenario,
    save_run,
    verify_run,
)
from .flcore import (
    GlobalModel,
    ModelUpdate,
    TrainConfig,
    apply_update,
    evaluate,
    fedavg_aggregate,
    load_model,
    local_train,
    save_model,
)
from .ledger import Block, ConsensusStub, ContractState, Ledger, Receipt, Transaction
from .metrics import MetricsRecord, emit_metrics, load_metrics
from .mia import mia_probe
from .models import Architecture
from .offchain import OffchainStore, StoredEntry, UnknownKey
from .plots import render_report
from .unlearning import (
    ContributionTracker,
    RetrainPlan,
    UnlearnOutcome,
    UnlearnRequest,
    VerificationFailure,
    adaptive_rounds,
    build_plan,
    calibrate_aggregate,
    contribution_angle,
    gompertz_contribution,
    run_unlearning,
    unlearn_rewrite_all,
    update_running_angle,
    verify_calibration,
)

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "Block",
    "ChameleonParams",
    "ClientDataset",
    "ConfigError",
    "ConsensusStub",
    "ContractState",
    "ContributionTracker",
    "ExperimentConfig",
    "FederatedData",
    "GlobalModel",
    "KeyPair",
    "Ledger",
    "MetricsRecord",
    "ModelUpdate",
    "OffchainStore",
    "PublicKey",
    "Receipt",
    "RetrainPlan",
    "RunState",
    "ScenarioResult",
    "StoredEntry",
    "TrainConfig",
    "Transaction",
    "TrapdoorMismatch",
    "UnknownKey",
    "UnlearnOutcome",
    "UnlearnRequest",
    "VerificationFailure",
    "adaptive_rounds",
    "apply_update",
    "build_plan",
    "calibrate_aggregate",
    "ch_gen",
    "ch_hash",
    "ch_rewrite",
    "ch_setup",
    "ch_verify",
    "contribution_angle",
    "digest_update",
    "emit_metrics",
    "evaluate",
    "fedavg_aggregate",
    "gompertz_contribution",
    "load_config",
    "load_metrics",
    "load_model",
    "load_run",
    "local_train",
    "make_blob_clients",
    "mia_probe",
    "parse_config",
    "render_report",
    "run_training",
    "run_unlearning",
    "run_unlearning_scenario",
    "save_model",
    "save_run",
    "unlearn_rewrite_all",
    "update_running_angle",
    "verify_calibration",
    "verify_run",
]
