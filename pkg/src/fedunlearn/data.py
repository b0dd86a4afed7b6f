"""Dataset construction and ingestion.

Synthetic federated blobs place class means on a circle; one or more target
clients draw from a rotated constellation, so their contribution is a
measurable, removable distortion.  IDX (big-endian image/label files) and
delimited text are supported for external data.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ClientDataset",
    "FederatedData",
    "load_delimited",
    "load_idx_pair",
    "make_blob_clients",
    "read_idx",
]


@dataclass
class ClientDataset:
    """One client's local shard.  ``weight`` is the aggregation weight."""

    X: np.ndarray
    y: np.ndarray
    client_id: str
    weight: float = 1.0

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] == 0:
            raise ValueError("client features must be a non-empty 2-d array")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("label vector does not match the feature rows")
        if not np.isfinite(self.X).all():
            raise ValueError("client features contain non-finite values")
        if not self.weight > 0:
            raise ValueError("aggregation weight must be positive")

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class FederatedData:
    """Client shards plus evaluation splits.

    ``test_X/test_y`` follow the retained clients' distribution and calibrate
    the membership-inference threshold; ``target_holdout_*`` are unseen draws
    from the target distribution (the attack's non-members).
    """

    clients: dict = field(default_factory=dict)  # client_id -> ClientDataset
    test_X: np.ndarray | None = None
    test_y: np.ndarray | None = None
    target_holdout_X: np.ndarray | None = None
    target_holdout_y: np.ndarray | None = None

    def weights(self, include=None) -> dict[str, float]:
        ids = self.clients.keys() if include is None else include
        return {cid: self.clients[cid].weight for cid in ids}


def _constellation(n_classes: int, radius: float, n_features: int, rotation: float) -> np.ndarray:
    means = np.zeros((n_classes, n_features))
    angles = 2.0 * np.pi * np.arange(n_classes) / n_classes + rotation
    means[:, 0] = radius * np.cos(angles)
    means[:, 1 % n_features] = radius * np.sin(angles)
    return means


def _sample_classes(gen, means, per_class: int, sigma: float):
    n_classes, n_features = means.shape
    xs, ys = [], []
    for c in range(n_classes):
        xs.append(gen.normal(0.0, sigma, (per_class, n_features)) + means[c])
        ys.append(np.full(per_class, c, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    order = gen.permutation(X.shape[0])
    return X[order], y[order]


def make_blob_clients(
    n_clients: int,
    target_ids,
    n_features: int = 2,
    n_classes: int = 3,
    samples_per_client: int = 80,
    target_samples: int = 0,
    noise_sigma: float = 0.5,
    class_radius: float = 3.0,
    target_shift: float = 1.0,
    test_samples: int = 400,
    target_holdout: int = 80,
    weight_mode: str = "size",
    seed: int = 0,
) -> FederatedData:
    """Gaussian-blob shards with a rotated constellation for target clients.

    ``target_shift`` scales the rotation in units of half the inter-class
    angle: 1.0 places target clusters exactly between retained clusters.
    ``target_samples`` sizes target shards separately (0 keeps them equal);
    under size weighting a larger target shard raises its aggregation share.
    """
    if n_features < 2:
        raise ValueError("blob data needs at least 2 features")
    if samples_per_client < n_classes:
        raise ValueError("need at least one sample per class per client")
    if target_samples and target_samples < n_classes:
        raise ValueError("need at least one sample per class per client")
    targets = {str(t) for t in target_ids}
    gen = np.random.default_rng(seed)
    base = _constellation(n_classes, class_radius, n_features, rotation=0.0)
    shifted = _constellation(
        n_classes, class_radius, n_features, rotation=target_shift * np.pi / n_classes
    )

    per_class = max(1, samples_per_client // n_classes)
    target_per_class = max(1, (target_samples or samples_per_client) // n_classes)
    fed = FederatedData()
    for i in range(n_clients):
        cid = f"c{i}"
        means = shifted if cid in targets else base
        count = target_per_class if cid in targets else per_class
        X, y = _sample_classes(gen, means, count, noise_sigma)
        weight = float(len(y)) if weight_mode == "size" else 1.0
        fed.clients[cid] = ClientDataset(X=X, y=y, client_id=cid, weight=weight)

    fed.test_X, fed.test_y = _sample_classes(
        gen, base, max(1, test_samples // n_classes), noise_sigma
    )
    fed.target_holdout_X, fed.target_holdout_y = _sample_classes(
        gen, shifted, max(1, target_holdout // n_classes), noise_sigma
    )
    return fed


# ---- IDX ingestion -------------------------------------------------------

_IDX_DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


def read_idx(path) -> np.ndarray:
    """Read a big-endian IDX file (images or labels) into a numpy array."""
    with open(path, "rb") as fh:
        header = fh.read(4)
        if len(header) != 4 or header[0] != 0 or header[1] != 0:
            raise ValueError("bad IDX magic")
        dtype = _IDX_DTYPES.get(header[2])
        if dtype is None:
            raise ValueError(f"unsupported IDX element type 0x{header[2]:02x}")
        ndim = header[3]
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        count = int(np.prod(dims)) if dims else 0
        data = np.frombuffer(fh.read(count * dtype.itemsize), dtype=dtype, count=count)
        return data.reshape(dims)


def load_idx_pair(images_path, labels_path, limit: int | None = None):
    """Flattened float features in [0, 1] plus integer labels."""
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image/label counts differ")
    if limit:
        images = images[:limit]
        labels = labels[:limit]
    X = images.reshape(images.shape[0], -1).astype(np.float64)
    if images.dtype.kind == "u":
        X /= 255.0
    return X, labels.astype(np.int64).ravel()


def load_delimited(path, delimiter: str = ","):
    """Delimited text: feature columns followed by one integer label column."""
    table = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    if table.shape[1] < 2:
        raise ValueError("need at least one feature column plus a label column")
    return table[:, :-1].astype(np.float64), table[:, -1].astype(np.int64)


def split_rows(X, y, n_clients: int, seed: int = 0, weight_mode: str = "size") -> dict:
    """Shuffle and deal rows into equal client shards."""
    gen = np.random.default_rng(seed)
    order = gen.permutation(X.shape[0])
    shards = np.array_split(order, n_clients)
    clients = {}
    for i, shard in enumerate(shards):
        cid = f"c{i}"
        weight = float(len(shard)) if weight_mode == "size" else 1.0
        clients[cid] = ClientDataset(X=X[shard], y=y[shard], client_id=cid, weight=weight)
    return clients
