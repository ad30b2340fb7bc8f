"""Encoder plus a growable, decomposed classifier head.

Head weight columns split at ``boundary`` into the previous group (relations
from earlier tasks) and the current group. The two groups can be stepped with
independent Adam states and learning rates, snapshotted before a training
stage, and restored afterwards; growth appends freshly initialized columns
and promotes everything older into the previous group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .numerics import AdamState, adam_step, init_adam_state, matvec, softmax

CHECKPOINT_VERSION = 1
NEW_COLUMN_STD = 0.02
_ACTIVATIONS = ("tanh", "identity")


@dataclass
class Encoder:
    """Two affine layers with an optional tanh between: features -> representation."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]


def init_encoder(feature_dim: int, hidden_dim: int, out_dim: int, seed: int,
                 activation: str = "tanh") -> Encoder:
    """Seed-deterministic init; the same seed gives bit-identical weights."""
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, 1.0 / np.sqrt(feature_dim), size=(feature_dim, hidden_dim))
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, out_dim))
    return Encoder(w1=w1, b1=np.zeros(hidden_dim), w2=w2, b2=np.zeros(out_dim),
                   activation=activation)


@dataclass
class ClassifierHead:
    """d x C weight matrix over all seen relations, split at ``boundary``."""

    weights: np.ndarray
    boundary: int
    relation_ids: list[int]

    def __post_init__(self):
        if len(set(self.relation_ids)) != len(self.relation_ids):
            raise ValueError("relation_ids contains duplicates")
        if len(self.relation_ids) != self.weights.shape[1]:
            raise ValueError("relation_ids length must equal column count")
        if not 0 <= self.boundary <= self.weights.shape[1]:
            raise ValueError("boundary outside column range")

    @property
    def num_relations(self) -> int:
        return self.weights.shape[1]


def empty_head(rep_dim: int) -> ClassifierHead:
    return ClassifierHead(weights=np.zeros((rep_dim, 0)), boundary=0, relation_ids=[])


@dataclass(frozen=True)
class HeadSnapshot:
    """Immutable copy of the previous-group columns and their relation ids."""

    columns: np.ndarray
    relation_ids: tuple[int, ...]


@dataclass
class HeadStates:
    """Independent Adam states for the previous and current column groups."""

    prev: AdamState
    cur: AdamState


@dataclass
class Model:
    encoder: Encoder
    head: ClassifierHead
    opt_states: dict = field(default_factory=dict)


def encode_batch(enc: Encoder, x: np.ndarray) -> np.ndarray:
    """Representations for a batch of feature rows: (n, f) -> (n, d)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != enc.feature_dim:
        raise ValueError(f"feature dim {x.shape} does not match encoder input {enc.feature_dim}")
    return backend.kernels.encode_batch(x, enc.w1, enc.b1, enc.w2, enc.b2,
                                enc.activation == "tanh")


def encode(enc: Encoder, features: np.ndarray) -> np.ndarray:
    """Representation of a single feature vector."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 1:
        raise ValueError("encode expects a 1-d feature vector")
    return encode_batch(enc, features[None, :])[0]


def forward(enc: Encoder, head: ClassifierHead, features: np.ndarray) -> np.ndarray:
    """Probability distribution over all seen relations for one instance."""
    if head.num_relations < 1:
        raise ValueError("classifier head has no columns")
    return softmax(matvec(head.weights, encode(enc, features)))


def grow(head: ClassifierHead, new_relations, init_seed: int) -> ClassifierHead:
    """Append columns for new relations; every existing column becomes previous.

    Old columns are preserved bit-for-bit; new columns are N(0, 0.02^2) draws
    from ``init_seed`` so growth is reproducible.
    """
    new_relations = [int(r) for r in new_relations]
    if len(set(new_relations)) != len(new_relations):
        raise ValueError("duplicate ids in new_relations")
    overlap = set(new_relations) & set(head.relation_ids)
    if overlap:
        raise ValueError(f"relations already present: {sorted(overlap)}")
    rng = np.random.default_rng(init_seed)
    new_cols = rng.normal(0.0, NEW_COLUMN_STD, size=(head.weights.shape[0], len(new_relations)))
    weights = np.concatenate([head.weights, new_cols], axis=1)
    return ClassifierHead(weights=weights, boundary=head.num_relations,
                          relation_ids=head.relation_ids + new_relations)


def snapshot_prev(head: ClassifierHead) -> HeadSnapshot:
    """Frozen copy of the previous-group columns (empty at boundary 0)."""
    cols = head.weights[:, :head.boundary].copy()
    cols.setflags(write=False)
    return HeadSnapshot(columns=cols, relation_ids=tuple(head.relation_ids[:head.boundary]))


def restore_prev(head: ClassifierHead, snap: HeadSnapshot) -> ClassifierHead:
    """Overwrite the previous group with a snapshot; current columns untouched."""
    b = head.boundary
    if snap.columns.shape[1] != b:
        raise ValueError(f"snapshot has {snap.columns.shape[1]} columns, head boundary is {b}")
    if tuple(head.relation_ids[:b]) != snap.relation_ids:
        raise ValueError("snapshot relation ids do not match the head's previous group")
    weights = head.weights.copy()
    weights[:, :b] = snap.columns
    return ClassifierHead(weights=weights, boundary=b, relation_ids=list(head.relation_ids))


def init_head_states(head: ClassifierHead) -> HeadStates:
    return HeadStates(prev=init_adam_state(head.weights[:, :head.boundary]),
                      cur=init_adam_state(head.weights[:, head.boundary:]))


def apply_head_gradients(head: ClassifierHead, grads: np.ndarray, states: HeadStates,
                         alpha_prev: float, alpha_cur: float) -> tuple[ClassifierHead, HeadStates]:
    """Adam step with the previous group at alpha_prev and the current at alpha_cur."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != head.weights.shape:
        raise ValueError(f"grads shape {grads.shape} != head shape {head.weights.shape}")
    b = head.boundary
    prev_w, prev_state = adam_step(head.weights[:, :b], grads[:, :b], states.prev, alpha_prev)
    cur_w, cur_state = adam_step(head.weights[:, b:], grads[:, b:], states.cur, alpha_cur)
    weights = np.concatenate([prev_w, cur_w], axis=1)
    new_head = ClassifierHead(weights=weights, boundary=b, relation_ids=list(head.relation_ids))
    return new_head, HeadStates(prev=prev_state, cur=cur_state)


def save_checkpoint(model: Model, path) -> None:
    """Versioned binary dump of encoder, head, and optimizer states."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "activation": model.encoder.activation,
        "boundary": model.head.boundary,
        "relation_ids": list(model.head.relation_ids),
        "opt_keys": sorted(model.opt_states),
        "opt_scalars": {
            key: {"t": s.t, "beta1": s.beta1, "beta2": s.beta2, "epsilon": s.epsilon}
            for key, s in model.opt_states.items()
        },
    }
    arrays = {
        "enc_w1": model.encoder.w1,
        "enc_b1": model.encoder.b1,
        "enc_w2": model.encoder.w2,
        "enc_b2": model.encoder.b2,
        "head_w": model.head.weights,
    }
    for key, s in model.opt_states.items():
        arrays[f"opt_m_{key}"] = s.m
        arrays[f"opt_v_{key}"] = s.v
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
                 **arrays)


def load_checkpoint(path) -> Model:
    """Load a checkpoint written by save_checkpoint; arrays round-trip bit-exactly."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        enc = Encoder(w1=data["enc_w1"].copy(), b1=data["enc_b1"].copy(),
                      w2=data["enc_w2"].copy(), b2=data["enc_b2"].copy(),
                      activation=meta["activation"])
        head = ClassifierHead(weights=data["head_w"].copy(), boundary=meta["boundary"],
                              relation_ids=list(meta["relation_ids"]))
        opt_states = {}
        for key in meta["opt_keys"]:
            sc = meta["opt_scalars"][key]
            opt_states[key] = AdamState(m=data[f"opt_m_{key}"].copy(),
                                        v=data[f"opt_v_{key}"].copy(),
                                        t=sc["t"], beta1=sc["beta1"], beta2=sc["beta2"],
                                        epsilon=sc["epsilon"])
    return Model(encoder=enc, head=head, opt_states=opt_states)
