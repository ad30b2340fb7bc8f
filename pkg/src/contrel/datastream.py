"""Synthetic relation clusters, task partitioning, instance splits, and the
pre-encoded embedding CSV format.

Embedding CSV: header line ``relation_id,split,f0,f1,...,f{F-1}``, one
instance per row; relation_id is a non-negative integer, split is one of
train/valid/test, features are decimal reals. UTF-8, LF line endings.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


@dataclass
class Instance:
    """One feature vector with its relation label; uid identifies it for audits."""

    features: np.ndarray
    label: int
    uid: int = -1


class Split(NamedTuple):
    train: list
    valid: list
    test: list


@dataclass
class Task:
    index: int  # 1-based position in the sequence
    relations: list[int]
    train: list[Instance]
    valid: list[Instance]
    test: list[Instance]


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic benchmark generator.

    Analogous pairs share a base mean separated by ``pair_offset``; with an
    offset near ``sigma`` the two relations overlap enough to be confusable,
    which is the regime the stage-1 strategies are meant to help with.
    """

    num_relations: int = 40
    instances_per_relation: int = 100
    feature_dim: int = 32
    sigma: float = 1.0
    analogous_pairs: list[tuple[int, int]] = field(default_factory=list)
    pair_offset: float = 1.0

    def validate(self) -> None:
        if self.num_relations < 2:
            raise ValueError("need at least 2 relations")
        if self.instances_per_relation < 5:
            raise ValueError("need at least 5 instances per relation")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.pair_offset <= 0:
            raise ValueError("pair_offset must be positive")
        seen: set[int] = set()
        for a, b in self.analogous_pairs:
            if a == b or a in seen or b in seen:
                raise ValueError("analogous pairs must be disjoint")
            if not (0 <= a < self.num_relations and 0 <= b < self.num_relations):
                raise ValueError(f"pair ({a}, {b}) outside relation range")
            seen.update((a, b))


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def gen_synthetic(spec: SyntheticSpec, seed: int) -> list[Instance]:
    """Gaussian cluster per relation, deterministic in (spec, seed).

    Unpaired relation means sit on a sphere of radius 10*sigma; each analogous
    pair straddles a shared base mean at separation pair_offset.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    radius = 10.0 * spec.sigma
    means: dict[int, np.ndarray] = {}
    for a, b in spec.analogous_pairs:
        base = _unit(rng, spec.feature_dim) * radius
        u = _unit(rng, spec.feature_dim)
        means[a] = base - 0.5 * spec.pair_offset * u
        means[b] = base + 0.5 * spec.pair_offset * u
    for rid in range(spec.num_relations):
        if rid not in means:
            means[rid] = _unit(rng, spec.feature_dim) * radius
    instances: list[Instance] = []
    uid = 0
    for rid in range(spec.num_relations):
        x = means[rid] + rng.normal(0.0, spec.sigma,
                                    size=(spec.instances_per_relation, spec.feature_dim))
        for row in x:
            instances.append(Instance(features=row, label=rid, uid=uid))
            uid += 1
    return instances


def split_tasks(relation_ids, num_tasks: int, seed: int,
                separate_pairs=()) -> list[list[int]]:
    """Seeded random partition of the relations into near-equal task sets.

    When separate_pairs is given, partitions that put both members of a pair
    in the same task are rejected and redrawn from the same stream.
    """
    ids = list(relation_ids)
    if num_tasks < 1:
        raise ValueError("num_tasks must be at least 1")
    if num_tasks > len(ids):
        raise ValueError(f"num_tasks {num_tasks} exceeds relation count {len(ids)}")
    rng = np.random.default_rng(seed)
    base, extra = divmod(len(ids), num_tasks)
    for _ in range(1000):
        perm = [ids[i] for i in rng.permutation(len(ids))]
        chunks: list[list[int]] = []
        start = 0
        for k in range(num_tasks):
            size = base + (1 if k < extra else 0)
            chunks.append(sorted(perm[start:start + size]))
            start += size
        task_of = {rid: k for k, chunk in enumerate(chunks) for rid in chunk}
        if all(task_of[a] != task_of[b] for a, b in separate_pairs):
            return chunks
    raise RuntimeError("could not separate analogous pairs across tasks")


def split_instances(instances: list[Instance], seed: int,
                    ratios: tuple[int, int, int] = (3, 1, 1)) -> dict[int, Split]:
    """Per-relation stratified train/test/valid split at the given ratios."""
    by_rid: dict[int, list[Instance]] = {}
    for inst in instances:
        by_rid.setdefault(inst.label, []).append(inst)
    denom = sum(ratios)
    rng = np.random.default_rng(seed)
    out: dict[int, Split] = {}
    for rid in sorted(by_rid):
        group = by_rid[rid]
        n = len(group)
        if n < 5:
            raise ValueError(f"relation {rid} has {n} instances; need at least 5 to split")
        order = rng.permutation(n)
        n_test = n * ratios[1] // denom
        n_valid = n * ratios[2] // denom
        n_train = n - n_test - n_valid
        shuffled = [group[i] for i in order]
        out[rid] = Split(
            train=shuffled[:n_train],
            test=shuffled[n_train:n_train + n_test],
            valid=shuffled[n_train + n_test:],
        )
    return out


def assemble_tasks(split_by_rid: dict[int, Split],
                   relation_sets: list[list[int]]) -> list[Task]:
    """Build the ordered task sequence from per-relation splits."""
    tasks = []
    for k, relations in enumerate(relation_sets, start=1):
        train: list[Instance] = []
        valid: list[Instance] = []
        test: list[Instance] = []
        for rid in sorted(relations):
            s = split_by_rid[rid]
            train.extend(s.train)
            valid.extend(s.valid)
            test.extend(s.test)
        tasks.append(Task(index=k, relations=sorted(relations),
                          train=train, valid=valid, test=test))
    return tasks


_SPLIT_NAMES = ("train", "valid", "test")


def load_embeddings(path, *, max_train_per_relation=None, max_valid_per_relation=None,
                    max_test_per_relation=None) -> dict[int, Split]:
    """Parse an embedding CSV into per-relation splits.

    Optional per-relation caps truncate each split in file order (the shape
    restriction some benchmarks apply to oversized relations).
    """
    caps = {
        "train": max_train_per_relation,
        "valid": max_valid_per_relation,
        "test": max_test_per_relation,
    }
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "relation_id" or header[1] != "split":
        raise ValueError(f"{path}: line 1: header must start with relation_id,split,f0,...")
    dim = len(header) - 2
    expected = [f"f{i}" for i in range(dim)]
    if header[2:] != expected:
        raise ValueError(f"{path}: line 1: feature columns must be f0..f{dim - 1}")
    out: dict[int, Split] = {}
    counts: dict[tuple[int, str], int] = {}
    uid = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != dim + 2:
            raise ValueError(f"{path}: line {lineno}: expected {dim + 2} fields, got {len(parts)}")
        try:
            rid = int(parts[0])
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: relation_id {parts[0]!r} is not an integer") from None
        if rid < 0:
            raise ValueError(f"{path}: line {lineno}: relation_id must be non-negative")
        split_name = parts[1]
        if split_name not in _SPLIT_NAMES:
            raise ValueError(f"{path}: line {lineno}: split {split_name!r} not in {_SPLIT_NAMES}")
        try:
            feats = np.array([float(p) for p in parts[2:]], dtype=np.float64)
        except ValueError:
            raise ValueError(f"{path}: line {lineno}: non-numeric feature value") from None
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"{path}: line {lineno}: non-finite feature value")
        if rid not in out:
            out[rid] = Split(train=[], valid=[], test=[])
        cap = caps[split_name]
        key = (rid, split_name)
        if cap is not None and counts.get(key, 0) >= cap:
            continue
        counts[key] = counts.get(key, 0) + 1
        getattr(out[rid], split_name).append(Instance(features=feats, label=rid, uid=uid))
        uid += 1
    return out


def write_embeddings(path, by_relation: dict[int, Split]) -> None:
    """Emit the embedding CSV for the given per-relation splits."""
    dims = {
        inst.features.shape[0]
        for split in by_relation.values()
        for name in _SPLIT_NAMES
        for inst in getattr(split, name)
    }
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dims {sorted(dims)}")
    dim = dims.pop()
    rows = ["relation_id,split," + ",".join(f"f{i}" for i in range(dim))]
    for rid in sorted(by_relation):
        for name in _SPLIT_NAMES:
            for inst in getattr(by_relation[rid], name):
                feats = ",".join(repr(float(x)) for x in inst.features)
                rows.append(f"{rid},{name},{feats}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
