"""Per-relation exemplar stores and replay-set construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datastream import Instance


@dataclass
class MemoryBank:
    """Fixed-capacity exemplar store keyed by relation id."""

    capacity: int = 10
    store: dict[int, list[Instance]] = field(default_factory=dict)

    def relations(self) -> list[int]:
        return sorted(self.store)


def _kmeans(points: np.ndarray, k: int, seed: int,
            max_iter: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Seeded k-means++ followed by Lloyd iterations; returns the centroids."""
    rng = np.random.default_rng(seed)
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centroids[j] = points[idx]
        closest = np.minimum(closest, ((points - centroids[j]) ** 2).sum(axis=1))
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_centroids = centroids.copy()
        for c in range(k):
            members = points[assign == c]
            if members.shape[0]:
                new_centroids[c] = members.mean(axis=0)
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break
    return centroids


def select_exemplars(instances: list[Instance], reps, k: int, seed: int) -> list[Instance]:
    """At most k representatives: k-means over the representations, then the
    instance nearest each centroid, ties broken by lowest instance index."""
    if len(instances) != len(reps):
        raise ValueError(f"{len(instances)} instances but {len(reps)} representations")
    if len(instances) <= k:
        return list(instances)
    points = np.asarray(reps, dtype=np.float64)
    centroids = _kmeans(points, k, seed)
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = np.argmin(d2, axis=1)
    chosen: list[int] = []
    for c in range(k):
        members = np.nonzero(assign == c)[0]
        if members.size == 0:
            continue
        dist = ((points[members] - centroids[c]) ** 2).sum(axis=1)
        chosen.append(int(members[int(np.argmin(dist))]))
    chosen.sort()
    return [instances[i] for i in chosen]


def select_random(instances: list[Instance], k: int, seed: int) -> list[Instance]:
    """Seeded uniform sample without replacement; A/B alternative to k-means."""
    if len(instances) <= k:
        return list(instances)
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(instances), size=k, replace=False))
    return [instances[int(i)] for i in picked]


def update_bank(bank: MemoryBank, relation_id: int, exemplars: list[Instance]) -> None:
    if relation_id in bank.store:
        raise ValueError(f"relation {relation_id} already stored")
    bank.store[relation_id] = list(exemplars)


def replay_set(bank: MemoryBank, seed: int) -> list[Instance]:
    """All stored exemplars, shuffled deterministically by seed."""
    if not bank.store:
        raise ValueError("memory bank is empty")
    items = [inst for rid in sorted(bank.store) for inst in bank.store[rid]]
    rng = np.random.default_rng(seed)
    return [items[i] for i in rng.permutation(len(items))]


def dump_bank(bank: MemoryBank, path) -> None:
    """Audit dump: one `relation_id,instance_uid` row per stored exemplar."""
    rows = ["relation_id,instance_uid"]
    for rid in sorted(bank.store):
        for inst in bank.store[rid]:
            rows.append(f"{rid},{inst.uid}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")
