"""Read-only metrics over a frozen model: whole-history accuracy, one-vs-rest
F1, previous-relation probability mass, and a two-cluster silhouette."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Model, encode_batch


@dataclass
class ConfusionTally:
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _scores(model: Model, instances) -> np.ndarray:
    feats = np.stack([inst.features for inst in instances])
    return encode_batch(model.encoder, feats) @ model.head.weights


def _label_columns(model: Model, instances) -> np.ndarray:
    col_of = {rid: c for c, rid in enumerate(model.head.relation_ids)}
    cols = []
    for inst in instances:
        if inst.label not in col_of:
            raise ValueError(f"label {inst.label} not covered by the classifier head")
        cols.append(col_of[inst.label])
    return np.asarray(cols)


def accuracy_all_seen(model: Model, instances) -> float:
    """Fraction of instances whose argmax over all seen relations matches the
    label; argmax ties resolve to the lowest column index."""
    if not instances:
        raise ValueError("no instances to evaluate")
    truth = _label_columns(model, instances)
    pred = np.argmax(_scores(model, instances), axis=1)
    return float((pred == truth).mean())


def per_relation_f1(model: Model, instances, relation_subset) -> dict[int, float]:
    """One-vs-rest F1 per relation in the subset; 0 when precision+recall is 0."""
    subset = list(relation_subset)
    if not subset:
        raise ValueError("relation subset is empty")
    pred = np.argmax(_scores(model, instances), axis=1)
    pred_rids = [model.head.relation_ids[p] for p in pred]
    tallies = {rid: ConfusionTally() for rid in subset}
    for inst, prid in zip(instances, pred_rids):
        if inst.label == prid:
            if inst.label in tallies:
                tallies[inst.label].tp += 1
        else:
            if prid in tallies:
                tallies[prid].fp += 1
            if inst.label in tallies:
                tallies[inst.label].fn += 1
    out = {}
    for rid, tally in tallies.items():
        denom = 2 * tally.tp + tally.fp + tally.fn
        out[rid] = 2 * tally.tp / denom if denom else 0.0
    return out


def prev_prob_mass(model: Model, instances) -> float:
    """Mean probability mass the model puts on any previous relation."""
    b = model.head.boundary
    if b <= 0:
        raise ValueError("head has no previous group")
    if not instances:
        raise ValueError("no instances to evaluate")
    probs = _softmax_rows(_scores(model, instances))
    return float(probs[:, :b].sum(axis=1).mean())


def pair_silhouette(reps, labels) -> float:
    """Mean silhouette (b - a) / max(a, b) between two labeled clusters."""
    points = np.asarray(reps, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.shape[0] != 2:
        raise ValueError(f"need exactly 2 classes, got {classes.shape[0]}")
    for c in classes:
        if (labels == c).sum() < 2:
            raise ValueError(f"class {c} has fewer than 2 points")
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    scores = []
    for i in range(points.shape[0]):
        same = labels == labels[i]
        a = dist[i, same].sum() / (same.sum() - 1)  # excludes the zero self-distance
        b = dist[i, ~same].mean()
        top = max(a, b)
        scores.append((b - a) / top if top > 0 else 0.0)
    return float(np.mean(scores))
