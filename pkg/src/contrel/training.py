"""Two-stage continual training.

Per task, in this fixed order: grow the head, snapshot the previous group,
stage 1 on the task's own data (previous group at a reduced rate when
adversarial tuning is on), select exemplars into the memory bank, stage 2 on
the balanced replay set (previous group restored from the snapshot first when
empirical initialization is on), then evaluate on every test set seen so far.

Optimizer states are created fresh at the start of each stage; a restored
previous group would otherwise inherit moments from weights it no longer has.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .datastream import Task
from .evaluation import accuracy_all_seen, pair_silhouette, per_relation_f1, prev_prob_mass
from .memory import MemoryBank, replay_set, select_exemplars, select_random, update_bank
from .model import (Model, apply_head_gradients, empty_head, encode_batch, grow,
                    init_encoder, init_head_states, restore_prev, snapshot_prev)
from .numerics import adam_step, init_adam_state
from .seeding import derive_seed


@dataclass
class TrainConfig:
    """Learning rates, epoch counts, and the two strategy flags.

    alpha_prev only applies to stage 1 and only while use_adversarial_tuning
    is on; stage 2 always trains every head column at alpha_cur.
    alpha_enc_stage1 optionally overrides the encoder rate during stage 1.
    """

    epochs_stage1: int = 10
    epochs_stage2: int = 10
    batch_size: int = 32
    alpha_cur: float = 1e-3
    alpha_prev: float = 1e-5
    alpha_enc: float = 1e-5
    alpha_enc_stage1: float | None = None
    use_empirical_init: bool = True
    use_adversarial_tuning: bool = True
    seed: int = 0

    def validate(self) -> None:
        rates = [self.alpha_cur, self.alpha_prev, self.alpha_enc]
        if self.alpha_enc_stage1 is not None:
            rates.append(self.alpha_enc_stage1)
        if any(r < 0 for r in rates):
            raise ValueError("learning rates must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise ValueError("epoch counts must be >= 0")


@dataclass
class TaskMetrics:
    """Accuracy over everything seen plus the stage-1 bias diagnostics."""

    task_index: int
    accuracy: float
    prev_f1_mean: float | None
    prev_prob_mass: float | None
    pair_silhouettes: dict[tuple[int, int], float]
    restore_bit_exact: bool | None
    stage1_losses: list[float]
    stage2_losses: list[float]

    @property
    def pair_silhouette_mean(self) -> float | None:
        if not self.pair_silhouettes:
            return None
        return float(np.mean(list(self.pair_silhouettes.values())))


@dataclass
class RunMetrics:
    tasks: list[TaskMetrics] = field(default_factory=list)

    @property
    def accuracies(self) -> list[float]:
        return [t.accuracy for t in self.tasks]

    @property
    def final_accuracy(self) -> float:
        return self.tasks[-1].accuracy


def _train_passes(model: Model, data, cfg: TrainConfig, *, epochs: int,
                  alpha_prev: float, alpha_cur: float, alpha_enc: float,
                  rng: np.random.Generator) -> list[float]:
    """Seeded shuffled mini-batch passes; returns the summed loss per step."""
    col_of = {rid: c for c, rid in enumerate(model.head.relation_ids)}
    feats = np.ascontiguousarray(np.stack([inst.features for inst in data]), dtype=np.float64)
    labels = np.empty(len(data), dtype=np.int64)
    for i, inst in enumerate(data):
        if inst.label not in col_of:
            raise ValueError(f"instance label {inst.label} not in classifier head")
        labels[i] = col_of[inst.label]

    enc = model.encoder
    enc_states = {name: init_adam_state(getattr(enc, name)) for name in ("w1", "b1", "w2", "b2")}
    head_states = init_head_states(model.head)
    use_tanh = enc.activation == "tanh"
    losses: list[float] = []
    n = len(data)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, _, dw1, db1, dw2, db2, dwh = backend.kernels.model_forward_backward(
                feats[idx], labels[idx], enc.w1, enc.b1, enc.w2, enc.b2,
                model.head.weights, use_tanh)
            losses.append(loss)
            for name, grad in (("w1", dw1), ("b1", db1), ("w2", dw2), ("b2", db2)):
                new_param, enc_states[name] = adam_step(getattr(enc, name), grad,
                                                        enc_states[name], alpha_enc)
                setattr(enc, name, new_param)
            model.head, head_states = apply_head_gradients(model.head, dwh, head_states,
                                                           alpha_prev, alpha_cur)
    model.opt_states = {f"enc_{k}": s for k, s in enc_states.items()}
    model.opt_states["head_prev"] = head_states.prev
    model.opt_states["head_cur"] = head_states.cur
    return losses


def train_stage1(model: Model, task: Task, cfg: TrainConfig) -> list[float]:
    """Stage 1: passes over the task's own training data only.

    The head must already be grown for the task's relations and the snapshot
    already taken. When alpha_prev is exactly 0 the previous group is verified
    bit-unchanged afterwards.
    """
    if not task.train:
        raise ValueError(f"task {task.index} has no training data")
    missing = set(task.relations) - set(model.head.relation_ids)
    if missing:
        raise ValueError(f"head not grown for relations {sorted(missing)}")
    alpha_prev = cfg.alpha_prev if cfg.use_adversarial_tuning else cfg.alpha_cur
    alpha_enc = cfg.alpha_enc if cfg.alpha_enc_stage1 is None else cfg.alpha_enc_stage1
    rng = np.random.default_rng(derive_seed(cfg.seed, "stage1", task.index))
    b = model.head.boundary
    frozen_before = model.head.weights[:, :b].copy() if alpha_prev == 0.0 else None
    losses = _train_passes(model, task.train, cfg, epochs=cfg.epochs_stage1,
                           alpha_prev=alpha_prev, alpha_cur=cfg.alpha_cur,
                           alpha_enc=alpha_enc, rng=rng)
    if frozen_before is not None and not np.array_equal(frozen_before,
                                                        model.head.weights[:, :b]):
        raise RuntimeError("previous group moved during stage 1 despite alpha_prev = 0")
    return losses


def train_stage2(model: Model, bank: MemoryBank, cfg: TrainConfig, snapshot,
                 task_index: int) -> tuple[list[float], bool | None]:
    """Stage 2: replay passes over the memory with every column at alpha_cur.

    With empirical initialization on, the previous group is restored from the
    pre-stage-1 snapshot before the first step. Returns (losses, restored_ok)
    where restored_ok records whether the previous group entering the first
    step was bit-identical to the snapshot (None when the flag is off).
    """
    missing = set(model.head.relation_ids) - set(bank.store)
    if missing:
        raise ValueError(f"memory bank missing relations {sorted(missing)}")
    restored_ok = None
    if cfg.use_empirical_init and snapshot is not None:
        model.head = restore_prev(model.head, snapshot)
        restored_ok = np.array_equal(model.head.weights[:, :model.head.boundary],
                                     snapshot.columns)
    data = replay_set(bank, derive_seed(cfg.seed, "replay", task_index))
    rng = np.random.default_rng(derive_seed(cfg.seed, "stage2", task_index))
    losses = _train_passes(model, data, cfg, epochs=cfg.epochs_stage2,
                           alpha_prev=cfg.alpha_cur, alpha_cur=cfg.alpha_cur,
                           alpha_enc=cfg.alpha_enc, rng=rng)
    return losses, restored_ok


def _instances_by_relation(tasks) -> dict[int, list]:
    out: dict[int, list] = {}
    for t in tasks:
        for part in (t.train, t.valid, t.test):
            for inst in part:
                out.setdefault(inst.label, []).append(inst)
    return out


def run_task(model: Model, bank: MemoryBank, task: Task, cfg: TrainConfig, *,
             prev_tasks=(), analogous_pairs=(), memory_k: int = 10,
             selection: str = "kmeans") -> TaskMetrics:
    """One continual step; see the module docstring for the exact order."""
    prev_tasks = list(prev_tasks)
    if task.index != len(prev_tasks) + 1:
        raise ValueError(f"task index {task.index} but {len(prev_tasks)} tasks seen so far")

    model.head = grow(model.head, task.relations, derive_seed(cfg.seed, "grow", task.index))
    snap = snapshot_prev(model.head)
    stage1_losses = train_stage1(model, task, cfg)

    # Stage-1 damage diagnostics on previous validation data. F1 is read off
    # the model as it will enter stage 2, i.e. with the snapshot restored when
    # empirical initialization is on; the probability mass is the raw post-
    # stage-1 output, the classifier-bias signal itself.
    prev_valid = [inst for t in prev_tasks for inst in t.valid]
    prev_rids = [rid for t in prev_tasks for rid in t.relations]
    prev_set = set(prev_rids)
    mass = None
    f1_mean = None
    if prev_valid:
        mass = prev_prob_mass(model, prev_valid)
        diag_model = model
        if cfg.use_empirical_init:
            diag_model = Model(encoder=model.encoder, head=restore_prev(model.head, snap))
        f1 = per_relation_f1(diag_model, prev_valid, prev_rids)
        f1_mean = float(np.mean(list(f1.values())))

    # The pair statistic is unsupervised geometry, so it uses every instance
    # of the two relations to keep the estimate tight.
    sils: dict[tuple[int, int], float] = {}
    insts_by_rid = _instances_by_relation(prev_tasks + [task])
    seen = prev_set | set(task.relations)
    for a, b in analogous_pairs:
        # measurable once both members have been seen (they arrive in
        # different tasks, so from the later member's task onward)
        if a not in seen or b not in seen:
            continue
        if len(insts_by_rid.get(a, [])) < 2 or len(insts_by_rid.get(b, [])) < 2:
            continue
        pair_insts = insts_by_rid[a] + insts_by_rid[b]
        reps = encode_batch(model.encoder, np.stack([i.features for i in pair_insts]))
        sils[(a, b)] = pair_silhouette(reps, [i.label for i in pair_insts])

    for rid in sorted(task.relations):
        insts = [inst for inst in task.train if inst.label == rid]
        ex_seed = derive_seed(cfg.seed, "exemplar", task.index, rid)
        if selection == "kmeans":
            reps = encode_batch(model.encoder, np.stack([i.features for i in insts]))
            exemplars = select_exemplars(insts, reps, memory_k, ex_seed)
        elif selection == "random":
            exemplars = select_random(insts, memory_k, ex_seed)
        else:
            raise ValueError(f"unknown exemplar selection {selection!r}")
        update_bank(bank, rid, exemplars)

    stage2_losses, restored_ok = train_stage2(model, bank, cfg, snap, task.index)

    test_union = [inst for t in prev_tasks for inst in t.test] + list(task.test)
    acc = accuracy_all_seen(model, test_union)
    return TaskMetrics(task_index=task.index, accuracy=acc, prev_f1_mean=f1_mean,
                       prev_prob_mass=mass, pair_silhouettes=sils,
                       restore_bit_exact=restored_ok, stage1_losses=stage1_losses,
                       stage2_losses=stage2_losses)


def run_sequence(tasks: list[Task], cfg: TrainConfig, *, memory_k: int = 10,
                 encoder_dim: int = 64, encoder_hidden: int = 64,
                 analogous_pairs=(), selection: str = "kmeans") -> RunMetrics:
    """Fresh model and empty bank folded over the whole task sequence."""
    if not tasks:
        raise ValueError("empty task sequence")
    cfg.validate()
    feature_dim = tasks[0].train[0].features.shape[0]
    encoder = init_encoder(feature_dim, encoder_hidden, encoder_dim,
                           derive_seed(cfg.seed, "encoder"))
    model = Model(encoder=encoder, head=empty_head(encoder_dim))
    bank = MemoryBank(capacity=memory_k)
    metrics = RunMetrics()
    for k, task in enumerate(tasks):
        metrics.tasks.append(run_task(model, bank, task, cfg, prev_tasks=tasks[:k],
                                      analogous_pairs=analogous_pairs,
                                      memory_k=memory_k, selection=selection))
    return metrics
