"""Experiment runner: config parsing, multi-seed runs, the four-way strategy
ablation, and the previous-classifier learning-rate sweep.

Config files are flat `key = value` lines (# comments allowed); every key has
a default, and `--set key=value` overrides win over the file. All outputs are
pure functions of the resolved config, so reruns are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

import numpy as np

from .backend import backend_name
from .datastream import SyntheticSpec, assemble_tasks, gen_synthetic, load_embeddings, split_instances, split_tasks
from .seeding import derive_seed
from .training import RunMetrics, TrainConfig, run_sequence

ACCURACY_SCHEMA = "# contrel accuracy.csv schema v1"
ABLATION_SCHEMA = "# contrel ablation.csv schema v1"
SWEEP_SCHEMA = "# contrel sweep.csv schema v1"

SWEEP_DEFAULT_VALUES = (0.0, 1e-6, 1e-5, 1e-4)

ABLATION_VARIANTS = {
    "full": (True, True),
    "wo_empirical_init": (False, True),
    "wo_adversarial_tuning": (True, False),
    "wo_both": (False, False),
}


class ConfigError(Exception):
    """Bad configuration or usage; the CLI maps this to exit code 2."""


@dataclass
class ExperimentConfig:
    """Flat, fully-resolved experiment description (see module docstring)."""

    dataset: str = "synthetic"
    embeddings_path: str = ""
    num_relations: int = 40
    instances_per_relation: int = 100
    feature_dim: int = 32
    sigma: float = 1.0
    pair_offset: float = 1.0
    num_pairs: int = 4
    separate_pairs: bool = True
    num_tasks: int = 10
    memory_k: int = 10
    seeds: tuple[int, ...] = (31, 32, 33, 34, 35)
    encoder_dim: int = 64
    # narrow hidden layer: tasks compete for encoder capacity, which is what
    # gives the stage-1 strategies something measurable to protect
    encoder_hidden: int = 12
    exemplar_selection: str = "kmeans"
    epochs_stage1: int = 10
    epochs_stage2: int = 10
    batch_size: int = 32
    alpha_cur: float = 1e-3
    alpha_prev: float = 1e-5
    alpha_enc: float = 3e-4
    alpha_enc_stage1: float = 3e-3  # < 0 means "same as alpha_enc"
    use_empirical_init: bool = True
    use_adversarial_tuning: bool = True
    out_dir: str = "runs/latest"

    def validate(self) -> None:
        if self.dataset not in ("synthetic", "embeddings"):
            raise ConfigError(f"dataset must be synthetic or embeddings, got {self.dataset!r}")
        if self.dataset == "embeddings" and not self.embeddings_path:
            raise ConfigError("embeddings dataset needs embeddings_path")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be >= 1")
        if self.memory_k < 1:
            raise ConfigError("memory_k must be >= 1")
        if self.exemplar_selection not in ("kmeans", "random"):
            raise ConfigError(f"exemplar_selection must be kmeans or random, got {self.exemplar_selection!r}")
        if min(self.alpha_cur, self.alpha_prev, self.alpha_enc) < 0:
            raise ConfigError("learning rates must be >= 0")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            epochs_stage1=self.epochs_stage1,
            epochs_stage2=self.epochs_stage2,
            batch_size=self.batch_size,
            alpha_cur=self.alpha_cur,
            alpha_prev=self.alpha_prev,
            alpha_enc=self.alpha_enc,
            alpha_enc_stage1=None if self.alpha_enc_stage1 < 0 else self.alpha_enc_stage1,
            use_empirical_init=self.use_empirical_init,
            use_adversarial_tuning=self.use_adversarial_tuning,
            seed=seed,
        )

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        return out


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(key: str, raw: str):
    fields = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    if key not in fields:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(ExperimentConfig(), key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(raw)
            return _BOOL_WORDS[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):  # seeds
            return tuple(int(p) for p in raw.split(",") if p.strip())
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for config key {key!r}") from None


def parse_config_file(path) -> dict:
    """Flat key=value file into a raw string dict."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}: line {lineno}: expected key = value")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.split("#", 1)[0].strip()
    return out


def resolve_config(config_path=None, overrides=(), seeds=None, out_dir=None) -> ExperimentConfig:
    """Defaults <- config file <- --set overrides <- --seeds/--out flags."""
    raw: dict[str, str] = {}
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        raw.update(parse_config_file(config_path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        raw[key.strip()] = value.strip()
    values = {key: _coerce(key, value) for key, value in raw.items()}
    cfg = ExperimentConfig(**values)
    if seeds is not None:
        cfg.seeds = tuple(seeds)
    if out_dir is not None:
        cfg.out_dir = out_dir
    cfg.validate()
    return cfg


def default_pairs(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    if cfg.dataset != "synthetic" or cfg.num_pairs <= 0:
        return []
    if 2 * cfg.num_pairs > cfg.num_relations:
        raise ConfigError("num_pairs too large for num_relations")
    return [(2 * i, 2 * i + 1) for i in range(cfg.num_pairs)]


def build_tasks(cfg: ExperimentConfig, seed: int):
    """Task sequence plus analogous pairs for one sampling seed."""
    pairs = default_pairs(cfg)
    if cfg.dataset == "synthetic":
        spec = SyntheticSpec(
            num_relations=cfg.num_relations,
            instances_per_relation=cfg.instances_per_relation,
            feature_dim=cfg.feature_dim,
            sigma=cfg.sigma,
            analogous_pairs=pairs,
            pair_offset=cfg.pair_offset,
        )
        instances = gen_synthetic(spec, derive_seed(seed, "data"))
        split = split_instances(instances, derive_seed(seed, "split"))
        relation_sets = split_tasks(range(cfg.num_relations), cfg.num_tasks,
                                    derive_seed(seed, "tasks"),
                                    separate_pairs=pairs if cfg.separate_pairs else ())
    else:
        if not os.path.exists(cfg.embeddings_path):
            raise FileNotFoundError(f"embeddings file not found: {cfg.embeddings_path}")
        split = load_embeddings(cfg.embeddings_path)
        relation_sets = split_tasks(sorted(split), cfg.num_tasks, derive_seed(seed, "tasks"))
        pairs = []
    return assemble_tasks(split, relation_sets), pairs


def run_one_seed(cfg: ExperimentConfig, seed: int, *, use_empirical_init=None,
                 use_adversarial_tuning=None, alpha_prev=None) -> RunMetrics:
    tasks, pairs = build_tasks(cfg, seed)
    train_cfg = cfg.train_config(seed)
    if use_empirical_init is not None:
        train_cfg.use_empirical_init = use_empirical_init
    if use_adversarial_tuning is not None:
        train_cfg.use_adversarial_tuning = use_adversarial_tuning
    if alpha_prev is not None:
        train_cfg.alpha_prev = alpha_prev
    return run_sequence(tasks, train_cfg, memory_k=cfg.memory_k,
                        encoder_dim=cfg.encoder_dim, encoder_hidden=cfg.encoder_hidden,
                        analogous_pairs=pairs, selection=cfg.exemplar_selection)


def run_all_seeds(cfg: ExperimentConfig, **variant) -> dict[int, RunMetrics]:
    return {seed: run_one_seed(cfg, seed, **variant) for seed in cfg.seeds}


def ablation_runs(cfg: ExperimentConfig) -> dict[str, dict[int, RunMetrics]]:
    """All four strategy combinations on identical seeds and data."""
    return {
        name: run_all_seeds(cfg, use_empirical_init=ei, use_adversarial_tuning=at)
        for name, (ei, at) in ABLATION_VARIANTS.items()
    }


def sweep_runs(cfg: ExperimentConfig, values) -> dict[float, dict[int, RunMetrics]]:
    """One full multi-seed run per previous-group learning rate."""
    for v in values:
        if v < 0:
            raise ConfigError(f"alpha_prev sweep value must be >= 0, got {v}")
    return {float(v): run_all_seeds(cfg, alpha_prev=float(v)) for v in values}


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def write_accuracy_csv(path, results: dict[int, RunMetrics]) -> None:
    rows = [ACCURACY_SCHEMA,
            "seed,task_index,accuracy,prev_f1_mean,prev_prob_mass,pair_silhouette"]
    for seed in sorted(results):
        for t in results[seed].tasks:
            rows.append(",".join([
                str(seed), str(t.task_index), _fmt(t.accuracy), _fmt(t.prev_f1_mean),
                _fmt(t.prev_prob_mass), _fmt(t.pair_silhouette_mean),
            ]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def summarize(cfg: ExperimentConfig, results: dict[int, RunMetrics]) -> dict:
    num_tasks = len(next(iter(results.values())).tasks)
    per_task = []
    for k in range(num_tasks):
        accs = [results[s].tasks[k].accuracy for s in sorted(results)]
        mean, std = _mean_std(accs)
        entry = {"task_index": k + 1, "mean_accuracy": mean, "std_accuracy": std}
        for name in ("prev_f1_mean", "prev_prob_mass"):
            vals = [getattr(results[s].tasks[k], name) for s in sorted(results)]
            vals = [v for v in vals if v is not None]
            if vals:
                m, sd = _mean_std(vals)
                entry[f"mean_{name}"] = m
                entry[f"std_{name}"] = sd
        sils = [results[s].tasks[k].pair_silhouette_mean for s in sorted(results)]
        sils = [v for v in sils if v is not None]
        if sils:
            m, sd = _mean_std(sils)
            entry["mean_pair_silhouette"] = m
            entry["std_pair_silhouette"] = sd
        per_task.append(entry)
    final_accs = [results[s].final_accuracy for s in sorted(results)]
    fmean, fstd = _mean_std(final_accs)
    return {
        "schema": "contrel summary.json v1",
        "backend": backend_name(),
        "config": cfg.resolved(),
        "per_task": per_task,
        "final": {"mean_accuracy": fmean, "std_accuracy": fstd},
    }


def write_summary_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def accuracy_row(results: dict[int, RunMetrics]) -> str:
    """Mean accuracy per task step, one line, percent style."""
    num_tasks = len(next(iter(results.values())).tasks)
    cells = []
    for k in range(num_tasks):
        mean, _ = _mean_std([results[s].tasks[k].accuracy for s in sorted(results)])
        cells.append(f"{100.0 * mean:.1f}")
    header = " ".join(f"T{k + 1}" for k in range(num_tasks))
    return f"task:     {header}\naccuracy: {' '.join(cells)}"


def cmd_run(cfg: ExperimentConfig) -> dict[int, RunMetrics]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    results = run_all_seeds(cfg)
    write_accuracy_csv(os.path.join(cfg.out_dir, "accuracy.csv"), results)
    write_summary_json(os.path.join(cfg.out_dir, "summary.json"), summarize(cfg, results))
    print(accuracy_row(results))
    return results


def write_ablation_csv(path, runs: dict[str, dict[int, RunMetrics]]) -> None:
    rows = [ABLATION_SCHEMA, "variant,seed,final_accuracy"]
    for name in ABLATION_VARIANTS:
        for seed in sorted(runs[name]):
            rows.append(f"{name},{seed},{_fmt(runs[name][seed].final_accuracy)}")
    for name in ABLATION_VARIANTS:
        mean, _ = _mean_std([m.final_accuracy for m in runs[name].values()])
        rows.append(f"{name},mean,{_fmt(mean)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def cmd_ablation(cfg: ExperimentConfig) -> dict[str, dict[int, RunMetrics]]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = ablation_runs(cfg)
    write_ablation_csv(os.path.join(cfg.out_dir, "ablation.csv"), runs)
    means = {name: _mean_std([m.final_accuracy for m in per_seed.values()])[0]
             for name, per_seed in runs.items()}
    deltas = [runs["full"][s].final_accuracy - runs["wo_both"][s].final_accuracy
              for s in sorted(runs["full"])]
    dmean, dstd = _mean_std(deltas)
    for name, mean in means.items():
        print(f"{name}: {100.0 * mean:.2f}")
    print(f"full - wo_both: {100.0 * dmean:.2f} +/- {100.0 * dstd:.2f}")
    return runs


def write_sweep_csv(path, runs: dict[float, dict[int, RunMetrics]]) -> None:
    rows = [SWEEP_SCHEMA, "alpha_prev,mean_final_accuracy,std_final_accuracy"]
    for value in runs:
        mean, std = _mean_std([m.final_accuracy for m in runs[value].values()])
        rows.append(f"{_fmt(value)},{_fmt(mean)},{_fmt(std)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


def cmd_sweep(cfg: ExperimentConfig, values) -> dict[float, dict[int, RunMetrics]]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    runs = sweep_runs(cfg, values)
    write_sweep_csv(os.path.join(cfg.out_dir, "sweep.csv"), runs)
    for value in runs:
        mean, _ = _mean_std([m.final_accuracy for m in runs[value].values()])
        print(f"alpha_prev={value!r}: {100.0 * mean:.2f}")
    return runs
