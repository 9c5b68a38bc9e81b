"""Experiment orchestration behind the CLI subcommands.

Output tree under ``out``::

    data/<domain>.ftds, data/manifest.yaml
    baseline_seed<s>.ftnn (+ .cfg), baseline_seed<s>_log.csv
    adapted_seed<s>.ftnn (+ .cfg), adapted_seed<s>_log.csv, metrics.csv
    eval.csv, sweep_runs.csv, sweep_lambda.csv, ablation.csv
    fly_summary.csv, episodes/<label>_ep<k>.csv
    resolved.cfg
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from adapt.trainer import evaluate, train_adaptive
from classifier.checkpoint import read_checkpoint, write_checkpoint, write_sidecar
from classifier.network import TrailNet
from data.capture import Dataset, augment, concat, generate_dataset, split, validate_domains
from data.ftds import read_dataset, write_dataset
from data.manifest import build_manifest, load_manifest, manifest_domain_ids, write_manifest
from experiments import reporting
from experiments.config_loader import get_domain, get_task, load_tasks_config, write_resolved_config
from flight.controller import GeometryOraclePolicy, ModelPolicy
from flight.episode import run_episode, summarize_episodes, write_trace_csv
from models.models import (
    AdaptConfig,
    DomainEntry,
    ExperimentConfig,
    FlightSummaryRow,
    MetricsRow,
    TasksConfig,
)
from scene.world import build_world
from utils.rng import derive_seed

logger = logging.getLogger(__name__)

DATA_DIR = "data"
EPISODE_DIR = "episodes"


@dataclass
class TaskDomains:
    # source group name -> registered domains; a single pooled group unless multi_source
    sources: dict[str, list[DomainEntry]]
    targets: list[DomainEntry]
    ablations: dict[str, list[DomainEntry]]

    def all_domains(self) -> list[DomainEntry]:
        seen: dict[str, DomainEntry] = {}
        groups = [*self.sources.values(), self.targets, *self.ablations.values()]
        for group in groups:
            for entry in group:
                seen.setdefault(entry.name, entry)
        return list(seen.values())

    def source_set(self) -> str:
        return "+".join(self.sources)

    def target_set(self) -> str:
        return "+".join(entry.name for entry in self.targets)


@dataclass
class TaskData:
    sources: list[Dataset]  # mirror-augmented, one per source group
    target_unlabeled: Dataset
    target_val: Dataset
    target_test: Dataset


def resolve_domains(cfg: ExperimentConfig, registry: TasksConfig | None = None) -> TaskDomains:
    registry = registry or load_tasks_config()
    task = get_task(registry, cfg.task)

    if cfg.source_domains:
        groups = {name: [name] for name in cfg.source_domains}
    else:
        groups = task.sources
    if not cfg.multi_source:
        pooled = [name for names in groups.values() for name in names]
        groups = {"pooled": list(dict.fromkeys(pooled))}

    targets = cfg.target_domains or task.target
    sources = {group: [get_domain(registry, n) for n in names] for group, names in groups.items()}
    source_names = {entry.name for group in sources.values() for entry in group}
    overlap = source_names & set(targets)
    if overlap:
        raise ValueError(f"domains used as both source and target: {sorted(overlap)}")
    return TaskDomains(
        sources=sources,
        targets=[get_domain(registry, n) for n in targets],
        ablations={
            name: [get_domain(registry, n) for n in subset] for name, subset in task.ablations.items()
        },
    )


def _target_count(cfg: ExperimentConfig, domains: TaskDomains) -> int:
    total = cfg.target_unlabeled + cfg.target_val + cfg.target_test
    return math.ceil(total / len(domains.targets))


def cmd_gen(cfg: ExperimentConfig, out: str | Path) -> Path:
    """Write one FTDS file per domain of the task and the manifest describing them."""
    out = Path(out)
    data_dir = out / DATA_DIR
    data_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out)

    domains = resolve_domains(cfg)
    target_names = {entry.name for entry in domains.targets}
    capture = cfg.capture_config()
    entries = []
    for entry in domains.all_domains():
        role = "target" if entry.name in target_names else "source"
        count = _target_count(cfg, domains) if role == "target" else cfg.samples_per_source
        seed = derive_seed(cfg.data_seed, role, entry.spec.domain_id)
        ds = generate_dataset(entry.spec, count, seed, capture)
        file_name = f"{entry.name}.ftds"
        write_dataset(ds, data_dir / file_name)
        logger.info(f"Wrote {len(ds)} {role} samples to {data_dir / file_name}")
        entries.append(
            {"file": file_name, "role": role, "count": len(ds), "domains": [(entry.name, entry.spec)]}
        )

    return Path(write_manifest(build_manifest(cfg.data_seed, entries), str(data_dir)))


def _read_domain(data_dir: Path, entry: DomainEntry, registered: set[int]) -> Dataset:
    path = data_dir / f"{entry.name}.ftds"
    if not path.exists():
        raise FileNotFoundError(f"Dataset {path} not found; run 'gen' for this task first")
    ds = read_dataset(path)
    validate_domains(ds, registered)
    return ds


def load_task_data(
    cfg: ExperimentConfig, out: str | Path, source_groups: dict[str, list[DomainEntry]] | None = None
) -> TaskData:
    """Augmented source groups plus the pooled target split into unlabeled / val / test."""
    data_dir = Path(out) / DATA_DIR
    registered = manifest_domain_ids(load_manifest(str(data_dir)))
    domains = resolve_domains(cfg)
    groups = source_groups or domains.sources

    sources = [
        augment(concat([_read_domain(data_dir, entry, registered) for entry in group]))
        for group in groups.values()
    ]
    pooled = concat([_read_domain(data_dir, entry, registered) for entry in domains.targets])
    needed = cfg.target_unlabeled + cfg.target_val + cfg.target_test
    if len(pooled) < needed:
        raise ValueError(f"target data holds {len(pooled)} samples, config needs {needed}")
    rest, test = split(pooled, cfg.target_test, derive_seed(cfg.data_seed, "target_test"))
    unlabeled, val = split(rest, cfg.target_val, derive_seed(cfg.data_seed, "target_val"))
    return TaskData(sources=sources, target_unlabeled=unlabeled, target_val=val, target_test=test)


def _checkpoint_path(out: Path, kind: str, seed: int) -> Path:
    return out / f"{kind}_seed{seed}.ftnn"


def _save_run(out: Path, kind: str, seed: int, net: TrailNet, adapt_cfg: AdaptConfig, log) -> Path:
    path = _checkpoint_path(out, kind, seed)
    write_checkpoint(net, path)
    write_sidecar(adapt_cfg, path)
    reporting.write_training_log(out / f"{kind}_seed{seed}_log.csv", log)
    logger.info(f"Saved {kind} checkpoint {path} (best val {log.best_accuracy:.4f} @ {log.best_iteration})")
    return path


def _train_baseline(cfg: ExperimentConfig, out: Path, data: TaskData, seed: int) -> TrailNet:
    adapt_cfg = cfg.baseline_config()
    net, log = train_adaptive(adapt_cfg, data.sources, None, data.target_val, seed)
    _save_run(out, "baseline", seed, net, adapt_cfg, log)
    return net


def load_baseline(out: str | Path, seed: int) -> TrailNet:
    path = _checkpoint_path(Path(out), "baseline", seed)
    if not path.exists():
        raise FileNotFoundError(f"Baseline checkpoint {path} not found; run 'train' first")
    return read_checkpoint(path)


def ensure_baseline(cfg: ExperimentConfig, out: Path, data: TaskData, seed: int) -> TrailNet:
    if _checkpoint_path(out, "baseline", seed).exists():
        return load_baseline(out, seed)
    return _train_baseline(cfg, out, data, seed)


def cmd_train(cfg: ExperimentConfig, out: str | Path) -> dict[int, float]:
    """Source-only (lambda = 0) baseline per seed; returns target test accuracy per seed."""
    out = Path(out)
    write_resolved_config(cfg, out)
    data = load_task_data(cfg, out)
    accuracies = {}
    for seed in cfg.seeds:
        net = _train_baseline(cfg, out, data, seed)
        accuracies[seed] = evaluate(net, data.target_test).accuracy
        logger.info(f"Baseline seed {seed}: target test accuracy {accuracies[seed]:.4f}")
    return accuracies


def cmd_adapt(cfg: ExperimentConfig, out: str | Path) -> list[MetricsRow]:
    """Adapt every seed's baseline to the target and report both accuracies."""
    out = Path(out)
    write_resolved_config(cfg, out)
    domains = resolve_domains(cfg)
    data = load_task_data(cfg, out)
    adapt_cfg = cfg.adapt_config()

    rows = []
    for seed in cfg.seeds:
        baseline = load_baseline(out, seed)
        adapted, log = train_adaptive(
            adapt_cfg, data.sources, data.target_unlabeled, data.target_val, seed, init=baseline
        )
        _save_run(out, "adapted", seed, adapted, adapt_cfg, log)
        rows.append(
            MetricsRow(
                task=cfg.task,
                seed=seed,
                lambda_=adapt_cfg.lambda_,
                estimator=adapt_cfg.estimator.value,
                source_set=domains.source_set(),
                target=domains.target_set(),
                baseline_accuracy=evaluate(baseline, data.target_test).accuracy,
                adapted_accuracy=evaluate(adapted, data.target_test).accuracy,
            )
        )
        logger.info(
            f"Seed {seed}: baseline {rows[-1].baseline_accuracy:.4f} -> adapted {rows[-1].adapted_accuracy:.4f}"
        )
    reporting.write_metrics(out / "metrics.csv", rows)
    return rows


def _existing_checkpoints(cfg: ExperimentConfig, out: Path) -> dict[str, Path]:
    found = {}
    for kind in ("baseline", "adapted"):
        for seed in cfg.seeds:
            path = _checkpoint_path(out, kind, seed)
            if path.exists():
                found[path.stem] = path
    return found


def cmd_eval(cfg: ExperimentConfig, out: str | Path, checkpoint: str | Path | None = None) -> list[dict]:
    """Target test accuracy and confusion matrix of one checkpoint, or of every run's checkpoints."""
    out = Path(out)
    write_resolved_config(cfg, out)
    data = load_task_data(cfg, out)
    checkpoints = {Path(checkpoint).stem: Path(checkpoint)} if checkpoint else _existing_checkpoints(cfg, out)
    if not checkpoints:
        raise FileNotFoundError(f"No checkpoints found under {out}; run 'train' first")

    rows = []
    for label, path in checkpoints.items():
        result = evaluate(read_checkpoint(path), data.target_test)
        row = {"checkpoint": label, "accuracy": result.accuracy}
        row.update(
            {f"true{t}_pred{p}": int(result.confusion[t, p]) for t in range(3) for p in range(3)}
        )
        rows.append(row)
    columns = ["checkpoint", "accuracy"] + [f"true{t}_pred{p}" for t in range(3) for p in range(3)]
    reporting.write_rows(out / "eval.csv", columns, rows)
    return rows


def cmd_fly(
    cfg: ExperimentConfig, out: str | Path, checkpoint: str | Path | None = None, oracle: bool = False
) -> list[FlightSummaryRow]:
    """Seeded closed-loop episodes on target-domain worlds, one summary row per policy."""
    out = Path(out)
    write_resolved_config(cfg, out)
    domains = resolve_domains(cfg)

    policies = []
    checkpoints = {Path(checkpoint).stem: Path(checkpoint)} if checkpoint else _existing_checkpoints(cfg, out)
    for label, path in checkpoints.items():
        policies.append(ModelPolicy(read_checkpoint(path), label=label))
    if oracle:
        policies.append(GeometryOraclePolicy())
    if not policies:
        raise FileNotFoundError(f"No checkpoints found under {out}; pass --checkpoint or --oracle")

    worlds = []
    for episode in range(cfg.fly_episodes):
        spec = domains.targets[episode % len(domains.targets)].spec
        worlds.append(build_world(derive_seed(cfg.fly_seed, "fly", episode), spec, cfg.fly_world_length_m))

    camera = cfg.capture_config().camera
    summaries = []
    for policy in policies:
        results = []
        for episode, world in enumerate(worlds):
            name = f"{policy.label}_ep{episode:03d}"
            frame_dir = out / EPISODE_DIR / "frames" / name if cfg.dump_frames else None
            result = run_episode(
                world,
                policy,
                cfg.controller_config(),
                cfg.dt,
                cfg.fly_max_steps,
                image_size=cfg.image_size,
                camera=camera,
                failure_margin_frac=cfg.failure_margin_frac,
                frame_dir=frame_dir,
            )
            (out / EPISODE_DIR).mkdir(parents=True, exist_ok=True)
            write_trace_csv(result, out / EPISODE_DIR / f"{name}.csv")
            results.append(result)
        summary = summarize_episodes(policy.label, results)
        logger.info(
            f"{policy.label}: median distance {summary.median_distance:.1f} m, failure rate {summary.failure_rate:.2f}"
        )
        summaries.append(summary)
    reporting.write_flight_summary(out / "fly_summary.csv", summaries)
    _attach_flight_stats(out / "metrics.csv", summaries)
    return summaries


def _attach_flight_stats(path: Path, summaries: list[FlightSummaryRow]) -> None:
    """Copy each adapted checkpoint's episode distances into its metrics.csv row."""
    if not path.exists():
        return
    by_label = {summary.label: summary for summary in summaries}
    rows = []
    for row in reporting.read_metrics(path):
        summary = by_label.get(f"adapted_seed{row.seed}")
        if summary is not None:
            row = row.model_copy(
                update={"mean_distance": summary.mean_distance, "median_distance": summary.median_distance}
            )
        rows.append(row)
    reporting.write_metrics(path, rows)


def cmd_sweep_lambda(cfg: ExperimentConfig, out: str | Path) -> list[dict]:
    """One adaptation run per (lambda, seed) from the seed's baseline; lambda 0 is the baseline itself."""
    out = Path(out)
    write_resolved_config(cfg, out)
    if len(cfg.lambda_grid) < 4:
        logger.warning(f"lambda_grid has only {len(cfg.lambda_grid)} values; the trend will be coarse")
    data = load_task_data(cfg, out)

    runs = []
    for seed in cfg.seeds:
        baseline = ensure_baseline(cfg, out, data, seed)
        for lambda_ in cfg.lambda_grid:
            if lambda_ == 0:
                accuracy = evaluate(baseline, data.target_test).accuracy
            else:
                adapt_cfg = cfg.adapt_config(lambda_)
                net, _ = train_adaptive(
                    adapt_cfg, data.sources, data.target_unlabeled, data.target_val, seed, init=baseline
                )
                accuracy = evaluate(net, data.target_test).accuracy
            logger.info(f"lambda={lambda_} seed={seed}: accuracy {accuracy:.4f}")
            runs.append({"lambda": lambda_, "seed": seed, "accuracy": accuracy})
    reporting.write_rows(out / "sweep_runs.csv", ["lambda", "seed", "accuracy"], runs)

    summary = []
    for lambda_ in cfg.lambda_grid:
        accuracies = np.array([run["accuracy"] for run in runs if run["lambda"] == lambda_])
        summary.append(
            {
                "lambda": lambda_,
                "mean_accuracy": float(accuracies.mean()),
                "std_accuracy": float(accuracies.std()),
                "runs": len(accuracies),
            }
        )
    reporting.write_rows(out / "sweep_lambda.csv", ["lambda", "mean_accuracy", "std_accuracy", "runs"], summary)
    return summary


def cmd_ablate_sources(cfg: ExperimentConfig, out: str | Path) -> list[dict]:
    """Baseline and adapted target accuracy for each source subset listed under the task's ablations."""
    out = Path(out)
    write_resolved_config(cfg, out)
    domains = resolve_domains(cfg)
    if not domains.ablations:
        raise ValueError(f"task '{cfg.task}' defines no source ablations")

    adapt_cfg = cfg.adapt_config()
    rows = []
    for subset, entries in domains.ablations.items():
        groups = {entry.name: [entry] for entry in entries} if cfg.multi_source else {subset: entries}
        data = load_task_data(cfg, out, source_groups=groups)
        for seed in cfg.seeds:
            baseline, _ = train_adaptive(cfg.baseline_config(), data.sources, None, data.target_val, seed)
            adapted, _ = train_adaptive(
                adapt_cfg, data.sources, data.target_unlabeled, data.target_val, seed, init=baseline
            )
            row = {
                "source_set": subset,
                "seed": seed,
                "baseline_accuracy": evaluate(baseline, data.target_test).accuracy,
                "adapted_accuracy": evaluate(adapted, data.target_test).accuracy,
            }
            logger.info(
                f"{subset} seed {seed}: baseline {row['baseline_accuracy']:.4f} -> adapted {row['adapted_accuracy']:.4f}"
            )
            rows.append(row)
    reporting.write_rows(
        out / "ablation.csv", ["source_set", "seed", "baseline_accuracy", "adapted_accuracy"], rows
    )
    return rows
