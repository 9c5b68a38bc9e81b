"""Mini-batch training loop for the composite objective with keep-best validation."""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from adapt.objective import CompositeLoss, composite_step
from classifier.network import TrailNet, init_params, predict
from classifier.optim import clip_gradients, make_opt_state, sgd_step
from data.capture import Dataset
from models.models import AdaptConfig
from utils.rng import derive_seed, stream

logger = logging.getLogger(__name__)


class Evaluation(NamedTuple):
    accuracy: float
    confusion: np.ndarray  # (3, 3), rows = true label, columns = prediction


@dataclass
class TrainingLog:
    mmd_columns: list[str]
    rows: list[dict] = field(default_factory=list)
    best_iteration: int | None = None
    best_accuracy: float | None = None

    @property
    def columns(self) -> list[str]:
        return ["iteration", "lr", "ce", *self.mmd_columns, "total", "val_accuracy"]

    def validation_rows(self) -> list[dict]:
        return [row for row in self.rows if row["val_accuracy"] is not None]


def mmd_column(source: int, layer: str) -> str:
    return f"mmd_src{source}_{layer}"


def evaluate(net: TrailNet, ds: Dataset) -> Evaluation:
    """Accuracy of argmax predictions (lowest class index on ties) and the confusion matrix."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    predicted = np.argmax(predict(net, ds.pixels).numpy(), axis=1)
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (ds.labels.astype(np.int64), predicted), 1)
    return Evaluation(accuracy=float(np.trace(confusion)) / len(ds), confusion=confusion)


def _draw(rng: np.random.Generator, ds: Dataset, size: int) -> np.ndarray:
    return rng.choice(len(ds), size=size, replace=len(ds) < size)


def train_adaptive(
    cfg: AdaptConfig,
    sources: list[Dataset],
    target: Dataset | None,
    val: Dataset,
    seed: int,
    init: TrailNet | None = None,
) -> tuple[TrailNet, TrainingLog]:
    """Train from ``init`` (or fresh MSRA weights) and return the best-validating network.

    Validation runs on the starting network (iteration 0), every ``val_interval`` iterations
    and after the last one; ties keep the earliest checkpoint.
    """
    if not sources or any(len(src) == 0 for src in sources):
        raise ValueError("every source dataset must be nonempty")
    if cfg.lambda_ > 0 and (target is None or len(target) == 0):
        raise ValueError("lambda > 0 needs an unlabeled target dataset")
    if len(val) == 0:
        raise ValueError("validation set must be nonempty")

    heads = len(sources) if cfg.per_source_heads else 1
    if init is None:
        net = init_params(derive_seed(seed, "init"), sources[0].width, num_heads=heads)
    elif init.num_heads != heads:
        net = init.with_heads(heads)
    else:
        net = copy.deepcopy(init)

    opt = make_opt_state(
        net, cfg.learning_rate, cfg.momentum, cfg.lr_step, cfg.lr_decay, cfg.warmup_iterations
    )
    rng = stream(seed, "batches")
    log = TrainingLog(
        mmd_columns=[mmd_column(s, layer) for s in range(len(sources)) for layer in cfg.adapted_layers]
        if cfg.lambda_ > 0
        else []
    )
    best_state = copy.deepcopy(net.state_dict())

    def record(iteration: int, lr: float, loss: CompositeLoss, validate: bool) -> None:
        nonlocal best_state
        row = {"iteration": iteration, "lr": lr, "ce": loss.ce}
        row.update({mmd_column(s, layer): value for (s, layer), value in loss.mmd.items()})
        row["total"] = loss.total
        row["val_accuracy"] = None
        if validate:
            accuracy = evaluate(net, val).accuracy
            row["val_accuracy"] = accuracy
            if log.best_accuracy is None or accuracy > log.best_accuracy:
                log.best_accuracy, log.best_iteration = accuracy, iteration
                best_state = copy.deepcopy(net.state_dict())
            logger.info(
                f"iter {iteration}: ce={loss.ce:.4f} total={loss.total:.4f} "
                f"val_accuracy={accuracy:.4f} (best {log.best_accuracy:.4f} @ {log.best_iteration})"
            )
        log.rows.append(row)

    for iteration in range(1, cfg.max_iterations + 1):
        batches = []
        for src in sources:
            idx = _draw(rng, src, cfg.batch_per_domain)
            batches.append((src.pixels[idx], src.labels[idx]))
        target_pixels = None
        if cfg.lambda_ > 0:
            target_pixels = target.pixels[_draw(rng, target, cfg.batch_per_domain)]

        lr = opt.learning_rate
        loss, grads = composite_step(net, batches, target_pixels, cfg)
        if iteration == 1:
            # row 0 is the starting network, with the pre-step loss of the first batch
            record(0, lr, loss, validate=True)
        norm = clip_gradients(grads, cfg.max_grad_norm)
        if not math.isfinite(norm):
            raise ValueError(f"training diverged: non-finite gradient norm at iteration {iteration}")
        sgd_step(net, grads, opt)

        validate = iteration % cfg.val_interval == 0 or iteration == cfg.max_iterations
        if validate or iteration % cfg.log_interval == 0:
            record(iteration, lr, loss, validate)

    net.load_state_dict(best_state)
    return net, log
