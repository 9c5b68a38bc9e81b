"""Cross-entropy on the sources plus lambda-weighted MK-MMD between each source and the target."""

from collections.abc import Sequence
from typing import NamedTuple

import numpy as np
import torch

from adapt.mmd import bank_for, mmd2, mmd2_grad
from classifier.network import TrailNet, cross_entropy_logits, parameter_gradients, to_batch
from models.models import AdaptConfig


class CompositeLoss(NamedTuple):
    total: float
    ce: float
    # (source index, layer name) -> mmd2 value; empty when lambda is 0
    mmd: dict[tuple[int, str], float]


SourceBatch = tuple[np.ndarray, np.ndarray]  # (B, H, W, 3) uint8 pixels, (B,) labels


def _source_head(cfg: AdaptConfig, source: int) -> int:
    return source if cfg.per_source_heads else 0


def composite_step(
    net: TrailNet,
    source_batches: Sequence[SourceBatch],
    target_pixels: np.ndarray | None,
    cfg: AdaptConfig,
    with_gradients: bool = True,
) -> tuple[CompositeLoss, dict[str, torch.Tensor] | None]:
    """Loss terms and parameter gradients of one mini-batch iteration.

    One forward pass covers every source and target row. MMD gradients are evaluated
    analytically on the detached activations and injected back at the adapted layers.
    """
    if not source_batches:
        raise ValueError("at least one source batch is required")
    adapt = cfg.lambda_ > 0
    if adapt and (target_pixels is None or len(target_pixels) == 0):
        raise ValueError("lambda > 0 needs target samples")
    if cfg.per_source_heads and net.num_heads < len(source_batches):
        raise ValueError(f"{len(source_batches)} sources but the network has {net.num_heads} heads")

    dtype = next(net.parameters()).dtype
    chunks = [pixels for pixels, _ in source_batches]
    if adapt:
        chunks.append(target_pixels)
    sizes = [len(c) for c in chunks]
    if adapt and min(sizes) < 2:
        raise ValueError("every batch entering an MMD estimator needs >= 2 samples")

    with torch.set_grad_enabled(with_gradients):
        feat_all = net.features(to_batch(np.concatenate(chunks), dtype))
        feats = list(torch.split(feat_all, sizes))

        sources = len(source_batches)
        ce = 0.0
        logits = []
        for s, (_, labels) in enumerate(source_batches):
            out = net.head_logits(feats[s], _source_head(cfg, s))
            logits.append(out)
            ce = ce + cross_entropy_logits(out, labels) / sources

        roots: list[torch.Tensor] = [ce]
        root_grads: list[torch.Tensor] = [torch.ones_like(ce)]
        mmd_terms: dict[tuple[int, str], float] = {}

        if adapt:
            target_feat = feats[-1]
            target_logits: dict[int, torch.Tensor] = {}
            target_grads: dict[tuple[str, int], torch.Tensor] = {}
            for s in range(sources):
                head = _source_head(cfg, s)
                for layer in cfg.adapted_layers:
                    if layer == "fc_feat":
                        x, y, key = feats[s], target_feat, ("fc_feat", -1)
                    else:
                        if head not in target_logits:
                            target_logits[head] = net.head_logits(target_feat, head)
                        x, y, key = logits[s], target_logits[head], ("fc_out", head)
                    x_val, y_val = x.detach(), y.detach()
                    bank = bank_for(x_val, y_val, cfg.kernel_count, cfg.bandwidth_spread)
                    mmd_terms[(s, layer)] = float(mmd2(bank, x_val, y_val, cfg.estimator))
                    if with_gradients:
                        d_x, d_y = mmd2_grad(bank, x_val, y_val, cfg.estimator)
                        roots.append(x)
                        root_grads.append(cfg.lambda_ * d_x)
                        target_grads[key] = target_grads.get(key, 0.0) + cfg.lambda_ * d_y
            for (layer, head), grad in target_grads.items():
                roots.append(target_feat if layer == "fc_feat" else target_logits[head])
                root_grads.append(grad)

    ce_value = ce.detach().item()
    loss = CompositeLoss(
        total=ce_value + cfg.lambda_ * sum(mmd_terms.values()),
        ce=ce_value,
        mmd=mmd_terms,
    )
    if not with_gradients:
        return loss, None
    return loss, parameter_gradients(net, roots, root_grads)


def composite_loss(
    net: TrailNet,
    source_batches: Sequence[SourceBatch],
    target_pixels: np.ndarray | None,
    cfg: AdaptConfig,
) -> CompositeLoss:
    loss, _ = composite_step(net, source_batches, target_pixels, cfg, with_gradients=False)
    return loss
