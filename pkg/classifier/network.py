"""Compact trail-direction CNN and its cross-entropy machinery."""

from collections.abc import Mapping, Sequence
from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

NUM_CLASSES = 3
FEATURE_DIM = 64
CONV_WIDTHS = (3, 16, 32, 64)
LOG_EPS = 1e-12
INPUT_CENTER = 0.5


class NetOutput(NamedTuple):
    feat: torch.Tensor  # (B, 64) post-ReLU fc_feat activation
    logits: torch.Tensor  # (B, 3)
    probs: torch.Tensor  # (B, 3)


class TrailNet(nn.Module):
    """Three conv/ReLU/max-pool stages (16, 32, 64 channels), fc_feat (64), classifier head(s).

    With more than one head the trunk is shared; ``forward(x)`` without a head index
    averages the heads' probabilities.
    """

    def __init__(self, image_size: int = 32, num_heads: int = 1):
        super().__init__()
        if image_size < 16 or image_size % 8:
            raise ValueError(f"image size must be >= 16 and divisible by 8, got {image_size}")
        if num_heads < 1:
            raise ValueError("need at least one classifier head")
        self.image_size = image_size
        self.convs = nn.ModuleList(
            nn.Conv2d(c_in, c_out, kernel_size=3, padding=1)
            for c_in, c_out in zip(CONV_WIDTHS[:-1], CONV_WIDTHS[1:], strict=True)
        )
        flat = CONV_WIDTHS[-1] * (image_size // 8) ** 2
        self.fc_feat = nn.Linear(flat, FEATURE_DIM)
        self.heads = nn.ModuleList(nn.Linear(FEATURE_DIM, NUM_CLASSES) for _ in range(num_heads))

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        # inputs arrive in [0, 1]; the trunk sees them centered on 0
        out = x - INPUT_CENTER
        for conv in self.convs:
            out = F.max_pool2d(F.relu(conv(out)), 2)
        return F.relu(self.fc_feat(out.flatten(1)))

    def head_logits(self, feat: torch.Tensor, head: int = 0) -> torch.Tensor:
        return self.heads[head](feat)

    def forward(self, x: torch.Tensor, head: int | None = None) -> NetOutput:
        feat = self.features(x)
        if head is not None or self.num_heads == 1:
            logits = self.head_logits(feat, head or 0)
            return NetOutput(feat, logits, torch.softmax(logits, dim=1))
        probs = torch.stack([torch.softmax(h(feat), dim=1) for h in self.heads]).mean(0)
        return NetOutput(feat, torch.log(probs + LOG_EPS), probs)

    def with_heads(self, num_heads: int) -> "TrailNet":
        """Copy of this network whose every head starts from head 0."""
        net = TrailNet(self.image_size, num_heads).to(next(self.parameters()).dtype)
        state = {k: v for k, v in self.state_dict().items() if not k.startswith("heads.")}
        for h in range(num_heads):
            state[f"heads.{h}.weight"] = self.heads[0].weight.detach().clone()
            state[f"heads.{h}.bias"] = self.heads[0].bias.detach().clone()
        net.load_state_dict(state)
        return net


def init_params(
    seed: int, image_size: int = 32, num_heads: int = 1, dtype: torch.dtype = torch.float32
) -> TrailNet:
    """MSRA (He, fan-in) weights and zero biases, deterministic in ``seed``."""
    net = TrailNet(image_size, num_heads).to(dtype)
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, param in net.named_parameters():
            if name.endswith("bias"):
                nn.init.zeros_(param)
            else:
                nn.init.kaiming_normal_(param, mode="fan_in", nonlinearity="relu", generator=generator)
    return net


def to_batch(pixels, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(B, H, W, 3) uint8 array or tensor -> (B, 3, H, W) values in [0, 1]."""
    tensor = torch.as_tensor(pixels)
    return tensor.permute(0, 3, 1, 2).to(dtype) / 255.0


def forward(params: TrailNet, batch: torch.Tensor, head: int | None = None) -> NetOutput:
    if batch.ndim != 4 or batch.shape[0] < 1:
        raise ValueError(f"expected a (B, 3, H, W) batch, got shape {tuple(batch.shape)}")
    if not torch.isfinite(batch).all():
        raise ValueError("batch contains non-finite values")
    return params(batch, head)


def _check_labels(labels: torch.Tensor) -> torch.Tensor:
    labels = torch.as_tensor(labels, dtype=torch.long)
    if labels.numel() and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
        raise ValueError(f"labels must lie in {{0, 1, 2}}, got {labels.unique().tolist()}")
    return labels


def cross_entropy(
    probs: torch.Tensor, labels, weights: torch.Tensor | None = None
) -> torch.Tensor:
    """-(1/B) sum log(p[i, y_i] + eps); ``weights`` replaces the uniform 1/B."""
    labels = _check_labels(labels)
    picked = torch.log(probs.gather(1, labels[:, None]).squeeze(1) + LOG_EPS)
    if weights is None:
        return -picked.mean()
    return -(weights.to(picked.dtype) * picked).sum()


def cross_entropy_logits(
    logits: torch.Tensor, labels, weights: torch.Tensor | None = None
) -> torch.Tensor:
    """Same loss as ``cross_entropy(softmax(logits))`` without the eps floor, via log-softmax.

    The gradient stays (p - onehot) even where the softmax saturates.
    """
    labels = _check_labels(labels)
    picked = F.log_softmax(logits, dim=1).gather(1, labels[:, None]).squeeze(1)
    if weights is None:
        return -picked.mean()
    return -(weights.to(picked.dtype) * picked).sum()


def parameter_gradients(
    params: TrailNet, roots: Sequence[torch.Tensor], root_grads: Sequence[torch.Tensor | None]
) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of sum_k <roots[k], root_grads[k]> for every named parameter."""
    named = list(params.named_parameters())
    grads = torch.autograd.grad(
        list(roots), [p for _, p in named], grad_outputs=list(root_grads), allow_unused=True
    )
    return {
        name: torch.zeros_like(p) if g is None else g for (name, p), g in zip(named, grads, strict=True)
    }


def backward(
    params: TrailNet,
    batch: torch.Tensor,
    labels,
    extra_feat_grad: torch.Tensor | None = None,
    extra_logits_grad: torch.Tensor | None = None,
    ce_weights: torch.Tensor | None = None,
    head: int = 0,
) -> dict[str, torch.Tensor]:
    """Gradients of cross-entropy plus any upstream term injected at fc_feat / the logits."""
    out = forward(params, batch, head)
    loss = cross_entropy_logits(out.logits, labels, ce_weights)
    roots, root_grads = [loss], [torch.ones_like(loss)]

    for name, tensor, extra in (("feat", out.feat, extra_feat_grad), ("logits", out.logits, extra_logits_grad)):
        if extra is None:
            continue
        if extra.shape != tensor.shape:
            raise ValueError(f"extra_{name}_grad shape {tuple(extra.shape)} != {tuple(tensor.shape)}")
        roots.append(tensor)
        root_grads.append(extra.to(tensor.dtype))

    return parameter_gradients(params, roots, root_grads)


def predict(params: TrailNet, pixels, batch_size: int = 512) -> torch.Tensor:
    """Class probabilities for a (N, H, W, 3) uint8 array."""
    dtype = next(params.parameters()).dtype
    chunks = []
    with torch.no_grad():
        for start in range(0, len(pixels), batch_size):
            chunks.append(forward(params, to_batch(pixels[start : start + batch_size], dtype)).probs)
    if not chunks:
        return torch.zeros((0, NUM_CLASSES), dtype=dtype)
    return torch.cat(chunks)


def named_state(params: TrailNet) -> Mapping[str, torch.Tensor]:
    return {name: p.detach() for name, p in params.named_parameters()}
