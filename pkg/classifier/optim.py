"""SGD with momentum, linear warmup and step annealing, on top of torch.optim."""

from dataclasses import dataclass, field

import torch
from torch.optim import SGD
from torch.optim.lr_scheduler import LambdaLR

from classifier.network import TrailNet


@dataclass
class OptState:
    """Optimizer, schedule and step counter of one training run.

    ``velocity`` follows v <- momentum * v - lr * g, w <- w + v; torch keeps the buffer in
    gradient units, so the reported velocity is -lr times that buffer.
    """

    optimizer: SGD
    scheduler: LambdaLR
    names: list[str]
    iteration: int = 0
    velocity: dict[str, torch.Tensor] = field(default_factory=dict)

    @property
    def learning_rate(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])

    @property
    def momentum(self) -> float:
        return float(self.optimizer.param_groups[0]["momentum"])


def lr_factor(iteration: int, step_interval: int, decay: float, warmup: int = 0) -> float:
    """Multiplier of the base rate at ``iteration`` (0-based)."""
    ramp = min(1.0, (iteration + 1) / warmup) if warmup > 0 else 1.0
    return ramp * decay ** (iteration // step_interval)


def make_opt_state(
    params: TrailNet,
    learning_rate: float,
    momentum: float,
    step_interval: int = 1000,
    decay: float = 0.5,
    warmup: int = 0,
) -> OptState:
    if learning_rate <= 0:
        raise ValueError(f"learning rate must be > 0, got {learning_rate}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must lie in [0, 1), got {momentum}")
    if warmup < 0:
        raise ValueError(f"warmup must be >= 0, got {warmup}")
    named = list(params.named_parameters())
    optimizer = SGD([p for _, p in named], lr=learning_rate, momentum=momentum, foreach=False)
    scheduler = LambdaLR(optimizer, lambda t: lr_factor(t, step_interval, decay, warmup))
    return OptState(
        optimizer=optimizer,
        scheduler=scheduler,
        names=[name for name, _ in named],
        velocity={name: torch.zeros_like(p) for name, p in named},
    )


def clip_gradients(grads: dict[str, torch.Tensor], max_norm: float) -> float:
    """Rescale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the norm before."""
    norm = float(torch.linalg.vector_norm(torch.stack([torch.linalg.vector_norm(g) for g in grads.values()])))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for name in grads:
            grads[name] = grads[name] * scale
    return norm


def sgd_step(params: TrailNet, grads: dict[str, torch.Tensor], opt: OptState) -> OptState:
    """One in-place update of ``params``; the learning rate follows the warmup/step schedule."""
    named = dict(params.named_parameters())
    if set(grads) != set(named):
        raise ValueError(f"gradient names do not match parameters: {sorted(set(grads) ^ set(named))}")
    for name, param in named.items():
        if grads[name].shape != param.shape:
            raise ValueError(f"gradient for {name} has shape {tuple(grads[name].shape)}")
        param.grad = grads[name].detach().to(param.dtype)

    lr = opt.learning_rate
    opt.optimizer.step()
    for name in opt.names:
        param = named[name]
        buffer = opt.optimizer.state[param].get("momentum_buffer")
        opt.velocity[name] = -lr * (param.grad if buffer is None else buffer).detach().clone()
        param.grad = None

    opt.scheduler.step()
    opt.iteration += 1
    return opt
