"""Multi-kernel maximum mean discrepancy with a Gaussian kernel bank."""

import math
from dataclasses import dataclass

import numpy as np
import torch
from scipy.spatial.distance import pdist

from models.models import Estimator


class DegenerateInputError(ValueError):
    """All pooled points coincide, so no bandwidth can be read off the data."""


@dataclass(frozen=True)
class KernelBank:
    """k(x, y) = sum_j weights[j] * exp(-||x - y||^2 / (2 bandwidths[j]^2))."""

    bandwidths: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.bandwidths:
            raise ValueError("kernel bank needs at least one kernel")
        if len(self.weights) != len(self.bandwidths):
            raise ValueError("one weight per bandwidth")
        if any(not (s > 0 and math.isfinite(s)) for s in self.bandwidths):
            raise ValueError(f"bandwidths must be finite and > 0, got {self.bandwidths}")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must be >= 0 and sum to 1, got {self.weights}")

    @classmethod
    def from_median(cls, sigma0: float, count: int = 5, spread: float = 2.0) -> "KernelBank":
        """Bandwidths sigma0 * spread^j, j centered on 0 (count 5 -> -2..2), equal weights."""
        exponents = np.arange(count) - (count - 1) / 2.0
        return cls(
            bandwidths=tuple(float(sigma0 * spread**j) for j in exponents),
            weights=(1.0 / count,) * count,
        )

    def gram(self, sq_dist: torch.Tensor) -> torch.Tensor:
        return sum(w * torch.exp(-sq_dist / (2.0 * s * s)) for s, w in zip(self.bandwidths, self.weights, strict=True))

    def gram_slope(self, sq_dist: torch.Tensor) -> torch.Tensor:
        """sum_j weights[j] * k_j / sigma_j^2, the factor in d k(x, y) / dx = factor * (y - x)."""
        return sum(
            w * torch.exp(-sq_dist / (2.0 * s * s)) / (s * s)
            for s, w in zip(self.bandwidths, self.weights, strict=True)
        )


def as_samples(a) -> torch.Tensor:
    if isinstance(a, torch.Tensor):
        return a
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def check_samples(X: torch.Tensor, Y: torch.Tensor, estimator: Estimator) -> None:
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(f"expected (m, d) and (n, d) samples, got {tuple(X.shape)} and {tuple(Y.shape)}")
    need = 2 if Estimator(estimator) is Estimator.UNBIASED else 1
    if len(X) < need or len(Y) < need:
        raise ValueError(f"{Estimator(estimator).value} estimator needs >= {need} samples per side")
    if not (torch.isfinite(X).all() and torch.isfinite(Y).all()):
        raise ValueError("samples contain non-finite values")


def sq_distances(A: torch.Tensor, B: torch.Tensor) -> torch.Tensor:
    diff = A[:, None, :] - B[None, :, :]
    return (diff * diff).sum(-1)


def median_bandwidth(X, Y) -> float:
    """Median pairwise Euclidean distance of the pooled sample, zero distances excluded."""
    pooled = np.concatenate([np.asarray(as_samples(X).detach().cpu()), np.asarray(as_samples(Y).detach().cpu())])
    if len(pooled) < 2:
        raise ValueError("median heuristic needs at least two points")
    dist = pdist(pooled.astype(np.float64))
    dist = dist[dist > 0]
    if dist.size == 0:
        raise DegenerateInputError("all pooled points are identical")
    return float(np.median(dist))


def bank_for(X, Y, count: int = 5, spread: float = 2.0) -> KernelBank:
    """Median-heuristic bank for the pooled batch; sigma0 = 1 when the batch is degenerate."""
    try:
        sigma0 = median_bandwidth(X, Y)
    except DegenerateInputError:
        sigma0 = 1.0
    return KernelBank.from_median(sigma0, count, spread)


def mmd2(bank: KernelBank, X, Y, estimator: Estimator = Estimator.UNBIASED) -> torch.Tensor:
    X, Y = as_samples(X), as_samples(Y)
    check_samples(X, Y, estimator)
    m, n = len(X), len(Y)
    k_xx = bank.gram(sq_distances(X, X))
    k_yy = bank.gram(sq_distances(Y, Y))
    k_xy = bank.gram(sq_distances(X, Y))
    if Estimator(estimator) is Estimator.BIASED:
        return k_xx.sum() / (m * m) + k_yy.sum() / (n * n) - 2.0 * k_xy.sum() / (m * n)
    return (
        (k_xx.sum() - k_xx.diagonal().sum()) / (m * (m - 1))
        + (k_yy.sum() - k_yy.diagonal().sum()) / (n * (n - 1))
        - 2.0 * k_xy.sum() / (m * n)
    )


def mmd2_grad(
    bank: KernelBank, X, Y, estimator: Estimator = Estimator.UNBIASED
) -> tuple[torch.Tensor, torch.Tensor]:
    """Analytic (d mmd2 / dX, d mmd2 / dY); bandwidths are held constant."""
    X, Y = as_samples(X).detach(), as_samples(Y).detach()
    check_samples(X, Y, estimator)
    m, n = len(X), len(Y)
    if Estimator(estimator) is Estimator.BIASED:
        c_xx, c_yy = 2.0 / (m * m), 2.0 / (n * n)
    else:
        # self-pairs contribute (x_i - x_i) = 0, only the normalisation changes
        c_xx, c_yy = 2.0 / (m * (m - 1)), 2.0 / (n * (n - 1))
    c_xy = 2.0 / (m * n)

    g_xx = bank.gram_slope(sq_distances(X, X))
    g_yy = bank.gram_slope(sq_distances(Y, Y))
    g_xy = bank.gram_slope(sq_distances(X, Y))

    d_x = c_xx * (g_xx @ X - g_xx.sum(1, keepdim=True) * X) - c_xy * (g_xy @ Y - g_xy.sum(1, keepdim=True) * X)
    d_y = c_yy * (g_yy @ Y - g_yy.sum(1, keepdim=True) * Y) - c_xy * (
        g_xy.T @ X - g_xy.sum(0)[:, None] * Y
    )
    return d_x, d_y
