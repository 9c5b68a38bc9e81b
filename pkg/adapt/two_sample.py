"""Kernel two-sample test: mmd2 against its permutation null."""

from typing import NamedTuple

import numpy as np
import torch

from adapt.mmd import KernelBank, as_samples, check_samples, sq_distances
from models.models import Estimator
from utils.rng import stream

NULL_QUANTILES = (0.5, 0.95, 0.99)


class TwoSampleResult(NamedTuple):
    statistic: float
    p_value: float
    null_quantiles: dict[float, float]
    null: np.ndarray


def _statistics(gram: torch.Tensor, members: torch.Tensor, estimator: Estimator) -> torch.Tensor:
    """mmd2 for each row of ``members`` (1 marks the first sample) over one pooled gram matrix."""
    others = 1.0 - members
    m = members.sum(1)
    n = others.sum(1)
    if Estimator(estimator) is Estimator.UNBIASED:
        gram = gram - torch.diag(gram.diagonal())
        m_pairs, n_pairs = m * (m - 1), n * (n - 1)
    else:
        m_pairs, n_pairs = m * m, n * n
    xx = ((members @ gram) * members).sum(1)
    yy = ((others @ gram) * others).sum(1)
    xy = ((members @ gram) * others).sum(1)
    return xx / m_pairs + yy / n_pairs - 2.0 * xy / (m * n)


def permutation_test(
    bank: KernelBank,
    X,
    Y,
    n_permutations: int = 500,
    seed: int = 0,
    estimator: Estimator = Estimator.UNBIASED,
) -> TwoSampleResult:
    """p-value = (1 + #{null >= observed}) / (1 + n_permutations)."""
    X, Y = as_samples(X).detach(), as_samples(Y).detach()
    check_samples(X, Y, estimator)
    if n_permutations < 1:
        raise ValueError("need at least one permutation")
    m, total = len(X), len(X) + len(Y)

    pooled = torch.cat([X, Y])
    gram = bank.gram(sq_distances(pooled, pooled))

    rng = stream(seed, "permutation")
    members = np.zeros((n_permutations + 1, total))
    members[0, :m] = 1.0
    for row in range(1, n_permutations + 1):
        members[row, rng.permutation(total)[:m]] = 1.0

    stats = _statistics(gram, torch.as_tensor(members, dtype=gram.dtype), estimator).numpy()
    observed, null = float(stats[0]), stats[1:]
    p_value = (1.0 + np.count_nonzero(null >= observed)) / (1.0 + n_permutations)
    return TwoSampleResult(
        statistic=observed,
        p_value=float(p_value),
        null_quantiles={q: float(np.quantile(null, q)) for q in NULL_QUANTILES},
        null=null,
    )
