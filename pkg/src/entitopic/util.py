"""Small shared helpers: deterministic init, entropy, distribution checks."""

from __future__ import annotations

import math

import torch
from torch import nn

from .errors import NotADistribution


def reseed_module(module: nn.Module, seed: int) -> None:
    """Re-initialize a module's parameters from its own seeded generator.

    Initialization depends only on ``seed`` and the module's parameter names,
    never on global RNG state or on what else was built before it.  This is
    what makes an ablated build (e.g. no bridge) produce bit-identical
    remaining components.
    """
    gen = torch.Generator().manual_seed(seed)
    owners = dict(module.named_modules())
    for name, param in sorted(module.named_parameters()):
        owner = owners[name.rsplit(".", 1)[0]] if "." in name else module
        leaf = name.rsplit(".", 1)[-1]
        with torch.no_grad():
            if isinstance(owner, nn.Embedding):
                param.normal_(0.0, 0.5, generator=gen)
            elif isinstance(owner, nn.LayerNorm):
                param.fill_(1.0 if leaf == "weight" else 0.0)
            elif isinstance(owner, nn.LSTM):
                bound = 1.0 / math.sqrt(owner.hidden_size)
                param.uniform_(-bound, bound, generator=gen)
            elif isinstance(owner, nn.Linear):
                if leaf == "weight":
                    bound = 1.0 / math.sqrt(param.shape[1])
                    param.uniform_(-bound, bound, generator=gen)
                else:
                    param.zero_()
            # plain nn.Parameter attributes keep their constant init


def entropy(dist: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Shannon entropy in nats, with 0 * log 0 = 0."""
    p = dist.clamp_min(0.0)
    logp = torch.where(p > 0, torch.log(p.clamp_min(1e-300)), torch.zeros_like(p))
    return -(p * logp).sum(dim=dim)


def check_distribution(dist: torch.Tensor, tol: float = 1e-6) -> None:
    """Raise NotADistribution unless rows are non-negative and sum to 1."""
    if torch.any(dist < -tol):
        raise NotADistribution("negative probability entries")
    sums = dist.sum(dim=-1)
    if torch.any((sums - 1.0).abs() > tol):
        raise NotADistribution(f"rows sum to {sums.tolist()} rather than 1")


def require_finite(t: torch.Tensor, error: type[Exception], what: str) -> None:
    if not torch.isfinite(t).all():
        raise error(f"{what} contains non-finite values")
