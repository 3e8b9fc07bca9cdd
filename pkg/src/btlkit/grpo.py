"""Group-relative advantages and the GRPO surrogate objective.

Everything here works on plain floats supplied by an external trainer:
per-completion rewards and summed sequence log-probabilities. Sums run
left to right over input order so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DomainError, OverflowGuard


@dataclass(frozen=True)
class GrpoConfig:
    beta: float = 0.04
    epsilon_std: float = 1e-8
    kl_cap: float = 30.0

    def __post_init__(self) -> None:
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise DomainError(f"beta must be a finite value >= 0, got {self.beta!r}")
        if not self.epsilon_std > 0:
            raise DomainError(f"epsilon_std must be > 0, got {self.epsilon_std!r}")
        if not self.kl_cap > 0:
            raise DomainError(f"kl_cap must be > 0, got {self.kl_cap!r}")


@dataclass(frozen=True)
class CompletionStats:
    logp_policy: float
    logp_old: float
    logp_ref: float

    def __post_init__(self) -> None:
        for name in ("logp_policy", "logp_old", "logp_ref"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")


def group_advantages(rewards: Sequence[float], cfg: GrpoConfig = GrpoConfig()) -> list[float]:
    """Standardize rewards within a group using the population std.

    A group whose rewards are all equal (including a group of one) gets
    exactly zero advantage everywhere.
    """
    n = len(rewards)
    if n == 0:
        raise DomainError("a reward group needs at least one member")
    if any(not math.isfinite(r) for r in rewards):
        raise DomainError("rewards must be finite")
    if all(r == rewards[0] for r in rewards):
        return [0.0] * n
    mean = sum(rewards) / n
    var = sum((r - mean) ** 2 for r in rewards) / n
    denom = max(math.sqrt(var), cfg.epsilon_std)
    return [(r - mean) / denom for r in rewards]


def kl_estimate(stats: CompletionStats, cap: float = 30.0) -> float:
    """Non-negative single-sample KL estimate ``exp(d) - d - 1`` with ``d = logp_ref - logp_policy``."""
    d = stats.logp_ref - stats.logp_policy
    if d > cap:
        raise OverflowGuard(f"log-ratio {d} exceeds cap {cap}")
    if d == 0:
        return 0.0
    if abs(d) >= 0.1:
        return math.expm1(d) - d
    # Series d^2/2! + d^3/3! + ... avoids the cancellation in expm1(d) - d.
    term = d * d / 2
    total = 0.0
    k = 2
    while term != 0.0 and k < 40:
        total += term
        k += 1
        term *= d / k
    # d*d underflows only for |d| < ~1e-162; the true value is still positive.
    return total if total > 0.0 else math.ulp(0.0)


def grpo_objective(
    members: Iterable[tuple[CompletionStats, float]],
    cfg: GrpoConfig = GrpoConfig(),
) -> float:
    """Mean over completions of ``ratio * advantage - beta * KL`` (no ratio clipping)."""
    total = 0.0
    n = 0
    for stats, advantage in members:
        ratio = math.exp(stats.logp_policy - stats.logp_old)
        total += ratio * advantage - cfg.beta * kl_estimate(stats, cfg.kl_cap)
        n += 1
    if n == 0:
        raise DomainError("objective needs at least one completion")
    return total / n
