"""Per-level fidelity / adversarial losses and the weighted multilevel total.

Both phases are minimized: the discriminator minimizes
``-mean[log D(real) + log(1 - D(fake))]`` and the generator minimizes its
adversarial term (saturating ``mean[log(1 - D(fake))]`` or non-saturating
``-mean[log D(fake)]``).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import torch

ADVERSARIAL_MODES = ("saturating", "non_saturating")


@dataclass
class LossWeights:
    lambda_: list[float]
    alpha: list[float]

    def __post_init__(self):
        if len(self.lambda_) != len(self.alpha):
            raise ValueError("lambda and alpha must have equal length")
        if any(v < 0 for v in [*self.lambda_, *self.alpha]):
            raise ValueError("loss weights must be non-negative")

    @property
    def levels(self) -> int:
        return len(self.lambda_)


@dataclass
class LossReport:
    fidelity: list[float] = field(default_factory=list)
    adv_g: list[float] = field(default_factory=list)
    adv_d: list[float] = field(default_factory=list)
    total_g: float = 0.0
    total_d: float = 0.0


def _check_probs(p: torch.Tensor) -> None:
    if torch.any(p <= 0) or torch.any(p >= 1):
        raise ValueError("probabilities must lie strictly inside (0, 1)")


def fidelity_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return torch.mean((pred - target) ** 2)


def adversarial_loss_d(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    _check_probs(d_real)
    _check_probs(d_fake)
    return -(torch.log(d_real).mean() + torch.log1p(-d_fake).mean())


def adversarial_loss_g(d_fake: torch.Tensor, mode: str = "non_saturating") -> torch.Tensor:
    _check_probs(d_fake)
    if mode == "saturating":
        return torch.log1p(-d_fake).mean()
    if mode == "non_saturating":
        return -torch.log(d_fake).mean()
    raise ValueError(f"unknown adversarial mode {mode!r}")


def total_loss(fidelity: Sequence, adv: Sequence, w: LossWeights, phase: str = "g"):
    """Weighted sum over levels.

    phase "g": sum_l lambda_l * (fidelity_l + alpha_l * adv_l)
    phase "d": sum_l lambda_l * alpha_l * adv_l   (``fidelity`` is ignored)
    Works on floats or tensors.
    """
    if len(adv) != w.levels or (phase == "g" and len(fidelity) != w.levels):
        raise ValueError(f"expected {w.levels} level entries")
    total = 0.0
    for l in range(w.levels):
        if phase == "g":
            total = total + w.lambda_[l] * (fidelity[l] + w.alpha[l] * adv[l])
        elif phase == "d":
            total = total + w.lambda_[l] * w.alpha[l] * adv[l]
        else:
            raise ValueError(f"unknown phase {phase!r}")
    return total
