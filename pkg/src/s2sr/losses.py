"""Training objectives: MAE content loss, adversarial terms, combination.

Log arguments are clamped at ``eps`` so every loss stays finite for
probabilities anywhere in [0, 1]. Losses are averaged over the batch, which
keeps the adversarial weight batch-size invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DomainError, ShapeMismatch


@dataclass(frozen=True)
class LossWeights:
    """Relative weight of the adversarial term and the log-clamp floor.

    ``non_saturating`` switches the generator term from mean log(1 - D) to
    -mean log D: same fixed points, stronger gradients while the
    discriminator is winning.
    """

    lambda_adv: float = 1e-3
    eps: float = 1e-12
    non_saturating: bool = False

    def __post_init__(self):
        if self.lambda_adv < 0:
            raise ValueError(f"lambda_adv must be >= 0, got {self.lambda_adv}")
        if not 0 < self.eps < 1e-6:
            raise ValueError(f"eps must lie in (0, 1e-6), got {self.eps}")


def _check_probs(p: torch.Tensor, name: str):
    if p.numel() == 0:
        raise DomainError(f"{name}: empty probability tensor")
    if bool((p < 0).any()) or bool((p > 1).any()):
        raise DomainError(f"{name}: values outside [0, 1]")


def content_loss(sr: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Pixel-wise mean absolute error."""
    if sr.shape != gt.shape:
        raise ShapeMismatch(f"content_loss: shapes differ, {tuple(sr.shape)} vs {tuple(gt.shape)}")
    return (sr - gt).abs().mean()


def adversarial_loss_g(
    d_fake: torch.Tensor, eps: float = 1e-12, non_saturating: bool = False
) -> torch.Tensor:
    """Generator adversarial term over the discriminator's fake-batch outputs.

    Saturating form: mean log(1 - D(G(.))), which the generator minimizes;
    non-saturating form: -mean log D(G(.)).
    """
    _check_probs(d_fake, "adversarial_loss_g")
    if non_saturating:
        return -torch.log(d_fake.clamp(min=eps, max=1.0)).mean()
    return torch.log((1.0 - d_fake).clamp(min=eps, max=1.0)).mean()


def discriminator_loss(
    d_real: torch.Tensor, d_fake: torch.Tensor, eps: float = 1e-12
) -> torch.Tensor:
    """Binary cross-entropy of the real/fake game, to be minimized by D."""
    _check_probs(d_real, "discriminator_loss")
    _check_probs(d_fake, "discriminator_loss")
    real_term = torch.log(d_real.clamp(min=eps, max=1.0)).mean()
    fake_term = torch.log((1.0 - d_fake).clamp(min=eps, max=1.0)).mean()
    return -(real_term + fake_term)


def generator_total_loss(
    sr: torch.Tensor,
    gt: torch.Tensor,
    d_fake: torch.Tensor | None,
    weights: LossWeights,
) -> torch.Tensor:
    """Content loss plus lambda_adv times the adversarial term.

    With ``lambda_adv == 0`` (or ``d_fake`` None) this reduces exactly to the
    MAE objective of the content-only ablation.
    """
    total = content_loss(sr, gt)
    if weights.lambda_adv > 0 and d_fake is not None:
        total = total + weights.lambda_adv * adversarial_loss_g(
            d_fake, eps=weights.eps, non_saturating=weights.non_saturating
        )
    return total
