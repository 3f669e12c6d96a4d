"""Training objectives: L1 reconstruction, least-squares adversarial, shadow rectification.

Images travel through the network in [-1, 1]. Only the shadow discriminator
sees rectified images, min(x, y) with x = 15/255 after mapping to [0, 1],
which blinds it to everything but the dark regions.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from config import settings
from core.errors import PreconditionError, ShapeError
from core.models import LossWeights
from core.tensor import Tensor, add, affine, l1_loss, min_const, mse_loss
from network.relight import ModelBundle, RelightOutput, discriminate

RECONSTRUCTION_TERMS = ("l1_scene", "l1_shadow", "l1_final")


def to_unit_range(image: Tensor) -> Tensor:
    return affine(image, scale=0.5, shift=0.5)


def shadow_rectify(image: Tensor, threshold: float = settings.SHADOW_THRESHOLD) -> Tensor:
    """Elementwise min(threshold, image) for an image already in [0, 1]."""
    if not 0.0 <= threshold <= 1.0:
        raise PreconditionError(f"shadow threshold must lie in [0, 1], got {threshold}")
    return min_const(image, threshold)


def _constant_like(scores: Tensor, value: float) -> Tensor:
    return Tensor(np.full(scores.shape, value, dtype=scores.dtype))


def adversarial_losses(real_scores: Tensor, fake_scores: Tensor) -> tuple[Tensor, Tensor]:
    """Least-squares GAN objective, returns (d_loss, g_loss).

    d_loss = 1/2 mean((real - 1)^2) + 1/2 mean(fake^2); g_loss = mean((fake - 1)^2).
    """
    if real_scores.shape != fake_scores.shape:
        raise ShapeError(f"score maps differ: {real_scores.shape} vs {fake_scores.shape}")
    d_loss = weighted_sum([
        (0.5, mse_loss(real_scores, _constant_like(real_scores, 1.0))),
        (0.5, mse_loss(fake_scores, _constant_like(fake_scores, 0.0))),
    ])
    g_loss = mse_loss(fake_scores, _constant_like(fake_scores, 1.0))
    return d_loss, g_loss


def generator_adversarial_loss(fake_scores: Tensor) -> Tensor:
    return mse_loss(fake_scores, _constant_like(fake_scores, 1.0))


def weighted_sum(terms: Iterable[tuple[float, Tensor]]) -> Tensor:
    total = None
    for weight, term in terms:
        scaled = term if weight == 1.0 else affine(term, scale=weight)
        total = scaled if total is None else add(total, scaled)
    if total is None:
        raise PreconditionError("weighted_sum needs at least one term")
    return total


def reconstruction_losses(outputs: RelightOutput, target: Tensor,
                          shadow_free: Tensor) -> dict[str, Tensor]:
    return {
        "l1_scene": l1_loss(outputs.shadow_free, shadow_free),
        "l1_shadow": l1_loss(outputs.relit, target),
        "l1_final": l1_loss(outputs.y_hat, target),
    }


def discriminator_inputs(relit: Tensor, threshold: float) -> Tensor:
    return shadow_rectify(to_unit_range(relit), threshold)


def discriminator_losses(bundle: ModelBundle, outputs: RelightOutput, target: Tensor,
                         shadow_free: Tensor, weights: LossWeights) -> dict[str, Tensor]:
    """Both critics' LSGAN losses on (detached) generator outputs."""
    real_scene = discriminate(shadow_free, bundle, "scene")
    fake_scene = discriminate(outputs.shadow_free.detach(), bundle, "scene")
    real_shadow = discriminate(discriminator_inputs(target, weights.shadow_threshold),
                               bundle, "shadow")
    fake_shadow = discriminate(discriminator_inputs(outputs.relit.detach(),
                                                    weights.shadow_threshold), bundle, "shadow")
    d_scene, _ = adversarial_losses(real_scene, fake_scene)
    d_shadow, _ = adversarial_losses(real_shadow, fake_shadow)
    return {"d_scene": d_scene, "d_shadow": d_shadow}


def generator_losses(bundle: ModelBundle, outputs: RelightOutput, target: Tensor,
                     shadow_free: Tensor, weights: LossWeights,
                     adversarial: bool = True) -> dict[str, Tensor]:
    """Every generator loss term plus 'total', the weighted objective.

    'l1_total' is the unweighted sum of the three reconstruction terms.
    """
    terms = reconstruction_losses(outputs, target, shadow_free)
    terms["l1_total"] = weighted_sum((1.0, terms[name]) for name in RECONSTRUCTION_TERMS)
    weighted = [
        (weights.w_recon_scene, terms["l1_scene"]),
        (weights.w_recon_shadow, terms["l1_shadow"]),
        (weights.w_recon_final, terms["l1_final"]),
    ]
    if adversarial:
        terms["g_adv_scene"] = generator_adversarial_loss(
            discriminate(outputs.shadow_free, bundle, "scene"))
        terms["g_adv_shadow"] = generator_adversarial_loss(
            discriminate(discriminator_inputs(outputs.relit, weights.shadow_threshold),
                         bundle, "shadow"))
        weighted += [(weights.w_adv_scene, terms["g_adv_scene"]),
                     (weights.w_adv_shadow, terms["g_adv_shadow"])]
    terms["total"] = weighted_sum(weighted)
    return terms
