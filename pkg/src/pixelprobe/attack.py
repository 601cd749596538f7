"""Region-constrained few-pixel attacks driven by differential evolution.

A candidate encodes l pixel edits as (x, y, r, g, b) tuples.  The optimizer
always searches the full coordinate box; the region constraint is enforced by
scoring a composite image that takes attacked-region pixels from the
perturbed image and everything else from the original.  Edits landing
outside the attacked region therefore score exactly like the untouched
image, which confines every returned perturbation to the region without
touching the optimizer itself.

Untargeted attacks minimize the oracle's confidence in the pre-attack
predicted class; targeted attacks minimize the negated confidence in the
target class.  Both stop early once the predicted label meets the attack
goal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import de
from .core import (
    AttackOutcome,
    ContractViolationError,
    apply_perturbation_batch,
    changed_pixels,
    validate_image,
    validate_mask,
)

REGIONS = ("whole", "foreground", "background")
MODES = ("untargeted", "targeted")


@dataclass
class AttackConfig:
    mode: str = "untargeted"
    target_class: int | None = None
    pixels: int = 1
    region: str = "whole"
    de: de.DeConfig = field(default_factory=lambda: de.DeConfig(bounds=np.array([[0.0, 1.0]])))

    def __post_init__(self):
        if self.mode not in MODES:
            raise ContractViolationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.region not in REGIONS:
            raise ContractViolationError(f"region must be one of {REGIONS}, got {self.region!r}")
        if self.pixels < 1:
            raise ContractViolationError("pixels must be >= 1")
        if (self.target_class is None) == (self.mode == "targeted"):
            raise ContractViolationError("target_class is required iff mode is 'targeted'")


def candidate_bounds(width: int, height: int, pixels: int) -> np.ndarray:
    """DE box for l tuples: x in [0, w), y in [0, h), colors in [0, 255]."""
    per_pixel = np.array([
        [0.0, float(width)],
        [0.0, float(height)],
        [0.0, 255.0],
        [0.0, 255.0],
        [0.0, 255.0],
    ])
    return np.tile(per_pixel, (pixels, 1))


def _attacked_mask(mask, region: str, image) -> np.ndarray | None:
    """Boolean attacked-region mask, or None when the whole image is fair game."""
    if region == "whole":
        return None
    if mask is None:
        raise ContractViolationError(f"region={region!r} requires a mask")
    m = validate_mask(mask, image)
    attacked = m if region == "foreground" else ~m
    if not attacked.any():
        raise ContractViolationError(f"attacked region {region!r} is empty")
    return attacked


def compose_batch(original, candidates, attacked) -> np.ndarray:
    """Perturb then composite a batch of candidates against one image."""
    perturbed = apply_perturbation_batch(original, candidates)
    if attacked is None:
        return perturbed
    return np.where(attacked[None, :, :, None], perturbed, original[None])


def untargeted_fitness(oracle, original, mask, region: str, true_class: int):
    """Batch fitness: confidence of ``true_class`` on the composited images."""
    original = validate_image(original)
    if not 0 <= true_class < oracle.class_count:
        raise ContractViolationError(f"true_class {true_class} out of range")
    attacked = _attacked_mask(mask, region, original)

    def fitness(candidates):
        images = compose_batch(original, np.atleast_2d(candidates), attacked)
        return oracle.classify_batch(images)[:, true_class]

    return fitness


def targeted_fitness(oracle, original, mask, region: str, target_class: int):
    """Batch fitness: negated confidence of ``target_class`` (shared minimizer maximizes it)."""
    original = validate_image(original)
    if not 0 <= target_class < oracle.class_count:
        raise ContractViolationError(f"target_class {target_class} out of range")
    attacked = _attacked_mask(mask, region, original)

    def fitness(candidates):
        images = compose_batch(original, np.atleast_2d(candidates), attacked)
        return -oracle.classify_batch(images)[:, target_class]

    return fitness


def attack_image(oracle, original, mask, config: AttackConfig) -> AttackOutcome:
    """Run one attack and report the outcome.

    The true class is the oracle's prediction on the clean image.  After the
    DE run the adversarial image is rebuilt from the best candidate and the
    oracle is queried once for the final label and confidence.
    """
    original = validate_image(original)
    height, width = original.shape[:2]
    attacked = _attacked_mask(mask, config.region, original)

    original_probs = oracle.classify_batch(original[None])[0]
    original_label = int(np.argmax(original_probs))
    if config.mode == "targeted" and config.target_class == original_label:
        raise ContractViolationError(
            "target class equals the oracle's current prediction; a successful "
            "targeted attack must change the label"
        )

    if config.mode == "untargeted":
        fitness = untargeted_fitness(oracle, original, mask, config.region, original_label)

        def goal_met(label):
            return label != original_label
    else:
        fitness = targeted_fitness(oracle, original, mask, config.region, config.target_class)

        def goal_met(label):
            return label == config.target_class

    def rebuild(member):
        return compose_batch(original, member[None], attacked)[0]

    def early_stop(best_member, _best_fitness):
        probs = oracle.classify_batch(rebuild(best_member)[None])[0]
        return goal_met(int(np.argmax(probs)))

    de_config = replace(config.de, bounds=candidate_bounds(width, height, config.pixels))
    result = de.evolve(fitness, de_config, early_stop=early_stop)

    adversarial = rebuild(result.best_member)
    final_probs = oracle.classify_batch(adversarial[None])[0]
    final_label = int(np.argmax(final_probs))
    pixels = changed_pixels(original, adversarial)

    return AttackOutcome(
        success=goal_met(final_label),
        mode=config.mode,
        original_label=original_label,
        final_label=final_label,
        target_label=config.target_class,
        final_confidence=float(final_probs[final_label]),
        adversarial_image=adversarial,
        generations_used=result.generations_run,
        fitness_history=list(result.history),
        modified_pixels=pixels,
        stopped_early=result.stopped_early,
        original_probs=original_probs,
        final_probs=final_probs,
        pixel_diffs=[(x, y, *(float(v) for v in adversarial[y, x])) for x, y in pixels],
        region=config.region,
        pixels=config.pixels,
        seed=config.de.seed,
    )


def derive_attack_seed(campaign_seed: int, image_index: int, mode: str,
                       target_class: int | None) -> int:
    """Stable per-attack seed; independent of scheduling order."""
    mode_code = MODES.index(mode)
    target_code = -1 if target_class is None else int(target_class)
    ss = np.random.SeedSequence([int(campaign_seed), int(image_index), mode_code, target_code + 1])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_campaign(oracle, dataset, config: AttackConfig, modes=("untargeted",),
                 campaign_seed: int = 0, labels=None, network: str = "",
                 image_ids=None, progress=None) -> list[AttackOutcome]:
    """Attack every image in ``dataset`` in every requested mode.

    ``dataset`` is a sequence of (image, mask-or-None) pairs.  Targeted mode
    runs one attack per non-original class.  Images the oracle already
    misclassifies (known only when ``labels`` is given) are skipped entirely
    so they never enter success-rate denominators.  Each attack gets a seed
    derived from (campaign_seed, image index, mode, target), so reruns and
    scheduling order cannot change any outcome.
    """
    outcomes = []
    for index, (image, mask) in enumerate(dataset):
        probs = oracle.classify_batch(validate_image(image)[None])[0]
        predicted = int(np.argmax(probs))
        if labels is not None and predicted != int(labels[index]):
            continue
        image_id = image_ids[index] if image_ids is not None else f"image_{index:05d}"
        for mode in modes:
            if mode == "untargeted":
                targets = [None]
            else:
                targets = [t for t in range(oracle.class_count) if t != predicted]
            for target in targets:
                seed = derive_attack_seed(campaign_seed, index, mode, target)
                attack_config = replace(
                    config, mode=mode, target_class=target,
                    de=replace(config.de, seed=seed),
                )
                outcome = attack_image(oracle, image, mask, attack_config)
                outcome.image_index = index
                outcome.image_id = image_id
                outcome.network = network
                outcomes.append(outcome)
                if progress is not None:
                    progress(outcome)
    return outcomes


def confinement_violations(original, outcome: AttackOutcome, mask) -> list[str]:
    """Check the L0 bound and region confinement of one outcome; empty list = clean.

    Works from ``pixel_diffs`` so it applies equally to in-memory outcomes
    and records reloaded from disk.
    """
    problems = []
    original = validate_image(original)
    if len(outcome.pixel_diffs) > outcome.pixels:
        problems.append(
            f"{len(outcome.pixel_diffs)} pixels changed, limit {outcome.pixels}"
        )
    attacked = None
    if outcome.region != "whole":
        attacked = _attacked_mask(mask, outcome.region, original)
    for x, y, *_rgb in outcome.pixel_diffs:
        if attacked is not None and not attacked[int(y), int(x)]:
            problems.append(f"pixel ({x}, {y}) outside attacked region {outcome.region!r}")
    return problems
