"""A one-pixel attack end to end against a trained classifier.

Run:  python3 demos/02_one_pixel_attack.py
"""

import numpy as np

from pixelprobe import AttackConfig, DeConfig, attack_image, train_builtin


def quadrant_labels(images):
    """Synthetic ground truth: the brightest quadrant names the class."""
    h, w = images.shape[1:3]
    sums = np.stack([
        images[:, : h // 2, : w // 2].sum(axis=(1, 2, 3)),
        images[:, : h // 2, w // 2 :].sum(axis=(1, 2, 3)),
        images[:, h // 2 :, : w // 2].sum(axis=(1, 2, 3)),
        images[:, h // 2 :, w // 2 :].sum(axis=(1, 2, 3)),
    ], axis=1)
    return np.argmax(sums, axis=1)


rng = np.random.default_rng(1)
train = rng.uniform(0, 255, (400, 8, 8, 3))
oracle = train_builtin(train, quadrant_labels(train), "linear")
accuracy = np.mean(np.argmax(oracle.classify_batch(train), axis=1) == quadrant_labels(train))
print(f"trained a 4-class linear-softmax oracle on 8x8 images "
      f"(train accuracy {accuracy:.0%})\n")

image = rng.uniform(0, 255, (8, 8, 3))
clean = oracle.classify_batch(image[None])[0]
print(f"clean prediction: class {np.argmax(clean)} "
      f"with confidence {clean.max():.3f}")

# The attack treats the classifier as a black box: candidate (x, y, r, g, b)
# tuples are scored by the confidence of the clean prediction on the
# perturbed image, and DE minimizes that confidence until the label flips.
config = AttackConfig(
    mode="untargeted",
    pixels=1,
    region="whole",
    de=DeConfig(bounds=np.array([[0.0, 1.0]]), population_size=400,
                max_generations=100, seed=7),
)
outcome = attack_image(oracle, image, None, config)

print(f"attack success: {outcome.success}")
print(f"label {outcome.original_label} -> {outcome.final_label} "
      f"(confidence {outcome.final_confidence:.3f})")
print(f"generations used: {outcome.generations_used} "
      f"(early stop: {outcome.stopped_early})")
print(f"modified pixels: {outcome.modified_pixels}")
for x, y, r, g, b in outcome.pixel_diffs:
    before = image[y, x]
    print(f"  ({x}, {y}): ({before[0]:.0f}, {before[1]:.0f}, {before[2]:.0f})"
          f" -> ({r:.0f}, {g:.0f}, {b:.0f})")
print(f"fitness trajectory: {[round(v, 3) for v in outcome.fitness_history]}")
