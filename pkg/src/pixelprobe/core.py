"""Shared domain types and pixel-manipulation primitives.

Images are plain float64 arrays of shape (H, W, 3) with values in [0, 255],
indexed ``image[y, x, channel]``.  Pixel coordinates are written (x, y) with
x along the width axis.  Region masks are boolean (H, W) arrays where True
marks the foreground.  A candidate perturbation is a flat float vector of
length 5*l encoding l tuples (x, y, r, g, b).

Pixel values stay real-valued inside the toolkit; quantization to 8-bit
integers happens only at PNG import/export.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage


class ContractViolationError(ValueError):
    """An argument broke one of the documented preconditions."""


def validate_image(image) -> np.ndarray:
    """Check shape (H, W, 3) and value range [0, 255]; return as float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractViolationError(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 255.0):
        raise ContractViolationError("image values must lie in [0, 255]")
    return arr


def validate_mask(mask, image=None) -> np.ndarray:
    """Check a boolean (H, W) region mask, optionally against an image's shape."""
    arr = np.asarray(mask)
    if arr.dtype != np.bool_:
        raise ContractViolationError("mask must be boolean")
    if arr.ndim != 2:
        raise ContractViolationError(f"mask must have shape (H, W), got {arr.shape}")
    if image is not None and arr.shape != np.asarray(image).shape[:2]:
        raise ContractViolationError(
            f"mask shape {arr.shape} does not match image {np.asarray(image).shape[:2]}"
        )
    return arr


def validate_candidate(candidate) -> np.ndarray:
    """Check a flat (x, y, r, g, b)-tuple vector; length must be a positive multiple of 5."""
    arr = np.asarray(candidate, dtype=np.float64).ravel()
    if arr.size == 0 or arr.size % 5 != 0:
        raise ContractViolationError(
            f"candidate length must be a positive multiple of 5, got {arr.size}"
        )
    return arr


def round_half_up(values) -> np.ndarray:
    """Round to nearest integer with halves going up (2.5 -> 3)."""
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5).astype(np.int64)


def candidate_pixel_coords(candidate, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (x, y) write targets of a candidate: round half up, clamp into the image."""
    c = validate_candidate(candidate).reshape(-1, 5)
    xs = np.clip(round_half_up(c[:, 0]), 0, width - 1)
    ys = np.clip(round_half_up(c[:, 1]), 0, height - 1)
    return xs, ys


def apply_perturbation(image, candidate) -> np.ndarray:
    """Write each candidate tuple's clamped RGB at its rounded pixel coordinate.

    Returns a copy of ``image``; untouched pixels are bit-identical.  Tuples
    are applied in order, so later tuples win on coordinate collisions.
    """
    img = validate_image(image)
    c = validate_candidate(candidate).reshape(-1, 5)
    height, width = img.shape[:2]
    out = img.copy()
    xs, ys = candidate_pixel_coords(c, width, height)
    colors = np.clip(c[:, 2:5], 0.0, 255.0)
    for x, y, rgb in zip(xs, ys, colors):
        out[y, x] = rgb
    return out


def apply_perturbation_batch(image, candidates) -> np.ndarray:
    """Vectorized :func:`apply_perturbation` over an (N, 5*l) candidate matrix.

    Returns an (N, H, W, 3) array.  Per candidate the semantics match the
    single-candidate path exactly (sequential tuple writes, last write wins).
    """
    img = validate_image(image)
    cands = np.asarray(candidates, dtype=np.float64)
    if cands.ndim != 2 or cands.shape[1] % 5 != 0 or cands.shape[1] == 0:
        raise ContractViolationError(f"candidates must be (N, 5*l), got {cands.shape}")
    height, width = img.shape[:2]
    n = cands.shape[0]
    out = np.broadcast_to(img, (n,) + img.shape).copy()
    rows = np.arange(n)
    for t in range(cands.shape[1] // 5):
        tup = cands[:, 5 * t : 5 * t + 5]
        xs = np.clip(round_half_up(tup[:, 0]), 0, width - 1)
        ys = np.clip(round_half_up(tup[:, 1]), 0, height - 1)
        out[rows, ys, xs] = np.clip(tup[:, 2:5], 0.0, 255.0)
    return out


def composite(original, perturbed, mask, region: str) -> np.ndarray:
    """Merge two images: attacked-region pixels from ``perturbed``, the rest from ``original``.

    ``region`` selects which side of the mask is attacked: "foreground" takes
    mask-True pixels from ``perturbed``, "background" the mask-False pixels.
    """
    orig = validate_image(original)
    pert = validate_image(perturbed)
    if orig.shape != pert.shape:
        raise ContractViolationError(
            f"image shapes differ: {orig.shape} vs {pert.shape}"
        )
    m = validate_mask(mask, orig)
    if region == "foreground":
        attacked = m
    elif region == "background":
        attacked = ~m
    else:
        raise ContractViolationError(f"region must be 'foreground' or 'background', got {region!r}")
    return np.where(attacked[:, :, None], pert, orig)


def changed_pixels(original, modified) -> list[tuple[int, int]]:
    """(x, y) coordinates where two equally shaped images differ in any channel."""
    diff = np.any(np.asarray(original) != np.asarray(modified), axis=2)
    ys, xs = np.nonzero(diff)
    return [(int(x), int(y)) for x, y in zip(xs, ys)]


@dataclass
class AttackOutcome:
    """Result of one attack plus the campaign context needed by the metrics fold."""

    success: bool
    mode: str  # "untargeted" | "targeted"
    original_label: int
    final_label: int
    target_label: int | None
    final_confidence: float
    adversarial_image: np.ndarray | None
    generations_used: int
    fitness_history: list[float]
    modified_pixels: list[tuple[int, int]]
    stopped_early: bool = False
    original_probs: np.ndarray | None = None
    final_probs: np.ndarray | None = None
    # final (r, g, b) written at each modified pixel; with the original image
    # this reconstructs adversarial_image, keeping JSON records self-contained
    pixel_diffs: list[tuple[int, int, float, float, float]] = field(default_factory=list)
    # campaign context
    image_index: int = 0
    image_id: str = ""
    network: str = ""
    region: str = "whole"
    pixels: int = 1
    seed: int | None = None


def save_image(image, path) -> None:
    """Export as lossless 8-bit RGB PNG (values rounded to nearest integer)."""
    img = validate_image(image)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    """Import an 8-bit RGB PNG as a float64 image."""
    with PILImage.open(path) as im:
        if im.mode != "RGB":
            raise ContractViolationError(f"{path}: expected an RGB PNG, got mode {im.mode}")
        return np.asarray(im, dtype=np.float64)
