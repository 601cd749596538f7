"""Regenerate oracle_vectors.json, the shared wire-conformance test set.

The vectors are a fixed batch of 32x32 RGB images plus the invariants every
oracle implementation must satisfy on them: simplex-valid probabilities,
response order matching request order, and repeat-call determinism.  Both
the in-process oracles and the HTTP model bridge are tested against the
same file.
"""

import base64
import json
from pathlib import Path

import numpy as np

SHAPE = (32, 32, 3)
SEED = 20240811


def build_images() -> np.ndarray:
    rng = np.random.default_rng(SEED)
    h, w, c = SHAPE
    images = [
        np.zeros(SHAPE),
        np.full(SHAPE, 255.0),
        np.tile(np.linspace(0, 255, w)[None, :, None], (h, 1, c)),
    ]
    images.extend(rng.integers(0, 256, (5,) + SHAPE).astype(float))
    return np.stack(images)


def main() -> None:
    images = build_images().astype(np.uint8)
    payload = {
        "name": "oracle-wire-conformance-v1",
        "shape": list(SHAPE),
        "count": int(images.shape[0]),
        "images_b64": base64.b64encode(images.tobytes(order="C")).decode("ascii"),
        "checks": {"prob_sum_tol": 1e-5, "repeat_tol": 1e-6},
    }
    out = Path(__file__).parent / "oracle_vectors.json"
    out.write_text(json.dumps(payload, indent=1) + "\n")
    print(f"wrote {out} ({images.shape[0]} images)")


if __name__ == "__main__":
    main()
