"""Attack a classifier served over HTTP (for example the model bridge).

Start the bridge first (see bridge/README.md), then:

    python3 demos/06_external_oracle.py http://127.0.0.1:8400

Any server implementing the wire protocol works:
    GET  /meta      -> {"class_count": K, "shape": [H, W, 3], "name": ...}
    POST /classify  -> {"probs": [[...K floats...] x N]}
"""

import sys

import numpy as np

from pixelprobe import AttackConfig, DeConfig, ExternalOracle, attack_image

url = sys.argv[1] if len(sys.argv) > 1 else "http://127.0.0.1:8400"
try:
    oracle = ExternalOracle(url)
except Exception as exc:
    print(f"no oracle reachable at {url} ({exc})")
    print("start one with:  cd bridge && npm run serve")
    sys.exit(1)

desc = oracle.descriptor()
print(f"connected to {desc.name!r}: {desc.class_count} classes, shape {desc.shape}")

rng = np.random.default_rng(11)
image = rng.integers(0, 256, desc.shape).astype(float)
clean = oracle.classify_batch(image[None])[0]
print(f"clean prediction: class {np.argmax(clean)} (confidence {clean.max():.3f})")

config = AttackConfig(
    de=DeConfig(bounds=np.array([[0.0, 1.0]]), population_size=400,
                max_generations=40, seed=2),
)
outcome = attack_image(oracle, image, None, config)
print(f"one-pixel untargeted attack: success={outcome.success} "
      f"{outcome.original_label} -> {outcome.final_label} "
      f"in {outcome.generations_used} generations")
if outcome.pixel_diffs:
    x, y, r, g, b = outcome.pixel_diffs[0]
    print(f"modified pixel ({x}, {y}) -> ({r:.0f}, {g:.0f}, {b:.0f})")
