"""A small targeted + untargeted campaign, folded into every report artifact.

Run:  python3 demos/05_campaign_metrics.py   (about half a minute)
Outputs land in demos/output/report/.
"""

from pathlib import Path

import numpy as np

from pixelprobe import AttackConfig, DeConfig, build_report, run_campaign, train_builtin
from pixelprobe.metrics import write_all_outputs


def quadrant_labels(images):
    h, w = images.shape[1:3]
    sums = np.stack([
        images[:, : h // 2, : w // 2].sum(axis=(1, 2, 3)),
        images[:, : h // 2, w // 2 :].sum(axis=(1, 2, 3)),
        images[:, h // 2 :, : w // 2].sum(axis=(1, 2, 3)),
        images[:, h // 2 :, w // 2 :].sum(axis=(1, 2, 3)),
    ], axis=1)
    return np.argmax(sums, axis=1)


rng = np.random.default_rng(5)
train = rng.uniform(0, 255, (400, 8, 8, 3))
oracle = train_builtin(train, quadrant_labels(train), "linear")

dataset = [(rng.uniform(0, 255, (8, 8, 3)), None) for _ in range(12)]
config = AttackConfig(de=DeConfig(bounds=np.array([[0.0, 1.0]]), population_size=100,
                                  max_generations=30))
outcomes = run_campaign(oracle, dataset, config, modes=("untargeted", "targeted"),
                        campaign_seed=17, network="builtin-linear")
print(f"campaign produced {len(outcomes)} outcomes "
      f"(12 untargeted + 12 images x 3 other classes targeted)")

report = build_report(outcomes, oracle.class_count)
cell = report.cells[("builtin-linear", "whole", 1)]
rates = cell.rates
print(f"\nuntargeted success rate : {rates.untargeted1:.2%}")
if rates.confidence_u is not None:
    print(f"mean confidence (untarg): {rates.confidence_u:.2%}")
print(f"targeted success rate   : {rates.targeted:.2%}")
print(f"untargeted2 (from targ.): {rates.untargeted2:.2%}")
if cell.fitness.mean_generations_to_success is not None:
    print(f"mean generations to hit : {cell.fitness.mean_generations_to_success:.2f}")

print("\nsource->target success counts (targeted):")
print(cell.matrix_targeted)
print("\nimages reaching n target classes:", cell.target_histogram.tolist())

out_dir = Path(__file__).parent / "output" / "report"
write_all_outputs(report, out_dir)
print(f"\nwrote report.json, tables.csv, heatmap.csv, histogram.csv, "
      f"fitness_mean.csv to {out_dir}")
