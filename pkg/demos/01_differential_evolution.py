"""Differential evolution basics: latin hypercube init, dithered F, early stop.

Run:  python3 demos/01_differential_evolution.py
"""

import numpy as np

from pixelprobe import DeConfig, evolve, lhs_init

# --- latin hypercube sampling --------------------------------------------
# Each dimension is split into P equal strata and every stratum receives
# exactly one sample, so even a single generation covers the search box.

bounds = np.array([[0.0, 32.0], [0.0, 32.0], [0.0, 255.0]])
members = lhs_init(bounds, 8, np.random.default_rng(0))
print("8 LHS samples over x in [0,32), y in [0,32), value in [0,255):")
for row in members:
    print(f"  x={row[0]:6.2f}  y={row[1]:6.2f}  value={row[2]:7.2f}")

strata = np.floor(members[:, 0] / 4).astype(int)
print(f"x-strata occupied: {sorted(strata.tolist())}  (one sample per stratum)\n")

# --- minimizing a test function -------------------------------------------
# The optimizer is minimization-only: per generation each member produces a
# mutant x_r1 + F (x_r2 - x_r3), binomial crossover mixes it with the
# member, and the trial replaces the member only when strictly better.
# F is redrawn uniformly from [0.5, 1) every generation (dithering).


def sphere(candidates):
    return np.sum(np.asarray(candidates) ** 2, axis=1)


config = DeConfig(bounds=np.array([[-5.0, 5.0]] * 5), population_size=60,
                  max_generations=80, seed=42)
result = evolve(sphere, config)
print(f"sphere minimum after {result.generations_run} generations: "
      f"{result.best_fitness:.2e} at {np.round(result.best_member, 4)}")
print(f"best fitness by generation (every 10th): "
      f"{[round(v, 4) for v in result.history[::10]]}\n")

# --- early stopping --------------------------------------------------------
# An early-stop predicate sees the best member after each generation; the
# attack code uses this to halt as soon as the predicted label flips.

result = evolve(sphere, config, early_stop=lambda member, fitness: fitness < 0.5)
print(f"with early stop at fitness < 0.5: stopped after "
      f"{result.generations_run} generations (stopped_early={result.stopped_early})")
