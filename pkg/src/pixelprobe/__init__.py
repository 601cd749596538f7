"""Few-pixel black-box adversarial attacks constrained to segmented image regions.

The toolkit pairs a differential-evolution optimizer with a classifier
oracle to find single- and few-pixel perturbations, optionally confined to
the foreground or background of an image as produced by the built-in
GrabCut segmenter (or ingested from external mask files), and aggregates
campaign results into success-rate tables, class-pair heatmaps, target
histograms and fitness trajectories.
"""

from .core import (
    AttackOutcome,
    ContractViolationError,
    apply_perturbation,
    apply_perturbation_batch,
    changed_pixels,
    composite,
    load_image,
    save_image,
)
from .de import DeConfig, EvolveResult, Population, crossover, evolve, lhs_init, mutate
from .attack import (
    AttackConfig,
    attack_image,
    candidate_bounds,
    confinement_violations,
    derive_attack_seed,
    run_campaign,
    targeted_fitness,
    untargeted_fitness,
)
from .segmentation import (
    GmmModel,
    GrabcutParams,
    GrabcutResult,
    data_term,
    fit_gmms,
    grabcut,
    load_mask,
    min_cut,
    save_mask,
    smoothness_term,
    trimap_from_rectangle,
)
from .oracle import (
    BuiltinLinearClassifier,
    BuiltinMlpClassifier,
    ExternalOracle,
    OracleDescriptor,
    OracleProtocolError,
    classify_batch,
    load_builtin,
    save_builtin,
    train_builtin,
)
from .metrics import (
    CampaignReport,
    build_report,
    class_pair_matrix,
    confidence_decrease_topk,
    fitness_summary,
    rank_retention,
    read_records,
    success_rates,
    target_count_histogram,
    write_all_outputs,
)

__version__ = "0.1.0"
