"""Aggregation of attack outcomes into campaign-level statistics.

Everything here is a pure fold over per-attack records: success rates and
mean confidences, confidence-decrease and rank-retention statistics,
source/target class-pair matrices, reached-target-count histograms, and
per-generation fitness trajectories.  Records round-trip through JSON lines
so any report can be regenerated from the raw records alone.

Conventions: a mean over an empty set is reported as None (undefined is not
zero); rank ties are broken by ascending class index; fitness histories are
right-padded with their final value before averaging.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .core import AttackOutcome, ContractViolationError


@dataclass
class SuccessRates:
    untargeted1: float | None  # untargeted successes / untargeted attempts
    targeted: float | None  # targeted successes / (image, target) attempts
    untargeted2: float | None  # images with >= 1 targeted success / images attacked
    confidence_u: float | None  # mean final confidence over successful untargeted runs
    confidence_t: float | None
    untargeted_attempts: int = 0
    targeted_attempts: int = 0
    images_attacked: int = 0


def _mean(values) -> float | None:
    values = list(values)
    return float(np.mean(values)) if values else None


def _ratio(hits: int, total: int) -> float | None:
    return hits / total if total else None


def success_rates(outcomes) -> SuccessRates:
    untargeted = [o for o in outcomes if o.mode == "untargeted"]
    targeted = [o for o in outcomes if o.mode == "targeted"]
    images = {o.image_index for o in targeted}
    images_hit = {o.image_index for o in targeted if o.success}
    return SuccessRates(
        untargeted1=_ratio(sum(o.success for o in untargeted), len(untargeted)),
        targeted=_ratio(sum(o.success for o in targeted), len(targeted)),
        untargeted2=_ratio(len(images_hit), len(images)),
        confidence_u=_mean(o.final_confidence for o in untargeted if o.success),
        confidence_t=_mean(o.final_confidence for o in targeted if o.success),
        untargeted_attempts=len(untargeted),
        targeted_attempts=len(targeted),
        images_attacked=len(images),
    )


def _top_classes(probs, k) -> np.ndarray:
    """Indices of the k largest entries, ties broken by ascending class index."""
    probs = np.asarray(probs)
    return np.argsort(-probs, kind="stable")[:k]


@dataclass
class ConfidenceDecrease:
    successful: float | None
    unsuccessful: float | None


def confidence_decrease_topk(pre_probs, post_probs, k: int, success_flags) -> ConfidenceDecrease:
    """Mean drop of the original top-k classes' confidence, split by attack success."""
    pre = np.atleast_2d(np.asarray(pre_probs, dtype=np.float64))
    post = np.atleast_2d(np.asarray(post_probs, dtype=np.float64))
    flags = np.asarray(success_flags, dtype=bool)
    if k > pre.shape[1]:
        raise ContractViolationError(f"k={k} exceeds class count {pre.shape[1]}")
    drops = np.empty(pre.shape[0])
    for i in range(pre.shape[0]):
        top = _top_classes(pre[i], k)
        drops[i] = float(np.mean(pre[i, top] - post[i, top]))
    return ConfidenceDecrease(
        successful=_mean(drops[flags]),
        unsuccessful=_mean(drops[~flags]),
    )


def rank_retention(pre_probs, post_probs, j: int, k: int) -> float | None:
    """Fraction of attacks whose original top-j classes all stay in the post top-k."""
    pre = np.atleast_2d(np.asarray(pre_probs, dtype=np.float64))
    post = np.atleast_2d(np.asarray(post_probs, dtype=np.float64))
    if not j <= k <= pre.shape[1]:
        raise ContractViolationError(f"need j <= k <= class count, got j={j}, k={k}")
    if pre.shape[0] == 0:
        return None
    kept = 0
    for i in range(pre.shape[0]):
        top_j = set(_top_classes(pre[i], j).tolist())
        top_k = set(_top_classes(post[i], k).tolist())
        kept += top_j <= top_k
    return kept / pre.shape[0]


def class_pair_matrix(outcomes, class_count: int) -> np.ndarray:
    """Counts of successful (original class -> final class) pairs; diagonal forced 0."""
    matrix = np.zeros((class_count, class_count), dtype=np.int64)
    for o in outcomes:
        if o.success:
            matrix[o.original_label, o.final_label] += 1
    np.fill_diagonal(matrix, 0)
    return matrix


def target_count_histogram(outcomes, class_count: int) -> np.ndarray:
    """Per image: how many distinct target classes its targeted attacks reached.

    Bin c counts images with exactly c reached targets; bins run 0..K-1.
    """
    reached: dict = {}
    for o in outcomes:
        if o.mode != "targeted":
            continue
        hits = reached.setdefault(o.image_index, set())
        if o.success:
            hits.add(o.target_label)
    histogram = np.zeros(class_count, dtype=np.int64)
    for hits in reached.values():
        histogram[len(hits)] += 1
    return histogram


@dataclass
class FitnessSummary:
    mean_history: list[float]  # per-generation mean of best fitness
    mean_generations_to_success: float | None


def fitness_summary(outcomes) -> FitnessSummary:
    """Average the per-run best-fitness curves and the successful generation counts.

    Histories are right-padded with their final value to a common length, so
    early-stopped runs contribute a flat tail (the same convention used when
    plotting full-length trajectories).
    """
    histories = [o.fitness_history for o in outcomes if o.fitness_history]
    if not histories:
        return FitnessSummary(mean_history=[], mean_generations_to_success=None)
    length = max(len(h) for h in histories)
    padded = np.array([list(h) + [h[-1]] * (length - len(h)) for h in histories])
    return FitnessSummary(
        mean_history=[float(v) for v in padded.mean(axis=0)],
        mean_generations_to_success=_mean(o.generations_used for o in outcomes if o.success),
    )


# ---------------------------------------------------------------------------
# Campaign report


@dataclass
class ReportCell:
    network: str
    region: str
    pixels: int
    rates: SuccessRates
    matrix_untargeted: np.ndarray
    matrix_targeted: np.ndarray
    target_histogram: np.ndarray
    fitness: FitnessSummary
    conf_decrease_top1_succ: float | None = None
    conf_decrease_top3_unsucc: float | None = None
    conf_decrease_top5_unsucc: float | None = None
    top1_in_top3_succ: float | None = None
    top1_in_top5_succ: float | None = None
    top3_in_top3_unsucc: float | None = None
    top5_in_top5_unsucc: float | None = None


@dataclass
class CampaignReport:
    class_count: int
    cells: dict = field(default_factory=dict)  # (network, region, pixels) -> ReportCell
    records: list = field(default_factory=list)  # compact per-attack summaries


def _table3_stats(cell: ReportCell, outcomes) -> None:
    scored = [o for o in outcomes
              if o.mode == "untargeted" and o.original_probs is not None and o.final_probs is not None]
    if not scored:
        return
    pre = np.array([o.original_probs for o in scored])
    post = np.array([o.final_probs for o in scored])
    flags = np.array([o.success for o in scored], dtype=bool)
    k = pre.shape[1]
    cell.conf_decrease_top1_succ = confidence_decrease_topk(pre, post, 1, flags).successful
    if k >= 3:
        cell.conf_decrease_top3_unsucc = confidence_decrease_topk(pre, post, 3, flags).unsuccessful
        cell.top1_in_top3_succ = rank_retention(pre[flags], post[flags], 1, 3)
        cell.top3_in_top3_unsucc = rank_retention(pre[~flags], post[~flags], 3, 3)
    if k >= 5:
        cell.conf_decrease_top5_unsucc = confidence_decrease_topk(pre, post, 5, flags).unsuccessful
        cell.top1_in_top5_succ = rank_retention(pre[flags], post[flags], 1, 5)
        cell.top5_in_top5_unsucc = rank_retention(pre[~flags], post[~flags], 5, 5)


def build_report(outcomes, class_count: int) -> CampaignReport:
    report = CampaignReport(class_count=class_count)
    keys = sorted({(o.network, o.region, o.pixels) for o in outcomes})
    for key in keys:
        network, region, pixels = key
        cell_outcomes = [o for o in outcomes
                         if (o.network, o.region, o.pixels) == key]
        untargeted = [o for o in cell_outcomes if o.mode == "untargeted"]
        targeted = [o for o in cell_outcomes if o.mode == "targeted"]
        cell = ReportCell(
            network=network,
            region=region,
            pixels=pixels,
            rates=success_rates(cell_outcomes),
            matrix_untargeted=class_pair_matrix(untargeted, class_count),
            matrix_targeted=class_pair_matrix(targeted, class_count),
            target_histogram=target_count_histogram(cell_outcomes, class_count),
            fitness=fitness_summary(untargeted),
        )
        _table3_stats(cell, cell_outcomes)
        report.cells[key] = cell
    report.records = [
        {
            "image_index": o.image_index,
            "image_id": o.image_id,
            "network": o.network,
            "mode": o.mode,
            "region": o.region,
            "pixels": o.pixels,
            "target_label": o.target_label,
            "original_label": o.original_label,
            "final_label": o.final_label,
            "success": bool(o.success),
            "final_confidence": float(o.final_confidence),
            "generations_used": int(o.generations_used),
        }
        for o in sorted(outcomes, key=record_sort_key)
    ]
    return report


def record_sort_key(outcome) -> tuple:
    target = -1 if outcome.target_label is None else outcome.target_label
    return (outcome.network, outcome.region, outcome.pixels, outcome.image_index,
            outcome.mode, target)


# ---------------------------------------------------------------------------
# Record (de)serialization: one JSON object per attack


def outcome_to_record(outcome: AttackOutcome) -> dict:
    return {
        "image_index": int(outcome.image_index),
        "image_id": outcome.image_id,
        "network": outcome.network,
        "mode": outcome.mode,
        "region": outcome.region,
        "pixels": int(outcome.pixels),
        "seed": None if outcome.seed is None else int(outcome.seed),
        "original_label": int(outcome.original_label),
        "target_label": None if outcome.target_label is None else int(outcome.target_label),
        "final_label": int(outcome.final_label),
        "success": bool(outcome.success),
        "final_confidence": float(outcome.final_confidence),
        "generations_used": int(outcome.generations_used),
        "stopped_early": bool(outcome.stopped_early),
        "fitness_history": [float(v) for v in outcome.fitness_history],
        "pixel_diffs": [[int(x), int(y), float(r), float(g), float(b)]
                        for x, y, r, g, b in outcome.pixel_diffs],
        "original_probs": None if outcome.original_probs is None
        else [float(v) for v in outcome.original_probs],
        "final_probs": None if outcome.final_probs is None
        else [float(v) for v in outcome.final_probs],
    }


def record_to_outcome(record: dict) -> AttackOutcome:
    diffs = [tuple(d) for d in record["pixel_diffs"]]
    return AttackOutcome(
        success=record["success"],
        mode=record["mode"],
        original_label=record["original_label"],
        final_label=record["final_label"],
        target_label=record["target_label"],
        final_confidence=record["final_confidence"],
        adversarial_image=None,
        generations_used=record["generations_used"],
        fitness_history=list(record["fitness_history"]),
        modified_pixels=[(int(d[0]), int(d[1])) for d in diffs],
        stopped_early=record.get("stopped_early", False),
        original_probs=None if record.get("original_probs") is None
        else np.asarray(record["original_probs"], dtype=np.float64),
        final_probs=None if record.get("final_probs") is None
        else np.asarray(record["final_probs"], dtype=np.float64),
        pixel_diffs=diffs,
        image_index=record["image_index"],
        image_id=record.get("image_id", ""),
        network=record.get("network", ""),
        region=record["region"],
        pixels=record["pixels"],
        seed=record.get("seed"),
    )


def record_line(outcome: AttackOutcome) -> str:
    return json.dumps(outcome_to_record(outcome), separators=(",", ":"))


def read_records(path) -> list[AttackOutcome]:
    outcomes = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                outcomes.append(record_to_outcome(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ContractViolationError(f"{path}: corrupt record at line {number}: {exc}") from exc
    return outcomes


# ---------------------------------------------------------------------------
# File emission (report.json and plot-ready CSVs)


def _cell_to_json(cell: ReportCell) -> dict:
    rates = cell.rates
    return {
        "network": cell.network,
        "region": cell.region,
        "pixels": cell.pixels,
        "untargeted1": rates.untargeted1,
        "confidence_u": rates.confidence_u,
        "untargeted2": rates.untargeted2,
        "targeted": rates.targeted,
        "confidence_t": rates.confidence_t,
        "untargeted_attempts": rates.untargeted_attempts,
        "targeted_attempts": rates.targeted_attempts,
        "images_attacked": rates.images_attacked,
        "mean_generations_to_success": cell.fitness.mean_generations_to_success,
        "mean_fitness_history": cell.fitness.mean_history,
        "matrix_untargeted": cell.matrix_untargeted.tolist(),
        "matrix_targeted": cell.matrix_targeted.tolist(),
        "target_histogram": cell.target_histogram.tolist(),
        "conf_decrease_top1_succ": cell.conf_decrease_top1_succ,
        "conf_decrease_top3_unsucc": cell.conf_decrease_top3_unsucc,
        "conf_decrease_top5_unsucc": cell.conf_decrease_top5_unsucc,
        "top1_in_top3_succ": cell.top1_in_top3_succ,
        "top1_in_top5_succ": cell.top1_in_top5_succ,
        "top3_in_top3_unsucc": cell.top3_in_top3_unsucc,
        "top5_in_top5_unsucc": cell.top5_in_top5_unsucc,
    }


def write_report_json(report: CampaignReport, path) -> None:
    payload = {
        "class_count": report.class_count,
        "cells": [_cell_to_json(report.cells[key]) for key in sorted(report.cells)],
        "records": report.records,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=False)
        fh.write("\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_tables_csv(report: CampaignReport, path) -> None:
    """Long-format table of every scalar cell statistic."""
    scalar_fields = [
        "untargeted1", "confidence_u", "untargeted2", "targeted", "confidence_t",
        "mean_generations_to_success",
        "conf_decrease_top1_succ", "conf_decrease_top3_unsucc", "conf_decrease_top5_unsucc",
        "top1_in_top3_succ", "top1_in_top5_succ", "top3_in_top3_unsucc", "top5_in_top5_unsucc",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["network", "region", "pixels", "metric", "value"])
        for key in sorted(report.cells):
            cell_json = _cell_to_json(report.cells[key])
            for name in scalar_fields:
                writer.writerow([cell_json["network"], cell_json["region"],
                                 cell_json["pixels"], name, _fmt(cell_json[name])])


def write_heatmap_csv(report: CampaignReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["network", "region", "pixels", "mode", "original_class"]
                        + [str(c) for c in range(report.class_count)])
        for key in sorted(report.cells):
            cell = report.cells[key]
            for mode, matrix in (("untargeted", cell.matrix_untargeted),
                                 ("targeted", cell.matrix_targeted)):
                for row_class in range(report.class_count):
                    writer.writerow([cell.network, cell.region, cell.pixels, mode, row_class]
                                    + [str(int(v)) for v in matrix[row_class]])


def write_histogram_csv(report: CampaignReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["network", "region", "pixels", "targets_reached", "image_count"])
        for key in sorted(report.cells):
            cell = report.cells[key]
            for count, images in enumerate(cell.target_histogram):
                writer.writerow([cell.network, cell.region, cell.pixels, count, int(images)])


def write_fitness_mean_csv(report: CampaignReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["network", "region", "pixels", "generation", "mean_fitness"])
        for key in sorted(report.cells):
            cell = report.cells[key]
            for generation, value in enumerate(cell.fitness.mean_history, start=1):
                writer.writerow([cell.network, cell.region, cell.pixels, generation, _fmt(value)])


def write_all_outputs(report: CampaignReport, directory) -> None:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_report_json(report, directory / "report.json")
    write_tables_csv(report, directory / "tables.csv")
    write_heatmap_csv(report, directory / "heatmap.csv")
    write_histogram_csv(report, directory / "histogram.csv")
    write_fitness_mean_csv(report, directory / "fitness_mean.csv")
