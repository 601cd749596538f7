"""Command-line entry point: segment, attack, report, oracle-check.

A run is driven by a JSON config file holding key/value settings; every
optimizer default matches the campaign defaults (population 400, 100
generations, dithered F in [0.5, 1), binomial crossover with CR 0.7, latin
hypercube initialization, early stop on label change).  ``init-config``
writes a starter file.

Attack outcomes append to <output>/records.jsonl, one JSON object per line:

    {"image_index": int, "image_id": str, "network": str,
     "mode": "untargeted"|"targeted", "region": "whole"|"foreground"|"background",
     "pixels": int, "seed": int, "original_label": int, "target_label": int|null,
     "final_label": int, "success": bool, "final_confidence": float,
     "generations_used": int, "stopped_early": bool,
     "fitness_history": [float, ...], "pixel_diffs": [[x, y, r, g, b], ...],
     "original_probs": [float, ...], "final_probs": [float, ...]}

An attack is keyed by (image_index, mode, region, pixels, target_label);
reruns skip keys already on disk, which makes interrupted campaigns
resumable.  Per-attack seeds derive from (campaign seed, image index, mode,
target), so results do not depend on scheduling or on which keys were
resumed.  PIXELPROBE_ORACLE_URL overrides the configured oracle endpoint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import metrics, oracle, segmentation
from .core import ContractViolationError, load_image
from .de import DeConfig

REGION_ALIASES = {"whole": "whole", "fg": "foreground", "bg": "background",
                  "foreground": "foreground", "background": "background"}

DEFAULT_CONFIG = {
    "seed": 0,
    "dataset": "images",
    "masks": None,
    "labels": None,
    "trimap_rect": None,
    "trimaps": None,
    "sample_count": None,
    "output": "out",
    "oracle": {"kind": "external", "url": "http://127.0.0.1:8400"},
    "network": None,
    "attacks": [{"mode": "untargeted", "region": "whole", "pixels": 1}],
    "de": {
        "population_size": 400,
        "max_generations": 100,
        "crossover_rate": 0.7,
        "mutation_dither": [0.5, 1.0],
    },
    "grabcut": {"components": 5, "gamma": 50.0, "iterations": 5},
}


def load_config(path) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy of defaults
    with open(path, "r", encoding="utf-8") as fh:
        user = json.load(fh)
    for key, value in user.items():
        if isinstance(value, dict) and isinstance(config.get(key), dict):
            config[key].update(value)
        else:
            config[key] = value
    return config


def _de_config(config, seed) -> DeConfig:
    de_cfg = config["de"]
    factor = de_cfg.get("mutation_dither")
    factor = tuple(factor) if factor is not None else de_cfg.get("mutation_factor", (0.5, 1.0))
    return DeConfig(
        bounds=np.array([[0.0, 1.0]]),  # replaced per image by the attack
        population_size=de_cfg.get("population_size", 400),
        max_generations=de_cfg.get("max_generations", 100),
        crossover_rate=de_cfg.get("crossover_rate", 0.7),
        mutation_factor=factor,
        seed=seed,
    )


def _build_oracle(config):
    spec = config["oracle"]
    if spec.get("kind") == "external":
        url = os.environ.get("PIXELPROBE_ORACLE_URL") or spec["url"]
        return oracle.ExternalOracle(url)
    if spec.get("kind", "").startswith("builtin"):
        return oracle.load_builtin(spec["path"])
    raise ContractViolationError(f"unknown oracle spec {spec!r}")


def _dataset_files(config) -> list[Path]:
    root = Path(config["dataset"])
    files = sorted(root.glob("*.png"))
    if not files:
        raise ContractViolationError(f"no PNG images under {root}")
    sample = config.get("sample_count")
    if sample is not None:
        if sample > len(files):
            raise ContractViolationError(
                f"sample_count {sample} exceeds dataset size {len(files)}"
            )
        rng = np.random.default_rng(config["seed"])
        picks = sorted(rng.choice(len(files), size=sample, replace=False).tolist())
        files = [files[i] for i in picks]
    return files


def _load_labels(config) -> dict | None:
    if not config.get("labels"):
        return None
    with open(config["labels"], "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# segment


def cmd_segment(args) -> int:
    config = load_config(args.config)
    params = segmentation.GrabcutParams(**config["grabcut"])
    files = _dataset_files(config)
    out_dir = Path(config["output"]) / "masks"
    out_dir.mkdir(parents=True, exist_ok=True)
    trimap_dir = config.get("trimaps")
    rect = config.get("trimap_rect")
    if trimap_dir is None and rect is None:
        print("config needs either 'trimap_rect' or 'trimaps'", file=sys.stderr)
        return 2
    failures = 0
    for path in files:
        try:
            image = load_image(path)
            if trimap_dir is not None:
                trimap = segmentation.load_trimap(Path(trimap_dir) / path.name)
            else:
                trimap = segmentation.trimap_from_rectangle(image.shape[:2], rect)
            result = segmentation.grabcut(image, trimap, params)
            segmentation.save_mask(result.mask, out_dir / path.name)
            note = f" [{result.warning}]" if result.warning else ""
            print(f"{path.name}: {result.iterations_run} iterations, "
                  f"foreground {int(result.mask.sum())} px{note}")
        except Exception as exc:
            failures += 1
            print(f"{path.name}: FAILED: {exc}", file=sys.stderr)
    print(f"segmented {len(files) - failures}/{len(files)} images -> {out_dir}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# attack


def _attack_specs(config, args) -> list[dict]:
    if args.region or args.pixels or args.mode:
        return [{
            "mode": args.mode or "untargeted",
            "region": REGION_ALIASES[args.region or "whole"],
            "pixels": int(args.pixels or 1),
        }]
    return [dict(spec, region=REGION_ALIASES[spec.get("region", "whole")])
            for spec in config["attacks"]]


def _record_key(record: dict) -> tuple:
    return (record["image_index"], record["mode"], record["region"],
            record["pixels"], record["target_label"])


def _plan_attacks(orc, files, labels, specs, config, campaign_seed):
    """Deterministic list of attack tasks, skipping oracle-misclassified images."""
    tasks = []
    masks_dir = config.get("masks")
    for index, path in enumerate(files):
        image = load_image(path)
        probs = orc.classify_batch(image[None])[0]
        predicted = int(np.argmax(probs))
        if labels is not None:
            true = labels.get(path.name)
            if true is not None and predicted != int(true):
                continue
        mask = None
        if any(spec["region"] != "whole" for spec in specs):
            if masks_dir is None:
                raise ContractViolationError("region-constrained attacks need config['masks']")
            mask = segmentation.load_mask(Path(masks_dir) / path.name, image.shape[:2])
        for spec in specs:
            targets = [None] if spec["mode"] == "untargeted" else [
                t for t in range(orc.class_count) if t != predicted
            ]
            for target in targets:
                tasks.append({
                    "image_index": index,
                    "image_id": path.name,
                    "image": image,
                    "mask": mask if spec["region"] != "whole" else None,
                    "mode": spec["mode"],
                    "region": spec["region"],
                    "pixels": spec["pixels"],
                    "target": target,
                    "seed": attack_mod.derive_attack_seed(
                        campaign_seed, index, spec["mode"], target),
                })
    return tasks


def _run_task(orc, base_de, network, task):
    config = attack_mod.AttackConfig(
        mode=task["mode"],
        target_class=task["target"],
        pixels=task["pixels"],
        region=task["region"],
        de=replace(base_de, seed=task["seed"]),
    )
    outcome = attack_mod.attack_image(orc, task["image"], task["mask"], config)
    outcome.image_index = task["image_index"]
    outcome.image_id = task["image_id"]
    outcome.network = network
    return outcome


def cmd_attack(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    orc = _build_oracle(config)
    network = config.get("network") or getattr(orc, "name", "") or orc.kind
    files = _dataset_files(config)
    labels = _load_labels(config)
    specs = _attack_specs(config, args)
    out_dir = Path(config["output"])
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / "records.jsonl"

    done = set()
    if records_path.exists():
        done = {_record_key(metrics.outcome_to_record(o))
                for o in metrics.read_records(records_path)}

    tasks = _plan_attacks(orc, files, labels, specs, config, config["seed"])
    pending = [t for t in tasks
               if (t["image_index"], t["mode"], t["region"], t["pixels"], t["target"]) not in done]
    print(f"{len(tasks)} attacks planned, {len(tasks) - len(pending)} already on disk")

    base_de = _de_config(config, seed=0)
    try:
        with open(records_path, "a", encoding="utf-8") as fh:
            if args.jobs > 1:
                with ThreadPoolExecutor(max_workers=args.jobs) as pool:
                    results = pool.map(lambda t: _run_task(orc, base_de, network, t), pending)
                    _write_results(results, pending, fh)
            else:
                results = (_run_task(orc, base_de, network, t) for t in pending)
                _write_results(results, pending, fh)
    except oracle.OracleProtocolError as exc:
        # completed attacks are already flushed to disk; rerunning resumes
        print(f"oracle failure mid-run: {exc}", file=sys.stderr)
        print(f"stopping; rerun the same command to resume from {records_path}",
              file=sys.stderr)
        return 1

    outcomes = metrics.read_records(records_path)
    report = metrics.build_report(outcomes, orc.class_count)
    metrics.write_all_outputs(report, out_dir)
    print(f"report written to {out_dir}")

    if args.verify:
        bad = verify_records(outcomes, files, config)
        if bad:
            for line in bad:
                print(f"VERIFY FAILED: {line}", file=sys.stderr)
            return 1
        print(f"verify: all {len(outcomes)} records satisfy the region constraint")
    return 0


def _write_results(results, pending, fh) -> None:
    # results arrive in submission order, so the record file is deterministic
    last_index = {task["image_id"]: i for i, task in enumerate(pending)}
    hits: dict = {}
    for i, (task, outcome) in enumerate(zip(pending, results)):
        fh.write(metrics.record_line(outcome) + "\n")
        fh.flush()
        hits.setdefault(task["image_id"], []).append(outcome.success)
        if last_index[task["image_id"]] == i:
            done = hits[task["image_id"]]
            print(f"{task['image_id']}: {sum(done)}/{len(done)} attacks succeeded")


def verify_records(outcomes, files, config) -> list[str]:
    """Region-confinement check over records reloaded from disk."""
    by_name = {p.name: p for p in files}
    masks_dir = config.get("masks")
    problems = []
    for outcome in outcomes:
        path = by_name.get(outcome.image_id)
        if path is None:
            problems.append(f"{_describe(outcome)}: image {outcome.image_id!r} not in dataset")
            continue
        original = load_image(path)
        mask = None
        if outcome.region != "whole":
            mask = segmentation.load_mask(Path(masks_dir) / outcome.image_id, original.shape[:2])
        for issue in attack_mod.confinement_violations(original, outcome, mask):
            problems.append(f"{_describe(outcome)}: {issue}")
    return problems


def _describe(outcome) -> str:
    target = "" if outcome.target_label is None else f" target={outcome.target_label}"
    return (f"record(image={outcome.image_id} mode={outcome.mode} "
            f"region={outcome.region} pixels={outcome.pixels}{target})")


# ---------------------------------------------------------------------------
# report / oracle-check


def cmd_report(args) -> int:
    outcomes = metrics.read_records(args.records)
    class_count = 0
    for outcome in outcomes:
        if outcome.original_probs is not None:
            class_count = len(outcome.original_probs)
            break
    report = metrics.build_report(outcomes, class_count)
    metrics.write_all_outputs(report, args.out)
    print(f"{len(outcomes)} records -> {args.out}")
    return 0


def cmd_oracle_check(args) -> int:
    if args.url:
        os.environ["PIXELPROBE_ORACLE_URL"] = args.url
        config = {"oracle": {"kind": "external", "url": args.url}}
    else:
        config = load_config(args.config)
    try:
        orc = _build_oracle(config)
        desc = orc.descriptor()
        probe = np.zeros((2,) + tuple(desc.shape))
        probs = orc.classify_batch(probe)
        oracle.validate_probs(probs, desc.class_count)
    except Exception as exc:
        print(f"oracle check FAILED: {exc}", file=sys.stderr)
        return 1
    print(f"oracle ok: kind={desc.kind} name={desc.name!r} classes={desc.class_count} "
          f"shape={desc.shape}")
    return 0


def cmd_init_config(args) -> int:
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(DEFAULT_CONFIG, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pixelprobe",
                                     description="Region-constrained few-pixel attacks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="produce masks from images and trimaps")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("attack", help="run an attack campaign")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--region", choices=sorted(REGION_ALIASES))
    p.add_argument("--pixels", type=int, choices=(1, 3, 5))
    p.add_argument("--mode", choices=("untargeted", "targeted"))
    p.add_argument("--verify", action="store_true",
                   help="check every record's region confinement after the run")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("report", help="regenerate report files from records")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle-check", help="ping /meta and probe-classify")
    p.add_argument("--url")
    p.add_argument("--config")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("init-config", help="write a default config file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
