"""Accuracy and destruction-rate metrics plus the evaluation harness.

The harness follows the usual protocol for measuring defenses: keep only
images the classifier gets right when clean (undefended clean accuracy is
then 100% by construction), attack each one, defend the attacked image,
and aggregate. The destruction rate is, among images the attack actually
flipped, the fraction the defense restores to the true class; it is
undefined (None, never 0) when the attack flipped nothing.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .images import normalized_rmse
from .pipeline import DefenseConfig, run_ensemble

__all__ = [
    "EvalRecord",
    "EvalReport",
    "top1_accuracy",
    "destruction_rate",
    "evaluate_defense",
    "derive_image_seed",
    "report_row",
    "REPORT_COLUMNS",
    "GRID_COLUMNS",
    "write_report_csv",
    "write_report_json",
    "write_records_csv",
]


@dataclass(frozen=True)
class EvalRecord:
    """Per-image outcome of the attack/defense round trip."""

    image_id: int
    true_label: int
    clean_pred: int
    attacked_pred: int
    defended_pred: int
    defended_ens_pred: int | None
    rmse: float


@dataclass
class EvalReport:
    """Aggregated evaluation results plus the raw per-image records."""

    records: list[EvalRecord]
    sigma: float
    window: int
    deflections: int
    clean_acc: float
    attacked_acc: float
    defended_acc: float
    defended_ens_acc: float | None
    destruction_rate: float | None
    destruction_rate_ens: float | None
    mean_l2: float
    n_images: int
    n_eligible: int


def _select(record: EvalRecord, which) -> int | None:
    if callable(which):
        return which(record)
    return getattr(record, which)


def top1_accuracy(records: list[EvalRecord], which="defended_pred") -> float:
    """Fraction of records whose selected prediction matches the true label.

    `which` is an EvalRecord field name or a callable record -> prediction.
    """
    if not records:
        raise ValueError("no records to aggregate")
    hits = sum(1 for r in records if _select(r, which) == r.true_label)
    return hits / len(records)


def eligible_records(records: list[EvalRecord]) -> list[EvalRecord]:
    """Records where the clean prediction was right and the attack flipped it."""
    return [
        r
        for r in records
        if r.clean_pred == r.true_label and r.attacked_pred != r.true_label
    ]


def destruction_rate(records: list[EvalRecord], which="defended_pred") -> float | None:
    """Recovery fraction over attack-flipped records; None when undefined."""
    eligible = eligible_records(records)
    if not eligible:
        return None
    recovered = sum(1 for r in eligible if _select(r, which) == r.true_label)
    return recovered / len(eligible)


def derive_image_seed(seed: int, image_index: int) -> int:
    """Stable per-image seed; ensemble runs then use seed+0 .. seed+n-1."""
    seq = np.random.SeedSequence([int(seed), int(image_index)])
    return int(seq.generate_state(1, np.uint64)[0] >> 1)


def _evaluate_one(args) -> EvalRecord:
    clf, img, label, image_id, attack_fn, cfg, provider, image_seed, with_ensemble = args
    from .attacks import predict  # local import keeps the worker picklable cheaply

    clean_pred = predict(clf, img).top1
    attacked = attack_fn(clf, img, label)
    rmse = normalized_rmse(img, attacked)
    attacked_pred = predict(clf, attacked).top1
    runs = cfg.ensemble_size if with_ensemble else 1
    outcome = run_ensemble(clf, attacked, cfg, provider=provider, seed=image_seed, runs=runs)
    return EvalRecord(
        image_id=image_id,
        true_label=int(label),
        clean_pred=clean_pred,
        attacked_pred=attacked_pred,
        defended_pred=outcome.run_predictions[0],
        defended_ens_pred=outcome.prediction if with_ensemble else None,
        rmse=rmse,
    )


def evaluate_defense(
    images: np.ndarray,
    labels: np.ndarray,
    clf,
    attack_fn,
    cfg: DefenseConfig,
    provider=None,
    seed: int = 0,
    jobs: int = 1,
    with_ensemble: bool = True,
) -> EvalReport:
    """Attack and defend every correctly-classified image, then aggregate.

    Images the classifier misses when clean are dropped up front. Each kept
    image gets its own derived seed, so results are independent of `jobs`
    and of evaluation order. The single-run defended prediction is the
    first ensemble run (seed+0), i.e. exactly `defend` at the image seed.
    """
    from .attacks import predict

    imgs = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels)
    if imgs.ndim != 4 or imgs.shape[0] == 0:
        raise ValueError(f"expected a nonempty (N, H, W, C) stack, got shape {imgs.shape}")
    if y.shape != (imgs.shape[0],):
        raise ValueError("labels must be a vector matching the image count")

    kept = [i for i in range(imgs.shape[0]) if predict(clf, imgs[i]).top1 == int(y[i])]
    if not kept:
        raise ValueError("no image in the dataset is correctly classified when clean")

    tasks = [
        (
            clf,
            imgs[i],
            int(y[i]),
            i,
            attack_fn,
            cfg,
            provider,
            derive_image_seed(seed, i),
            with_ensemble,
        )
        for i in kept
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_evaluate_one, tasks, chunksize=8))
    else:
        records = [_evaluate_one(t) for t in tasks]

    ens_acc = top1_accuracy(records, "defended_ens_pred") if with_ensemble else None
    ens_rate = destruction_rate(records, "defended_ens_pred") if with_ensemble else None
    return EvalReport(
        records=records,
        sigma=cfg.shrinkage.sigma,
        window=cfg.deflection.window_apothem,
        deflections=cfg.deflection.deflections,
        clean_acc=top1_accuracy(records, "clean_pred"),
        attacked_acc=top1_accuracy(records, "attacked_pred"),
        defended_acc=top1_accuracy(records, "defended_pred"),
        defended_ens_acc=ens_acc,
        destruction_rate=destruction_rate(records, "defended_pred"),
        destruction_rate_ens=ens_rate,
        mean_l2=float(np.mean([r.rmse for r in records])),
        n_images=len(records),
        n_eligible=len(eligible_records(records)),
    )


# Canonical report schema; destruction_rate_ens is appended so both the
# single-run and ensemble recovery rates are visible. Grid rows add a
# trailing error column for non-aborting failures.
REPORT_COLUMNS = [
    "sigma",
    "window",
    "deflections",
    "clean_acc",
    "attacked_acc",
    "defended_acc",
    "defended_ens_acc",
    "destruction_rate",
    "mean_l2",
    "runtime_ms",
    "destruction_rate_ens",
]
GRID_COLUMNS = REPORT_COLUMNS + ["error"]


def report_row(report: EvalReport, runtime_ms: int | None = None) -> dict:
    """Flatten an EvalReport into one schema row."""
    return {
        "sigma": report.sigma,
        "window": report.window,
        "deflections": report.deflections,
        "clean_acc": report.clean_acc,
        "attacked_acc": report.attacked_acc,
        "defended_acc": report.defended_acc,
        "defended_ens_acc": report.defended_ens_acc,
        "destruction_rate": report.destruction_rate,
        "mean_l2": report.mean_l2,
        "runtime_ms": runtime_ms,
        "destruction_rate_ens": report.destruction_rate_ens,
        "error": "",
    }


def _format_cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report_csv(rows: list[dict], path, columns=None) -> None:
    cols = columns if columns is not None else REPORT_COLUMNS
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_format_cell(row.get(col)) for col in cols])


def write_report_json(rows: list[dict], path, columns=None) -> None:
    cols = columns if columns is not None else REPORT_COLUMNS

    def _jsonable(value):
        if value is None or value == "":
            return None
        if isinstance(value, float):
            return round(value, 6)
        if isinstance(value, (np.integer,)):
            return int(value)
        return value

    payload = [{col: _jsonable(row.get(col)) for col in cols} for row in rows]
    with open(str(path), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_records_csv(records: list[EvalRecord], path) -> None:
    """Per-image dump so every aggregate can be recomputed independently."""
    with open(str(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["image_id", "true_label", "clean_pred", "attacked_pred", "defended_pred", "defended_ens_pred", "rmse"]
        )
        for r in records:
            writer.writerow(
                [
                    r.image_id,
                    r.true_label,
                    r.clean_pred,
                    r.attacked_pred,
                    r.defended_pred,
                    "" if r.defended_ens_pred is None else r.defended_ens_pred,
                    f"{r.rmse:.6f}",
                ]
            )
