"""Per-image tone estimation and the tone/prediction join used by audits."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .colorimetry import compute_hue, compute_ita, rgb_to_lab
from .dataset_io import AuditConfig, ImageDecodeError, ManifestRow, ToneRecordOut, decode_image
from .fairness_metrics import FairnessReport, PredictionRecord, fairness_report, tally
from .skin_extraction import is_low_color, mean_skin_rgb, segment_skin
from .stratification import ToneGroup, classify_hl_detailed, classify_ita

log = logging.getLogger(__name__)

TAXONOMIES = ("ita", "hl")


def estimate_tone(img: np.ndarray, sample_id: str, config: AuditConfig = AuditConfig()) -> ToneRecordOut:
    """Low-colour filter -> segmentation -> mean skin colour -> both taxonomies."""
    low, stats = is_low_color(img, config.low_color)
    if low:
        log.info("%s: low colour (mean chroma %.2f, vivid %.3f)", sample_id, *stats)
        return ToneRecordOut(sample_id, exclusion_reason="low_color")
    seg = config.segmentation
    mask = segment_skin(img, seg)
    mean = mean_skin_rgb(img, mask, seg.min_coverage_fraction, seg.min_coverage_pixels)
    if mean is None:
        return ToneRecordOut(sample_id, exclusion_reason="insufficient_skin")
    lab = rgb_to_lab(mean)
    ita = compute_ita(lab)
    hl = classify_hl_detailed(mean, config.lightness, config.brown_override)
    return ToneRecordOut(
        sample_id=sample_id,
        mean_rgb=mean,
        l_star=lab.l_star,
        a_star=lab.a_star,
        b_star=lab.b_star,
        ita_deg=ita,
        hue_deg=compute_hue(lab),
        group_ita=classify_ita(ita, config.ita),
        group_hl=hl.group,
        override_fired=hl.override_fired,
    )


def tone_for_file(path: Path, sample_id: str, config: AuditConfig) -> ToneRecordOut:
    try:
        img = decode_image(path)
    except ImageDecodeError as exc:
        log.warning("%s", exc)
        return ToneRecordOut(sample_id, exclusion_reason="decode_error")
    return estimate_tone(img, sample_id, config)


def estimate_tones(
    paths: Sequence[Path], root: Path, config: AuditConfig, threads: int = 1
) -> list[ToneRecordOut]:
    """Tone records in input order; ``sample_id`` is the posix path under ``root``."""
    ids = [Path(p).relative_to(root).as_posix() for p in paths]
    if threads <= 1:
        return [tone_for_file(p, i, config) for p, i in zip(paths, ids)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda pi: tone_for_file(pi[0], pi[1], config), zip(paths, ids)))


@dataclass
class AuditResult:
    reports: dict[str, FairnessReport]
    excluded: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    joined: int = 0


def audit(
    tones: Sequence[ToneRecordOut],
    manifest: Sequence[ManifestRow],
    config: AuditConfig = AuditConfig(),
    taxonomies: Sequence[str] = TAXONOMIES,
) -> AuditResult:
    """Join tone records with manifest predictions and score each taxonomy."""
    by_id = {t.sample_id: t for t in tones}
    excluded, warnings = [], []
    joined: list[tuple[ToneRecordOut, ManifestRow]] = []
    misses = 0
    for row in manifest:
        tone = by_id.get(row.sample_id)
        if tone is None:
            misses += 1
            excluded.append({"sample_id": row.sample_id, "taxonomy": "", "reason": "no_tone_record"})
            continue
        if row.predicted_label is None:
            excluded.append({"sample_id": row.sample_id, "taxonomy": "", "reason": "no_prediction"})
            continue
        if tone.exclusion_reason:
            excluded.append({"sample_id": row.sample_id, "taxonomy": "", "reason": tone.exclusion_reason})
            continue
        joined.append((tone, row))
    if manifest and misses / len(manifest) > config.max_join_miss_fraction:
        warnings.append(
            f"{misses} of {len(manifest)} manifest rows have no tone record "
            f"(allowed fraction {config.max_join_miss_fraction})"
        )

    reports = {}
    for name in taxonomies:
        attr = {"ita": "group_ita", "hl": "group_hl"}[name]
        records = []
        for tone, row in joined:
            group = getattr(tone, attr)
            records.append(PredictionRecord(row.sample_id, group, row.true_label, row.predicted_label))
        conf = tally(records, config.classes)
        for rec in records:
            if rec.group is ToneGroup.UNDETERMINED:
                excluded.append({"sample_id": rec.sample_id, "taxonomy": name, "reason": "undetermined_group"})
        reports[name] = fairness_report(conf, config.tpr_aggregation)
    return AuditResult(reports, excluded, warnings, len(joined))
