"""Config, manifest and image loading; tone CSV, report JSON and heatmap writers.

Every data file carries ``schema_version``. Writers go through a temporary
file and ``os.replace`` so a failed run never leaves a half-written output.
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from .colorimetry import Rgb8
from .fairness_metrics import AFFECTNET_CLASSES, TPR_AGGREGATIONS, FairnessReport
from .skin_extraction import HsvBox, LowColorCriterion, SegmentationConfig, YCrCbBox
from .stratification import BrownOverrideRule, ItaThresholds, LightnessThresholds, ToneGroup

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


class ManifestError(ValueError):
    """Raised with every offending line when a manifest fails validation."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class ImageDecodeError(OSError):
    pass


# --- config ----------------------------------------------------------------


@dataclass(frozen=True)
class AuditConfig:
    classes: tuple[str, ...] = AFFECTNET_CLASSES
    ita: ItaThresholds = field(default_factory=ItaThresholds)
    lightness: LightnessThresholds = field(default_factory=LightnessThresholds)
    brown_override: BrownOverrideRule = field(default_factory=BrownOverrideRule)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    low_color: LowColorCriterion = field(default_factory=LowColorCriterion)
    tpr_aggregation: str = "macro"
    # share of manifest rows allowed to miss a tone record before warning
    max_join_miss_fraction: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes or len(set(self.classes)) != len(self.classes):
            raise ConfigError("classes must be a non-empty list of unique names")
        if self.tpr_aggregation not in TPR_AGGREGATIONS:
            raise ConfigError(f"tpr_aggregation must be one of {TPR_AGGREGATIONS}")
        if not 0.0 <= self.max_join_miss_fraction <= 1.0:
            raise ConfigError("max_join_miss_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, **_jsonable(dataclasses.asdict(self))}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(cls, data: Any, where: str):
    """Instantiate dataclass ``cls`` from a mapping, recursing into fields."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        nested = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(nested):
            kwargs[name] = _build(type(nested), value, f"{where}.{name}")
        elif isinstance(nested, tuple) and not isinstance(value, str):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> AuditConfig:
    data = dict(data)
    version = data.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version!r}")
    return _build(AuditConfig, data, "config")


def load_config(path: str | os.PathLike | None) -> AuditConfig:
    """Read a JSON audit config; ``None`` gives the defaults.

    Missing keys fall back to defaults, unknown keys are rejected.
    """
    if path is None:
        return AuditConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data)


# --- manifest --------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRow:
    image_path: str
    true_label: str
    predicted_label: str | None = None
    sample_id: str = ""

    def __post_init__(self):
        if not self.sample_id:
            object.__setattr__(self, "sample_id", self.image_path)


REQUIRED_MANIFEST_COLUMNS = ("image_path", "true_label")


def load_manifest(path: str | os.PathLike, config: AuditConfig = AuditConfig()) -> list[ManifestRow]:
    """Parse a comma-separated manifest with a header row.

    Line numbers in errors count the header as line 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in REQUIRED_MANIFEST_COLUMNS:
            if col not in header:
                raise ManifestError([f"{path}: missing required column {col!r}"])
        classes = set(config.classes)
        rows, problems, seen = [], [], {}
        for i, raw in enumerate(reader, start=2):
            image_path = (raw.get("image_path") or "").strip()
            true_label = (raw.get("true_label") or "").strip()
            predicted = (raw.get("predicted_label") or "").strip() or None
            sample_id = (raw.get("sample_id") or "").strip()
            if None in raw:
                problems.append(f"line {i}: more fields than header columns")
                continue
            if not image_path:
                problems.append(f"line {i}: empty image_path")
                continue
            if true_label not in classes:
                problems.append(f"line {i}: unknown true_label {true_label!r}")
                continue
            if predicted is not None and predicted not in classes:
                problems.append(f"line {i}: unknown predicted_label {predicted!r}")
                continue
            row = ManifestRow(image_path, true_label, predicted, sample_id)
            if row.sample_id in seen:
                problems.append(
                    f"line {i}: duplicate sample_id {row.sample_id!r} (first on line {seen[row.sample_id]})"
                )
                continue
            seen[row.sample_id] = i
            rows.append(row)
    if problems:
        raise ManifestError(problems)
    return rows


# --- images ----------------------------------------------------------------


def decode_image(path: str | os.PathLike) -> np.ndarray:
    """Decode an image file into an (H, W, 3) uint8 sRGB array.

    Grayscale expands to equal channels, alpha is discarded.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                im = im.point(lambda v: v / 256).convert("L")
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode {path}: {exc}") from exc
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ImageDecodeError(f"cannot decode {path}: empty image")
    return arr


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp", ".gif")


def list_images(directory: str | os.PathLike) -> list[Path]:
    """Image files under ``directory`` (recursive), sorted by relative path."""
    root = Path(directory)
    return sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )


# --- tone records ----------------------------------------------------------


@dataclass(frozen=True)
class ToneRecordOut:
    sample_id: str
    mean_rgb: Rgb8 | None = None
    l_star: float | None = None
    a_star: float | None = None
    b_star: float | None = None
    ita_deg: float | None = None
    hue_deg: float | None = None
    group_ita: ToneGroup = ToneGroup.UNDETERMINED
    group_hl: ToneGroup = ToneGroup.UNDETERMINED
    override_fired: bool = False
    exclusion_reason: str | None = None


TONE_COLUMNS = (
    "schema_version",
    "sample_id",
    "mean_r",
    "mean_g",
    "mean_b",
    "l_star",
    "a_star",
    "b_star",
    "ita_deg",
    "hue_deg",
    "group_ita",
    "group_hl",
    "override_fired",
    "exclusion_reason",
)


def _fmt(v: float | None) -> str:
    if v is None:
        return ""
    out = f"{v:.4f}"
    return "0.0000" if out == "-0.0000" else out


def _opt_float(s: str) -> float | None:
    return float(s) if s != "" else None


@contextlib.contextmanager
def atomic_writer(path: str | os.PathLike, newline: str | None = None) -> Iterator[io.TextIOBase]:
    """Open a temp file next to ``path``; move it into place only on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline=newline) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def tone_rows(records: Iterable[ToneRecordOut]) -> Iterator[list[str]]:
    for rec in records:
        rgb = rec.mean_rgb
        yield [
            str(SCHEMA_VERSION),
            rec.sample_id,
            "" if rgb is None else str(rgb.r),
            "" if rgb is None else str(rgb.g),
            "" if rgb is None else str(rgb.b),
            _fmt(rec.l_star),
            _fmt(rec.a_star),
            _fmt(rec.b_star),
            _fmt(rec.ita_deg),
            _fmt(rec.hue_deg),
            ToneGroup(rec.group_ita).value,
            ToneGroup(rec.group_hl).value,
            "true" if rec.override_fired else "false",
            rec.exclusion_reason or "",
        ]


def write_tone_csv(records: Iterable[ToneRecordOut], path: str | os.PathLike) -> None:
    with atomic_writer(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(TONE_COLUMNS)
        writer.writerows(tone_rows(records))


def read_tone_csv(path: str | os.PathLike) -> list[ToneRecordOut]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TONE_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: not a tone CSV, missing columns {missing}")
        out = []
        for i, row in enumerate(reader, start=2):
            if int(row["schema_version"]) != SCHEMA_VERSION:
                raise ValueError(f"{path} line {i}: unsupported schema_version")
            rgb = None
            if row["mean_r"] != "":
                rgb = Rgb8(int(row["mean_r"]), int(row["mean_g"]), int(row["mean_b"]))
            out.append(
                ToneRecordOut(
                    sample_id=row["sample_id"],
                    mean_rgb=rgb,
                    l_star=_opt_float(row["l_star"]),
                    a_star=_opt_float(row["a_star"]),
                    b_star=_opt_float(row["b_star"]),
                    ita_deg=_opt_float(row["ita_deg"]),
                    hue_deg=_opt_float(row["hue_deg"]),
                    group_ita=ToneGroup(row["group_ita"]),
                    group_hl=ToneGroup(row["group_hl"]),
                    override_fired=row["override_fired"] == "true",
                    exclusion_reason=row["exclusion_reason"] or None,
                )
            )
    return out


# --- reports ---------------------------------------------------------------


def report_document(
    reports: dict[str, FairnessReport],
    config: AuditConfig,
    excluded: list[dict] = (),
    warnings: list[str] = (),
) -> dict:
    """Assemble the JSON document written by :func:`write_report_json`."""
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "taxonomies": {name: rep.to_dict() for name, rep in reports.items()},
        "excluded": sorted(excluded, key=lambda e: (e.get("sample_id", ""), e.get("taxonomy", ""), e.get("reason", ""))),
        "warnings": list(warnings),
    }


def dumps_report(document: dict) -> str:
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report_json(document: dict, path: str | os.PathLike) -> None:
    text = dumps_report(document)
    with atomic_writer(path, newline="\n") as fh:
        fh.write(text)


def read_report_json(path: str | os.PathLike) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported report schema_version {doc.get('schema_version')!r}")
    return doc


HEATMAP_COLUMNS = ("schema_version", "taxonomy", "group", "emotion", "recall")
GAP_COLUMNS = ("schema_version", "taxonomy", "metric", "value", "max_group", "min_group")


def _repr_float(v) -> str:
    return "" if v is None else repr(float(v))


def emit_heatmap_data(document: dict, path: str | os.PathLike) -> None:
    """Long-form recall table: one row per (taxonomy, group, emotion)."""
    with atomic_writer(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(HEATMAP_COLUMNS)
        for name in sorted(document["taxonomies"]):
            rep = document["taxonomies"][name]
            for group in rep["groups"]:
                for cls in rep["classes"]:
                    writer.writerow(
                        [SCHEMA_VERSION, name, group, cls, _repr_float(rep["recall"][group][cls])]
                    )


def write_gaps_csv(document: dict, path: str | os.PathLike) -> None:
    with atomic_writer(path, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(GAP_COLUMNS)
        for name in sorted(document["taxonomies"]):
            rep = document["taxonomies"][name]
            for metric in ("f1_gap", "accuracy_equality", "tpr_disparity"):
                gap = rep[metric]
                if gap is None:
                    writer.writerow([SCHEMA_VERSION, name, metric, "", "", ""])
                else:
                    writer.writerow(
                        [SCHEMA_VERSION, name, metric, _repr_float(gap["value"]), gap["max_group"], gap["min_group"]]
                    )
            for cls in rep["classes"]:
                writer.writerow(
                    [SCHEMA_VERSION, name, f"eod:{cls}", _repr_float(rep["eod_disparity"][cls]), "", ""]
                )
