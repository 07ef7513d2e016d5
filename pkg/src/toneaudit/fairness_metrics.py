"""Per-group classification metrics and group fairness gaps.

Rates with a zero denominator are ``None`` (undefined). They are left out of
every average and gap and listed in the report, never replaced by 0 or 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .stratification import CLASSIFIED_GROUPS, ToneGroup

log = logging.getLogger(__name__)

AFFECTNET_CLASSES = (
    "neutral",
    "happy",
    "sad",
    "surprise",
    "fear",
    "disgust",
    "anger",
    "contempt",
)
TPR_AGGREGATIONS = ("macro", "micro")


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: str
    group: ToneGroup
    true_label: str
    predicted_label: str


class ClassCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    support: int


@dataclass(eq=False)
class GroupConfusion:
    """Per-group, per-class TP/FP/FN/support tallies.

    Arrays are indexed ``[group, class]`` following ``groups`` and
    ``classes``. Records in the Undetermined group are only counted in
    ``excluded``.
    """

    classes: tuple[str, ...]
    groups: tuple[ToneGroup, ...] = CLASSIFIED_GROUPS
    tp: np.ndarray = field(default=None)
    fp: np.ndarray = field(default=None)
    fn: np.ndarray = field(default=None)
    support: np.ndarray = field(default=None)
    total: np.ndarray = field(default=None)
    correct: np.ndarray = field(default=None)
    excluded: int = 0

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.groups = tuple(ToneGroup(g) for g in self.groups)
        shape = (len(self.groups), len(self.classes))
        for name in ("tp", "fp", "fn", "support"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(shape, dtype=np.int64))
        for name in ("total", "correct"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(len(self.groups), dtype=np.int64))
        self._gi = {g: i for i, g in enumerate(self.groups)}
        self._ci = {c: i for i, c in enumerate(self.classes)}

    def add(self, rec: PredictionRecord) -> None:
        group = ToneGroup(rec.group)
        for label in (rec.true_label, rec.predicted_label):
            if label not in self._ci:
                raise ValueError(f"{rec.sample_id}: unknown label {label!r}")
        if group not in self._gi:
            self.excluded += 1
            return
        g = self._gi[group]
        t = self._ci[rec.true_label]
        p = self._ci[rec.predicted_label]
        self.total[g] += 1
        self.support[g, t] += 1
        if t == p:
            self.correct[g] += 1
            self.tp[g, t] += 1
        else:
            self.fn[g, t] += 1
            self.fp[g, p] += 1

    def merge(self, other: "GroupConfusion") -> "GroupConfusion":
        if other.classes != self.classes or other.groups != self.groups:
            raise ValueError("cannot merge tallies over different classes or groups")
        return GroupConfusion(
            classes=self.classes,
            groups=self.groups,
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
            support=self.support + other.support,
            total=self.total + other.total,
            correct=self.correct + other.correct,
            excluded=self.excluded + other.excluded,
        )

    __add__ = merge

    def counts(self, group: ToneGroup, cls: str) -> ClassCounts:
        g, c = self._gi[ToneGroup(group)], self._ci[cls]
        return ClassCounts(
            int(self.tp[g, c]), int(self.fp[g, c]), int(self.fn[g, c]), int(self.support[g, c])
        )

    def group_total(self, group: ToneGroup) -> int:
        return int(self.total[self._gi[ToneGroup(group)]])

    def group_correct(self, group: ToneGroup) -> int:
        return int(self.correct[self._gi[ToneGroup(group)]])


def tally(
    records: Iterable[PredictionRecord],
    classes: Sequence[str] = AFFECTNET_CLASSES,
    groups: Sequence[ToneGroup] = CLASSIFIED_GROUPS,
) -> GroupConfusion:
    conf = GroupConfusion(classes=tuple(classes), groups=tuple(groups))
    for rec in records:
        conf.add(rec)
    return conf


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def recall(group: ToneGroup, cls: str, conf: GroupConfusion) -> float | None:
    """TP / support for one (group, class); None when the class is absent."""
    k = conf.counts(group, cls)
    return _ratio(k.tp, k.support)


def precision_f1(
    group: ToneGroup, cls: str, conf: GroupConfusion
) -> tuple[float | None, float | None]:
    """Precision and F1 for one (group, class).

    F1 is taken from counts, 2TP / (2TP + FP + FN), so it is 0 rather than
    undefined when precision is undefined but the class has support, and
    undefined only when the class never occurs in truth or prediction.
    """
    k = conf.counts(group, cls)
    precision = _ratio(k.tp, k.tp + k.fp)
    f1 = _ratio(2 * k.tp, 2 * k.tp + k.fp + k.fn)
    return precision, f1


def group_accuracy(group: ToneGroup, conf: GroupConfusion) -> float | None:
    return _ratio(conf.group_correct(group), conf.group_total(group))


def group_macro_f1(group: ToneGroup, conf: GroupConfusion) -> float | None:
    """Unweighted mean F1 over classes with support in ``group``."""
    scores = []
    for cls in conf.classes:
        if conf.counts(group, cls).support == 0:
            log.debug("macro-F1 %s: skipping %s (no support)", group, cls)
            continue
        _, f1 = precision_f1(group, cls, conf)
        if f1 is not None:
            scores.append(f1)
    return sum(scores) / len(scores) if scores else None


def group_tpr(group: ToneGroup, conf: GroupConfusion, aggregation: str = "macro") -> float | None:
    """Group true positive rate.

    ``macro`` averages defined class recalls; ``micro`` pools TP over
    support, which equals group accuracy for single-label data.
    """
    if aggregation == "micro":
        g = conf._gi[ToneGroup(group)]
        return _ratio(int(conf.tp[g].sum()), int(conf.support[g].sum()))
    if aggregation != "macro":
        raise ValueError(f"unknown TPR aggregation {aggregation!r}")
    recalls = [r for c in conf.classes if (r := recall(group, c, conf)) is not None]
    return sum(recalls) / len(recalls) if recalls else None


class Gap(NamedTuple):
    value: float
    max_group: ToneGroup
    min_group: ToneGroup


def range_gap(values: Mapping[ToneGroup, float | None], min_groups: int = 2) -> Gap | None:
    """max - min over the defined values; None with fewer than ``min_groups``.

    Ties for an extreme go to the group listed first.
    """
    defined = [(g, v) for g, v in values.items() if v is not None]
    if len(defined) < min_groups or not defined:
        return None
    hi = max(defined, key=lambda gv: gv[1])
    lo = min(defined, key=lambda gv: gv[1])
    return Gap(hi[1] - lo[1], hi[0], lo[0])


def f1_gap(conf: GroupConfusion) -> Gap | None:
    return range_gap({g: group_macro_f1(g, conf) for g in conf.groups})


def accuracy_equality(conf: GroupConfusion) -> Gap | None:
    return range_gap({g: group_accuracy(g, conf) for g in conf.groups})


def tpr_disparity(conf: GroupConfusion, aggregation: str = "macro") -> Gap | None:
    return range_gap({g: group_tpr(g, conf, aggregation) for g in conf.groups})


@dataclass
class EodMatrix:
    recall: dict[ToneGroup, dict[str, float | None]]
    disparity: dict[str, float | None]


def eod_matrix(conf: GroupConfusion) -> EodMatrix:
    """Recall per (group, class) and per-class spread across groups.

    A class recalled in only one group has spread 0; in none, None.
    """
    matrix = {g: {c: recall(g, c, conf) for c in conf.classes} for g in conf.groups}
    disparity = {}
    for c in conf.classes:
        gap = range_gap({g: matrix[g][c] for g in conf.groups}, min_groups=1)
        disparity[c] = None if gap is None else gap.value
    return EodMatrix(matrix, disparity)


def _gap_dict(gap: Gap | None) -> dict | None:
    if gap is None:
        return None
    return {"value": gap.value, "max_group": gap.max_group.value, "min_group": gap.min_group.value}


@dataclass
class FairnessReport:
    classes: tuple[str, ...]
    groups: tuple[ToneGroup, ...]
    tpr_aggregation: str
    support: dict
    precision: dict
    recall: dict
    f1: dict
    accuracy: dict
    macro_f1: dict
    tpr: dict
    f1_gap: Gap | None
    accuracy_equality: Gap | None
    tpr_disparity: Gap | None
    eod_disparity: dict
    undefined: list
    n_records: int
    n_excluded: int

    def to_dict(self) -> dict:
        def keyed(d):
            return {getattr(g, "value", g): v for g, v in d.items()}

        return {
            "classes": list(self.classes),
            "groups": [g.value for g in self.groups],
            "tpr_aggregation": self.tpr_aggregation,
            "n_records": self.n_records,
            "n_excluded": self.n_excluded,
            "support": keyed(self.support),
            "precision": keyed(self.precision),
            "recall": keyed(self.recall),
            "f1": keyed(self.f1),
            "accuracy": keyed(self.accuracy),
            "macro_f1": keyed(self.macro_f1),
            "tpr": keyed(self.tpr),
            "f1_gap": _gap_dict(self.f1_gap),
            "accuracy_equality": _gap_dict(self.accuracy_equality),
            "tpr_disparity": _gap_dict(self.tpr_disparity),
            "eod_disparity": dict(self.eod_disparity),
            "undefined": list(self.undefined),
        }


def fairness_report(conf: GroupConfusion, tpr_aggregation: str = "macro") -> FairnessReport:
    """Evaluate every metric over a tally."""
    if tpr_aggregation not in TPR_AGGREGATIONS:
        raise ValueError(f"tpr_aggregation must be one of {TPR_AGGREGATIONS}")
    support, precision, f1 = {}, {}, {}
    undefined = []
    for g in conf.groups:
        support[g], precision[g], f1[g] = {}, {}, {}
        for c in conf.classes:
            support[g][c] = conf.counts(g, c).support
            precision[g][c], f1[g][c] = precision_f1(g, c, conf)
    eod = eod_matrix(conf)

    for g in conf.groups:
        for c in conf.classes:
            for metric, table in (("precision", precision), ("recall", eod.recall), ("f1", f1)):
                if table[g][c] is None:
                    undefined.append({"metric": metric, "group": g.value, "class": c})
    accuracy = {g: group_accuracy(g, conf) for g in conf.groups}
    macro = {g: group_macro_f1(g, conf) for g in conf.groups}
    tpr = {g: group_tpr(g, conf, tpr_aggregation) for g in conf.groups}
    for metric, table in (("accuracy", accuracy), ("macro_f1", macro), ("tpr", tpr)):
        for g, v in table.items():
            if v is None:
                undefined.append({"metric": metric, "group": g.value, "class": None})

    return FairnessReport(
        classes=conf.classes,
        groups=conf.groups,
        tpr_aggregation=tpr_aggregation,
        support=support,
        precision=precision,
        recall=eod.recall,
        f1=f1,
        accuracy=accuracy,
        macro_f1=macro,
        tpr=tpr,
        f1_gap=range_gap(macro),
        accuracy_equality=range_gap(accuracy),
        tpr_disparity=range_gap(tpr),
        eod_disparity=eod.disparity,
        undefined=undefined,
        n_records=int(conf.total.sum()),
        n_excluded=conf.excluded,
    )
