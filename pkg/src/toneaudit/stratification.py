"""Tone groups under the ITA and hue-lightness taxonomies."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .colorimetry import Rgb8, compute_hue, rgb_to_lab


class ToneGroup(str, enum.Enum):
    LIGHT = "Light"
    MEDIUM = "Medium"
    DARK = "Dark"
    UNDETERMINED = "Undetermined"

    def __str__(self) -> str:
        return self.value


CLASSIFIED_GROUPS = (ToneGroup.LIGHT, ToneGroup.MEDIUM, ToneGroup.DARK)
ALL_GROUPS = CLASSIFIED_GROUPS + (ToneGroup.UNDETERMINED,)


@dataclass(frozen=True)
class ItaThresholds:
    light_min_deg: float = 55.0
    dark_max_deg: float = 30.0

    def __post_init__(self):
        if not self.dark_max_deg < self.light_min_deg:
            raise ValueError("ITA thresholds need dark_max_deg < light_min_deg")


@dataclass(frozen=True)
class LightnessThresholds:
    light_min: float = 67.0
    dark_max: float = 37.0

    def __post_init__(self):
        if not self.dark_max < self.light_min:
            raise ValueError("lightness thresholds need dark_max < light_min")


@dataclass(frozen=True)
class BrownOverrideRule:
    r_range: tuple[int, int] = (100, 170)
    g_range: tuple[int, int] = (60, 110)
    b_range: tuple[int, int] = (40, 85)
    rg_diff_max: int = 30
    gb_diff_max: int = 25
    hue_range_deg: tuple[float, float] = (20.0, 50.0)
    enabled: bool = True

    def __post_init__(self):
        for name in ("r_range", "g_range", "b_range", "hue_range_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} is empty: {lo} > {hi}")
            object.__setattr__(self, name, (lo, hi))
        lo, hi = self.hue_range_deg
        if lo < 0 or hi >= 360:
            raise ValueError("hue_range_deg must lie within [0, 360)")


def _classify(value: float, dark_max: float, light_min: float) -> ToneGroup:
    if value > light_min:
        return ToneGroup.LIGHT
    if value < dark_max:
        return ToneGroup.DARK
    return ToneGroup.MEDIUM


def classify_ita(ita_deg: float | None, t: ItaThresholds = ItaThresholds()) -> ToneGroup:
    """Light above ``light_min_deg``, Dark below ``dark_max_deg``, both
    boundaries inclusive in Medium. An undefined angle is Undetermined."""
    if ita_deg is None:
        return ToneGroup.UNDETERMINED
    return _classify(ita_deg, t.dark_max_deg, t.light_min_deg)


def classify_lightness(
    l_star: float, t: LightnessThresholds = LightnessThresholds()
) -> ToneGroup:
    return _classify(l_star, t.dark_max, t.light_min)


def brown_override_applies(
    c: Rgb8, hue_deg: float | None, rule: BrownOverrideRule = BrownOverrideRule()
) -> bool:
    """True iff every clause of the brown-tone rule holds for ``c``.

    Clauses: channel boxes, strict R > G > B, R - G and G - B below their
    caps, and hue inside the band. An undefined hue never qualifies.
    """
    r, g, b = c
    if not (
        rule.r_range[0] <= r <= rule.r_range[1]
        and rule.g_range[0] <= g <= rule.g_range[1]
        and rule.b_range[0] <= b <= rule.b_range[1]
    ):
        return False
    if not r > g > b:
        return False
    if not (r - g < rule.rg_diff_max and g - b < rule.gb_diff_max):
        return False
    return hue_deg is not None and rule.hue_range_deg[0] <= hue_deg <= rule.hue_range_deg[1]


@dataclass(frozen=True)
class HlResult:
    group: ToneGroup
    lightness_group: ToneGroup
    override_fired: bool


def classify_hl_detailed(
    mean: Rgb8,
    thresholds: LightnessThresholds = LightnessThresholds(),
    rule: BrownOverrideRule = BrownOverrideRule(),
) -> HlResult:
    lab = rgb_to_lab(mean)
    by_lightness = classify_lightness(lab.l_star, thresholds)
    fired = rule.enabled and brown_override_applies(mean, compute_hue(lab), rule)
    return HlResult(ToneGroup.DARK if fired else by_lightness, by_lightness, fired)


def classify_hl(
    mean: Rgb8,
    thresholds: LightnessThresholds = LightnessThresholds(),
    rule: BrownOverrideRule = BrownOverrideRule(),
) -> ToneGroup:
    """Lightness group of ``mean``, forced to Dark when the brown override fires."""
    return classify_hl_detailed(mean, thresholds, rule).group


@dataclass
class TaxonomyComparison:
    """Contingency counts, ITA groups as rows and H*-L* groups as columns."""

    counts: dict[ToneGroup, dict[ToneGroup, int]] = field(
        default_factory=lambda: {r: {c: 0 for c in ALL_GROUPS} for r in ALL_GROUPS}
    )

    @property
    def total(self) -> int:
        return sum(sum(row.values()) for row in self.counts.values())

    @property
    def agreement_rate(self) -> float | None:
        """Share of pairs agreeing on Light, Medium or Dark; None if empty."""
        if self.total == 0:
            return None
        agree = sum(self.counts[g][g] for g in CLASSIFIED_GROUPS)
        return agree / self.total

    def add(self, ita: ToneGroup, hl: ToneGroup) -> None:
        self.counts[ToneGroup(ita)][ToneGroup(hl)] += 1

    def merge(self, other: "TaxonomyComparison") -> "TaxonomyComparison":
        out = TaxonomyComparison()
        for r in ALL_GROUPS:
            for c in ALL_GROUPS:
                out.counts[r][c] = self.counts[r][c] + other.counts[r][c]
        return out

    def to_dict(self) -> dict:
        return {
            "counts": {
                r.value: {c.value: n for c, n in row.items()}
                for r, row in self.counts.items()
            },
            "total": self.total,
            "agreement_rate": self.agreement_rate,
        }


def compare_taxonomies(records: Iterable[tuple[ToneGroup, ToneGroup]]) -> TaxonomyComparison:
    cmp = TaxonomyComparison()
    for ita, hl in records:
        cmp.add(ita, hl)
    return cmp
