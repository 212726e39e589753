"""Aggregation of per-feature attributions into feature-group summaries.

Attribution vectors are hard to narrate slot by slot, so they are collapsed
onto the nine feature groups of the vector layout.  Each group gets the sum
of its slots' contributions plus a share of the total absolute attribution,
which drives the impact wording used downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

from .featurize import GROUP_LAYOUT
from .treeshap import Attribution

# Reader-facing names for the layout groups, used verbatim in generated text.
DISPLAY_NAMES = {
    "ByteHistogram": "byte frequency distribution",
    "ByteEntropyHistogram": "entropy and packing indicators",
    "StringAnalysis": "embedded string patterns",
    "GeneralFileInfo": "file size indicators",
    "HeaderAnalysis": "PE header structure",
    "SectionAnalysis": "section characteristics",
    "ImportAnalysis": "import patterns",
    "ExportAnalysis": "exported function patterns",
    "DataDirectories": "data directory structure",
}

HIGH_IMPACT_SHARE = 0.30
MODERATE_IMPACT_SHARE = 0.10


def classify_impact(abs_share: float) -> str:
    """Impact label for a group's share of total absolute attribution."""
    if abs_share >= HIGH_IMPACT_SHARE:
        return "high"
    if abs_share >= MODERATE_IMPACT_SHARE:
        return "moderate"
    return "low"


@dataclass(frozen=True)
class GroupShare:
    """One feature group's aggregate contribution to a sample's margin."""

    name: str
    display_name: str
    value: float
    abs_share: float

    @property
    def impact(self) -> str:
        return classify_impact(self.abs_share)

    @property
    def direction(self) -> str:
        """Which verdict this group's contribution pushes toward."""
        if self.value > 0:
            return "malicious"
        if self.value < 0:
            return "benign"
        return "neither"


def aggregate(attribution: Attribution) -> list[GroupShare]:
    """Collapse an attribution vector onto layout groups, in layout order."""
    sums = []
    for group in GROUP_LAYOUT:
        sums.append(float(attribution.values[group.offset : group.end].sum()))
    total = sum(abs(v) for v in sums)
    shares = []
    for group, value in zip(GROUP_LAYOUT, sums):
        abs_share = abs(value) / total if total > 0 else 0.0
        shares.append(
            GroupShare(
                name=group.name,
                display_name=DISPLAY_NAMES[group.name],
                value=value,
                abs_share=abs_share,
            )
        )
    return shares


def top_k(shares: list[GroupShare], k: int = 5) -> list[GroupShare]:
    """The k groups with the largest absolute contribution.

    Sorting is stable, so exact ties keep layout order.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    return sorted(shares, key=lambda s: -abs(s.value))[:k]
