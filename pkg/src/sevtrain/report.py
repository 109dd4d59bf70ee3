"""Descriptive statistics over pseudo-labeled harvests.

Answers the questions one asks of a fresh pseudo-label run: which
communities dominate the harvest, and how is each severity class spread
across them. Posts without a subreddit are bucketed as "unknown".
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

from .corpus import LABELS
from .errors import DataError
from .selftrain import PseudoLabeledSample

UNKNOWN_SUBREDDIT = "unknown"


@dataclass(frozen=True)
class DistributionReport:
    """Per-subreddit, per-class counts of a pseudo-labeled harvest.

    subreddits are ordered by total count descending, name ascending;
    table[i][c] is the count for subreddits[i] and class c.
    """

    n: int
    subreddits: tuple[str, ...]
    table: tuple[tuple[int, int, int], ...]

    @property
    def per_subreddit_totals(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.table)

    @property
    def per_class_totals(self) -> tuple[int, int, int]:
        return (
            sum(row[0] for row in self.table),
            sum(row[1] for row in self.table),
            sum(row[2] for row in self.table),
        )

    def top(self, n: int) -> tuple[str, ...]:
        return self.subreddits[:n]

    def top_concentration(self, n: int = 5) -> float:
        """Share of all posts that sit in the n most common subreddits."""
        if self.n == 0:
            return 0.0
        return sum(self.per_subreddit_totals[:n]) / self.n

    def class_share(self, subreddit: str, label_index: int) -> float:
        """Fraction of a class's posts that came from one subreddit."""
        class_total = self.per_class_totals[label_index]
        if class_total == 0:
            return 0.0
        i = self.subreddits.index(subreddit)
        return self.table[i][label_index] / class_total

    def to_json(self) -> dict:
        per_class = self.per_class_totals
        return {
            "n": self.n,
            "per_class_totals": {
                label.to_string(): per_class[label.value] for label in LABELS
            },
            "top5_concentration": self.top_concentration(5),
            "subreddits": [
                {
                    "subreddit": name,
                    "total": total,
                    "counts": {
                        label.to_string(): row[label.value] for label in LABELS
                    },
                }
                for name, total, row in zip(
                    self.subreddits, self.per_subreddit_totals, self.table
                )
            ],
        }


def distribution(samples: Sequence[PseudoLabeledSample]) -> DistributionReport:
    counts: dict[str, list[int]] = {}
    for sample in samples:
        name = sample.post.subreddit or UNKNOWN_SUBREDDIT
        row = counts.setdefault(name, [0, 0, 0])
        row[sample.pseudo_label.value] += 1
    ordered = sorted(counts.items(), key=lambda item: (-sum(item[1]), item[0]))
    return DistributionReport(
        n=len(samples),
        subreddits=tuple(name for name, _ in ordered),
        table=tuple(tuple(row) for _, row in ordered),
    )


def render_figure_data(
    report: DistributionReport, top_n: int = 5, path: Union[str, Path, None] = None
) -> str:
    """CSV behind the harvest-composition figure: the top_n subreddits get
    named rows, everything else is aggregated into "other".

    Columns: subreddit, label, count, class_share (of that label's posts),
    total_share (of the whole harvest).
    """
    if top_n < 1:
        raise DataError("top_n must be >= 1")
    named = report.top(top_n)
    per_class = report.per_class_totals
    out = io.StringIO()
    out.write("subreddit,label,count,class_share,total_share\r\n")

    def emit(name: str, row: Sequence[int]) -> None:
        for label in LABELS:
            count = row[label.value]
            class_share = count / per_class[label.value] if per_class[label.value] else 0.0
            total_share = count / report.n if report.n else 0.0
            out.write(
                f"{name},{label.to_string()},{count},"
                f"{class_share:.6f},{total_share:.6f}\r\n"
            )

    for name in named:
        i = report.subreddits.index(name)
        emit(name, report.table[i])
    other = [0, 0, 0]
    for i in range(len(named), len(report.subreddits)):
        for c in range(3):
            other[c] += report.table[i][c]
    emit("other", other)

    text = out.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="")
    return text
