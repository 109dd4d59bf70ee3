"""Evaluation: per-class precision/recall/F1, macro-F1, multi-run aggregation.

Zero-division convention: a precision or recall whose denominator is 0 is
scored 0, and F1 with P = R = 0 is 0. The macro mean always divides by the
fixed three-class count, so classes absent from both gold and predictions
contribute 0. This convention changes scores on degenerate predictions;
it is the dominant one in shared-task scoring.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

from .corpus import LABELS, SeverityLabel
from .errors import ConfigError, DataError, SevTrainError


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts; rows are gold classes, columns are predicted classes."""

    counts: tuple[tuple[int, int, int], ...]

    def __getitem__(self, gold_pred: tuple[SeverityLabel, SeverityLabel]) -> int:
        gold, pred = gold_pred
        return self.counts[gold.value][pred.value]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def as_lists(self) -> list[list[int]]:
        return [list(row) for row in self.counts]


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class EvalReport:
    per_class: tuple[ClassScores, ClassScores, ClassScores]
    macro_f1: float
    n: int
    seed: Optional[int] = None

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "seed": self.seed,
            "macro_f1": self.macro_f1,
            "per_class": {
                label.to_string(): {
                    "precision": scores.precision,
                    "recall": scores.recall,
                    "f1": scores.f1,
                }
                for label, scores in zip(LABELS, self.per_class)
            },
        }


@dataclass(frozen=True)
class MultiRunReport:
    runs: tuple[EvalReport, ...]
    mean_macro_f1: float
    std_macro_f1: float  # population std (ddof=0)

    @classmethod
    def from_runs(cls, runs: Sequence[EvalReport]) -> "MultiRunReport":
        if not runs:
            raise DataError("MultiRunReport needs at least one run")
        scores = [run.macro_f1 for run in runs]
        mean = sum(scores) / len(scores)
        var = sum((s - mean) ** 2 for s in scores) / len(scores)
        return cls(tuple(runs), mean, math.sqrt(var))

    def to_json(self) -> dict:
        return {
            "mean_macro_f1": self.mean_macro_f1,
            "std_macro_f1": self.std_macro_f1,
            "runs": [run.to_json() for run in self.runs],
        }

    def to_csv(self) -> str:
        """One row per run, for spreadsheet use."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ["seed", "n", "macro_f1"]
        for label in LABELS:
            name = label.to_string()
            header += [f"precision_{name}", f"recall_{name}", f"f1_{name}"]
        writer.writerow(header)
        for run in self.runs:
            row: list = [run.seed, run.n, run.macro_f1]
            for scores in run.per_class:
                row += [scores.precision, scores.recall, scores.f1]
            writer.writerow(row)
        return buf.getvalue()


def confusion(
    gold: Sequence[SeverityLabel], pred: Sequence[SeverityLabel]
) -> ConfusionMatrix:
    if len(gold) != len(pred):
        raise DataError(
            f"gold and pred lengths differ ({len(gold)} vs {len(pred)})"
        )
    if not gold:
        raise DataError("confusion requires at least one sample")
    counts = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    for g, p in zip(gold, pred):
        counts[g.value][p.value] += 1
    return ConfusionMatrix(tuple(tuple(row) for row in counts))


def per_class_scores(cm: ConfusionMatrix) -> tuple[ClassScores, ...]:
    scores = []
    for c in range(3):
        tp = cm.counts[c][c]
        fp = sum(cm.counts[g][c] for g in range(3)) - tp
        fn = sum(cm.counts[c][p] for p in range(3)) - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        scores.append(ClassScores(precision, recall, f1))
    return tuple(scores)


def macro_f1(cm: ConfusionMatrix) -> float:
    """Unweighted mean of the three per-class F1 scores."""
    if cm.total <= 0:
        raise DataError("macro_f1 requires a non-empty confusion matrix")
    scores = per_class_scores(cm)
    return (scores[0].f1 + scores[1].f1 + scores[2].f1) / 3


def evaluate(
    gold: Sequence[SeverityLabel],
    pred: Sequence[SeverityLabel],
    seed: Optional[int] = None,
) -> EvalReport:
    cm = confusion(gold, pred)
    scores = per_class_scores(cm)
    return EvalReport(
        per_class=scores,  # type: ignore[arg-type]
        macro_f1=(scores[0].f1 + scores[1].f1 + scores[2].f1) / 3,
        n=cm.total,
        seed=seed,
    )


def evaluate_runs(
    run_one: Callable[[int], EvalReport], seeds: Sequence[int]
) -> MultiRunReport:
    """Execute run_one per seed and aggregate; any failure names its seed."""
    if not seeds:
        raise ConfigError("evaluate_runs needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds must be distinct, got {list(seeds)}")
    runs = []
    for seed in seeds:
        try:
            report = run_one(seed)
        except SevTrainError as exc:
            raise type(exc)(f"run with seed {seed} failed: {exc}") from exc
        except Exception as exc:
            raise SevTrainError(f"run with seed {seed} failed: {exc}") from exc
        if report.seed is None:
            report = replace(report, seed=seed)
        runs.append(report)
    return MultiRunReport.from_runs(runs)
