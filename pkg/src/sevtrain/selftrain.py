"""Self-training orchestration: teacher, pseudo-label harvest, student, finetune.

One run seed is expanded into per-stage seeds (teacher, student, finetune)
via BLAKE2b of "<seed>:<role>", so every source of randomness is replayable
from the manifest. Run directories are laid out as:

    run/<name>/
        manifest.json        configs, seeds, digests, per-class counts
        timings.json         wall-clock per stage (not covered by the
                             byte-identity guarantee; everything else is)
        inputs/train.jsonl   materialized cleaned labeled training data
        inputs/unlabeled.jsonl
        teacher.model
        logits.jsonl         cached teacher logits on the unlabeled data
        pseudo.jsonl         harvested samples with scores and provenance
        pseudo_train.jsonl   the hard-labeled student training set
        student.model
        final.model          student after finetuning on the clean data

With --rounds > 1, later rounds live in round<r>/ subdirectories and reuse
the previous round's final model as their teacher.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .classifier import TrainConfig, softmax
from .corpus import (
    LABELS,
    Dataset,
    DatasetKind,
    Post,
    SeverityLabel,
    load_dataset,
    save_dataset,
)
from .errors import ConfigError, DataError, SevTrainError
from .features import FeatureConfig
from .ioutil import read_json, write_json
from .wire import NATIVE_BACKEND, open_session

MANIFEST_NAME = "manifest.json"
TIMINGS_NAME = "timings.json"
MANIFEST_FORMAT_VERSION = 1


class RankingScore(Enum):
    """How pseudo-label candidates are ranked within their argmax class."""

    RAW_LOGIT = "raw_logit"
    PROBABILITY = "probability"
    MARGIN = "margin"  # top logit minus runner-up logit


@dataclass(frozen=True)
class SelectionConfig:
    k_per_class: int = 30_000
    ranking_score: RankingScore = RankingScore.RAW_LOGIT

    def __post_init__(self) -> None:
        if self.k_per_class < 1:
            raise ConfigError("k_per_class must be >= 1")

    def to_json(self) -> dict:
        return {
            "k_per_class": self.k_per_class,
            "ranking_score": self.ranking_score.value,
        }


@dataclass(frozen=True)
class PseudoLabeledSample:
    post: Post
    pseudo_label: SeverityLabel
    score: float
    teacher_probability: float


@dataclass
class RunPaths:
    """Locations of the artifacts of one self-training round."""

    run_dir: Path
    round_dir: Path

    @property
    def manifest(self) -> Path:
        return self.run_dir / MANIFEST_NAME

    @property
    def timings(self) -> Path:
        return self.run_dir / TIMINGS_NAME

    @property
    def train_input(self) -> Path:
        return self.run_dir / "inputs" / "train.jsonl"

    @property
    def unlabeled_input(self) -> Path:
        return self.run_dir / "inputs" / "unlabeled.jsonl"

    @property
    def teacher(self) -> Path:
        return self.round_dir / "teacher.model"

    @property
    def logits(self) -> Path:
        return self.round_dir / "logits.jsonl"

    @property
    def pseudo(self) -> Path:
        return self.round_dir / "pseudo.jsonl"

    @property
    def pseudo_train(self) -> Path:
        return self.round_dir / "pseudo_train.jsonl"

    @property
    def student(self) -> Path:
        return self.round_dir / "student.model"

    @property
    def final(self) -> Path:
        return self.round_dir / "final.model"

    @property
    def scratch(self) -> Path:
        return self.round_dir / ".scratch.model"


def run_paths(run_dir: Union[str, Path], round_no: int = 1, rounds: int = 1) -> RunPaths:
    run_dir = Path(run_dir)
    round_dir = run_dir if rounds == 1 else run_dir / f"round{round_no}"
    return RunPaths(run_dir, round_dir)


@dataclass
class SelfTrainRun:
    run_dir: Path
    manifest: dict
    pseudo: list[PseudoLabeledSample]
    teacher_path: Path
    student_path: Path
    final_path: Path


def derive_seed(run_seed: int, role: str) -> int:
    """Stable child seed: low 63 bits of BLAKE2b("<run_seed>:<role>")."""
    digest = hashlib.blake2b(
        f"{run_seed}:{role}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") & (2**63 - 1)


def ranking_values(
    logits: np.ndarray, ranking: RankingScore
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per row: argmax class, ranking score, and argmax-class probability."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size and not np.all(np.isfinite(logits)):
        raise DataError("non-finite logits in pseudo-label selection")
    if logits.size == 0:
        empty = np.empty(0)
        return empty.astype(np.int64), empty, empty
    classes = np.argmax(logits, axis=1)
    rows = np.arange(len(logits))
    probs = softmax(logits)[rows, classes]
    if ranking is RankingScore.RAW_LOGIT:
        scores = logits[rows, classes]
    elif ranking is RankingScore.PROBABILITY:
        scores = probs
    else:
        part = np.sort(logits, axis=1)
        scores = part[:, -1] - part[:, -2]
    return classes, scores, probs


def select_top_k(
    logits: np.ndarray,
    posts: Sequence[Post],
    cfg: SelectionConfig,
) -> list[PseudoLabeledSample]:
    """Assign each post to its argmax class, keep the top k per class.

    Within a class, posts are ordered by ranking score descending with ties
    broken by ascending post id; output is the Low block, then Moderate,
    then Severe, each internally in that order.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) != len(posts):
        raise DataError(
            f"got {len(logits)} logit rows for {len(posts)} posts"
        )
    if len(posts) == 0:
        return []
    classes, scores, probs = ranking_values(logits, cfg.ranking_score)
    by_class: dict[int, list[int]] = {0: [], 1: [], 2: []}
    for i, c in enumerate(classes):
        by_class[int(c)].append(i)
    selected: list[PseudoLabeledSample] = []
    for label in LABELS:
        members = by_class[label.value]
        members.sort(key=lambda i: (-scores[i], posts[i].id))
        for i in members[: cfg.k_per_class]:
            selected.append(
                PseudoLabeledSample(
                    post=posts[i],
                    pseudo_label=label,
                    score=float(scores[i]),
                    teacher_probability=float(probs[i]),
                )
            )
    return selected


def build_pseudo_dataset(samples: Sequence[PseudoLabeledSample]) -> Dataset:
    """Hard-labeled dataset from selected samples; provenance carries through."""
    posts = tuple(
        replace(sample.post, label=sample.pseudo_label) for sample in samples
    )
    return Dataset(posts, DatasetKind.LABELED)


def selection_counts(samples: Sequence[PseudoLabeledSample]) -> dict[str, int]:
    counts = {label.to_string(): 0 for label in LABELS}
    for sample in samples:
        counts[sample.pseudo_label.to_string()] += 1
    return counts


def save_pseudo_samples(
    samples: Sequence[PseudoLabeledSample], path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for sample in samples:
            row: dict = {
                "id": sample.post.id,
                "text": sample.post.text,
                "pseudo_label": sample.pseudo_label.to_string(),
                "score": sample.score,
                "teacher_probability": sample.teacher_probability,
            }
            if sample.post.subreddit is not None:
                row["subreddit"] = sample.post.subreddit
            handle.write(json.dumps(row, ensure_ascii=False, separators=(",", ":")))
            handle.write("\n")


def load_pseudo_samples(path: Union[str, Path]) -> list[PseudoLabeledSample]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"pseudo-label file not found: {path}")
    samples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            try:
                samples.append(
                    PseudoLabeledSample(
                        post=Post(
                            id=row["id"],
                            text=row["text"],
                            subreddit=row.get("subreddit"),
                        ),
                        pseudo_label=SeverityLabel.from_string(row["pseudo_label"]),
                        score=float(row["score"]),
                        teacher_probability=float(row["teacher_probability"]),
                    )
                )
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from None
    return samples


def save_logits(
    ids: Sequence[str], logits: np.ndarray, path: Union[str, Path]
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for post_id, row in zip(ids, logits):
            handle.write(
                json.dumps(
                    {"id": post_id, "logits": [float(x) for x in row]},
                    separators=(",", ":"),
                )
            )
            handle.write("\n")


def load_logits(path: Union[str, Path], expected_ids: Sequence[str]) -> np.ndarray:
    """Read a logits cache; the ids must match the unlabeled data exactly."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            rows.append((row["id"], row["logits"]))
    if [r[0] for r in rows] != list(expected_ids):
        raise DataError(f"{path}: cached logits do not match the unlabeled data")
    return np.array([r[1] for r in rows], dtype=np.float64).reshape(len(rows), 3)


def digest_path(path: Union[str, Path]) -> str:
    """SHA-256 of a file, or of a directory's (relpath, bytes) entries."""
    path = Path(path)
    digest = hashlib.sha256()
    if path.is_dir():
        for child in sorted(path.rglob("*")):
            if child.is_file():
                digest.update(str(child.relative_to(path)).encode("utf-8"))
                digest.update(b"\0")
                digest.update(child.read_bytes())
    else:
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _cfg_for_manifest(cfg: TrainConfig) -> dict:
    wire = cfg.to_wire()
    wire.pop("seed", None)  # per-stage seeds are derived; see derived_seeds
    return wire


def _round_roles(round_no: int) -> dict[str, str]:
    prefix = "" if round_no == 1 else f"round{round_no}:"
    return {stage: f"{prefix}{stage}" for stage in ("teacher", "student", "finetune")}


def run_self_training(
    labeled: Dataset,
    unlabeled: Dataset,
    train_cfg: TrainConfig,
    sel_cfg: SelectionConfig,
    seed: int,
    run_dir: Union[str, Path],
    *,
    backend: Optional[Sequence[str]] = None,
    finetune_cfg: Optional[TrainConfig] = None,
    feature_config: Optional[FeatureConfig] = None,
    rounds: int = 1,
    data_paths: Optional[dict[str, str]] = None,
) -> SelfTrainRun:
    """Run the full teacher -> pseudo-label -> student -> finetune pipeline.

    backend is None for the native classifier or an argv list for an
    external wire-protocol backend. Every stage's output is persisted under
    run_dir so stages can be rerun in isolation (see the CLI subcommands).
    """
    if len(labeled) == 0:
        raise DataError("labeled dataset is empty")
    if labeled.kind is not DatasetKind.LABELED:
        raise DataError("labeled dataset must have kind=labeled")
    if len(unlabeled) == 0:
        raise DataError("unlabeled dataset is empty")
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    run_dir = Path(run_dir)
    if (run_dir / MANIFEST_NAME).exists():
        raise ConfigError(
            f"{run_dir} already contains a run; choose a fresh output directory"
        )
    finetune_cfg = finetune_cfg if finetune_cfg is not None else train_cfg
    native = backend is None
    eff_fcfg = None
    if native:
        eff_fcfg = feature_config or FeatureConfig(
            max_tokens=train_cfg.max_input_length
        )

    paths0 = run_paths(run_dir, 1, rounds)
    paths0.run_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(labeled, paths0.train_input, "jsonl")
    save_dataset(unlabeled.without_labels(), paths0.unlabeled_input, "jsonl")

    timings: dict = {"rounds": []}
    derived: dict[str, int] = {}
    round_counts: list[dict[str, int]] = []
    last_pseudo: list[PseudoLabeledSample] = []

    with open_session(backend, eff_fcfg) as session:
        for round_no in range(1, rounds + 1):
            paths = run_paths(run_dir, round_no, rounds)
            paths.round_dir.mkdir(parents=True, exist_ok=True)
            roles = _round_roles(round_no)
            seeds = {
                stage: derive_seed(seed, role) for stage, role in roles.items()
            }
            derived.update({roles[stage]: s for stage, s in seeds.items()})
            stage_times: dict[str, float] = {}

            t0 = time.perf_counter()
            if round_no == 1:
                session.fit(
                    paths.train_input,
                    replace(train_cfg, seed=seeds["teacher"]),
                    paths.teacher,
                )
                teacher_ref = str(paths.teacher.relative_to(run_dir))
            else:
                # later rounds are taught by the previous round's final model,
                # which is still the session's current model
                prev = run_paths(run_dir, round_no - 1, rounds)
                teacher_ref = str(prev.final.relative_to(run_dir))
            stage_times["teacher"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            texts = unlabeled.texts()
            logits = session.predict(texts)
            save_logits([p.id for p in unlabeled.posts], logits, paths.logits)
            stage_times["predict"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            samples = select_top_k(logits, unlabeled.posts, sel_cfg)
            if not samples:
                raise SevTrainError("teacher produced no confident predictions")
            save_pseudo_samples(samples, paths.pseudo)
            pseudo_ds = build_pseudo_dataset(samples)
            save_dataset(pseudo_ds, paths.pseudo_train, "jsonl")
            round_counts.append(selection_counts(samples))
            last_pseudo = samples
            stage_times["select"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            session.fit(
                paths.pseudo_train,
                replace(train_cfg, seed=seeds["student"]),
                paths.student,
            )
            stage_times["student"] = time.perf_counter() - t0

            t0 = time.perf_counter()
            session.fit(
                paths.train_input,
                replace(finetune_cfg, seed=seeds["finetune"]),
                paths.final,
                init_model_dir=paths.student,
            )
            stage_times["finetune"] = time.perf_counter() - t0

            timings["rounds"].append(
                {"round": round_no, "teacher": teacher_ref, "stages": stage_times}
            )

    data_paths = data_paths or {}
    data_entry: dict = {
        "train": {
            "path": data_paths.get("train"),
            "digest": labeled.content_digest(),
            "n": len(labeled),
        },
        "unlabeled": {
            "path": data_paths.get("unlabeled"),
            "digest": unlabeled.without_labels().content_digest(),
            "n": len(unlabeled),
        },
    }
    for split in ("dev", "test"):
        if data_paths.get(split):
            data_entry[split] = {"path": data_paths[split]}

    final_paths = run_paths(run_dir, rounds, rounds)
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "run_name": run_dir.name,
        "backend": {"kind": NATIVE_BACKEND}
        if native
        else {"kind": "external", "argv": list(backend)},
        "seed": seed,
        "derived_seeds": derived,
        "rounds": rounds,
        "train_config": _cfg_for_manifest(train_cfg),
        "finetune_config": _cfg_for_manifest(finetune_cfg),
        "selection": sel_cfg.to_json(),
        "feature": eff_fcfg.to_json() if eff_fcfg is not None else None,
        "data": data_entry,
        "selection_counts": round_counts[0],
        "selection_counts_per_round": round_counts,
        "teacher_digest": digest_path(run_paths(run_dir, 1, rounds).teacher),
    }
    write_json(manifest, paths0.manifest)
    timings["total"] = sum(
        sum(r["stages"].values()) for r in timings["rounds"]
    )
    write_json(timings, paths0.timings)

    return SelfTrainRun(
        run_dir=run_dir,
        manifest=manifest,
        pseudo=last_pseudo,
        teacher_path=run_paths(run_dir, 1, rounds).teacher,
        student_path=final_paths.student,
        final_path=final_paths.final,
    )


def load_manifest(run_dir: Union[str, Path]) -> dict:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"{run_dir} is not a run directory (no {MANIFEST_NAME})")
    return read_json(path)


def manifest_backend(manifest: dict) -> Optional[list[str]]:
    entry = manifest.get("backend") or {}
    if entry.get("kind") == NATIVE_BACKEND:
        return None
    argv = entry.get("argv")
    if not argv:
        raise ConfigError("manifest has no backend argv to replay")
    return list(argv)


def manifest_train_config(manifest: dict, stage: str, round_no: int = 1) -> TrainConfig:
    """Rebuild the TrainConfig a stage ran with, derived seed included."""
    key = "finetune_config" if stage == "finetune" else "train_config"
    cfg = TrainConfig.from_wire(manifest[key])
    role = _round_roles(round_no)[stage]
    return replace(cfg, seed=manifest["derived_seeds"][role])


def manifest_feature_config(manifest: dict) -> Optional[FeatureConfig]:
    entry = manifest.get("feature")
    return FeatureConfig.from_json(entry) if entry else None
