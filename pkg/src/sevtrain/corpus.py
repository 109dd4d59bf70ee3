"""Corpus handling: the post/dataset data model, cleaning, dedup, and file IO.

Cleaning rules: newlines, tabs, carriage returns and all other whitespace
runs collapse to a single space, leading/trailing whitespace is stripped, and
every URL token is replaced with the literal placeholder ``httpurl``. A URL
token is any maximal non-whitespace run starting with ``http://``,
``https://`` or ``www.`` (case-insensitive). Duplicate detection is
byte-exact on cleaned text, case-sensitive.

Dataset files are UTF-8 only; invalid UTF-8 is a hard error.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Union

from .errors import DataError

URL_PLACEHOLDER = "httpurl"
_URL_PREFIXES = ("http://", "https://", "www.")

FORMATS = ("jsonl", "csv", "tsv")
_SUFFIX_FORMAT = {".jsonl": "jsonl", ".csv": "csv", ".tsv": "tsv"}
_CSV_COLUMNS = ("id", "text", "label", "subreddit")


class SeverityLabel(Enum):
    """Three-way severity class with the canonical integer encoding."""

    LOW = 0
    MODERATE = 1
    SEVERE = 2

    def to_string(self) -> str:
        return self.name.lower()

    @classmethod
    def from_string(cls, value: str) -> "SeverityLabel":
        try:
            return _LABEL_BY_NAME[value.strip().lower()]
        except (KeyError, AttributeError):
            allowed = ", ".join(sorted(_LABEL_BY_NAME))
            raise DataError(
                f"unknown label {value!r}; allowed labels: {allowed}"
            ) from None


_LABEL_BY_NAME = {label.name.lower(): label for label in SeverityLabel}

#: Labels in canonical encoding order (Low=0, Moderate=1, Severe=2).
LABELS = (SeverityLabel.LOW, SeverityLabel.MODERATE, SeverityLabel.SEVERE)


class DatasetKind(Enum):
    LABELED = "labeled"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Post:
    """One social-media text with optional gold label and provenance tag."""

    id: str
    text: str
    label: Optional[SeverityLabel] = None
    subreddit: Optional[str] = None


@dataclass(frozen=True)
class Dataset:
    """Ordered, immutable collection of posts with unique ids.

    kind=LABELED requires every post to carry a label; kind=UNLABELED
    requires that none does.
    """

    posts: tuple[Post, ...]
    kind: DatasetKind

    def __post_init__(self) -> None:
        object.__setattr__(self, "posts", tuple(self.posts))
        seen: set[str] = set()
        for post in self.posts:
            if not post.id:
                raise DataError("post with empty id")
            if post.id in seen:
                raise DataError(f"duplicate post id {post.id!r}")
            seen.add(post.id)
            if self.kind is DatasetKind.LABELED and post.label is None:
                raise DataError(
                    f"post {post.id!r} is missing a label in a labeled dataset"
                )
            if self.kind is DatasetKind.UNLABELED and post.label is not None:
                raise DataError(
                    f"post {post.id!r} carries a label in an unlabeled dataset"
                )

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self) -> Iterator[Post]:
        return iter(self.posts)

    def texts(self) -> list[str]:
        return [post.text for post in self.posts]

    def labels(self) -> list[SeverityLabel]:
        if self.kind is not DatasetKind.LABELED:
            raise DataError("labels() requires a labeled dataset")
        return [post.label for post in self.posts]  # type: ignore[misc]

    def without_labels(self) -> "Dataset":
        return Dataset(
            tuple(replace(post, label=None) for post in self.posts),
            DatasetKind.UNLABELED,
        )

    def content_digest(self) -> str:
        """SHA-256 over the canonical JSONL serialization of the posts."""
        digest = hashlib.sha256()
        for post in self.posts:
            digest.update(_post_json(post).encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


@dataclass
class CleaningReport:
    """Counts of posts dropped by each cleaning rule."""

    n_input: int = 0
    n_empty_dropped: int = 0
    n_dupes_dropped: int = 0
    n_cross_split_dropped: int = 0

    @property
    def n_surviving(self) -> int:
        return (
            self.n_input
            - self.n_empty_dropped
            - self.n_dupes_dropped
            - self.n_cross_split_dropped
        )

    def to_json(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_empty_dropped": self.n_empty_dropped,
            "n_dupes_dropped": self.n_dupes_dropped,
            "n_cross_split_dropped": self.n_cross_split_dropped,
            "n_surviving": self.n_surviving,
        }


def clean_text(raw: str) -> str:
    """Normalize one post text. Total and idempotent."""
    tokens = raw.split()
    return " ".join(
        URL_PLACEHOLDER if token.lower().startswith(_URL_PREFIXES) else token
        for token in tokens
    )


def clean_dataset(ds: Dataset) -> tuple[Dataset, CleaningReport]:
    """Apply clean_text to every post; posts that clean to empty are dropped."""
    survivors: list[Post] = []
    n_empty = 0
    for post in ds.posts:
        text = clean_text(post.text)
        if not text:
            n_empty += 1
            continue
        survivors.append(replace(post, text=text))
    report = CleaningReport(n_input=len(ds.posts), n_empty_dropped=n_empty)
    return Dataset(tuple(survivors), ds.kind), report


def dedup(ds: Dataset) -> tuple[Dataset, CleaningReport]:
    """Keep the first post (in dataset order) for each distinct text."""
    seen: set[str] = set()
    survivors: list[Post] = []
    n_dropped = 0
    for post in ds.posts:
        if post.text in seen:
            n_dropped += 1
            continue
        seen.add(post.text)
        survivors.append(post)
    report = CleaningReport(n_input=len(ds.posts), n_dupes_dropped=n_dropped)
    return Dataset(tuple(survivors), ds.kind), report


def drop_cross_split(train: Dataset, dev: Dataset) -> tuple[Dataset, CleaningReport]:
    """Drop train posts whose text also appears in dev. dev is never modified."""
    dev_texts = {post.text for post in dev.posts}
    survivors = [post for post in train.posts if post.text not in dev_texts]
    report = CleaningReport(
        n_input=len(train.posts),
        n_cross_split_dropped=len(train.posts) - len(survivors),
    )
    return Dataset(tuple(survivors), train.kind), report


def prepare(ds: Dataset, dev: Optional[Dataset] = None) -> tuple[Dataset, CleaningReport]:
    """Full cleaning pass: normalize texts, dedup, drop texts shared with dev.

    dev is cleaned internally so the overlap check compares like with like,
    but only the train-side dataset is modified.
    """
    cleaned, r_clean = clean_dataset(ds)
    deduped, r_dupes = dedup(cleaned)
    n_cross = 0
    if dev is not None:
        dev_cleaned, _ = clean_dataset(dev)
        deduped, r_cross = drop_cross_split(deduped, dev_cleaned)
        n_cross = r_cross.n_cross_split_dropped
    report = CleaningReport(
        n_input=len(ds.posts),
        n_empty_dropped=r_clean.n_empty_dropped,
        n_dupes_dropped=r_dupes.n_dupes_dropped,
        n_cross_split_dropped=n_cross,
    )
    return deduped, report


def _post_json(post: Post) -> str:
    row: dict = {"id": post.id, "text": post.text}
    if post.label is not None:
        row["label"] = post.label.to_string()
    if post.subreddit is not None:
        row["subreddit"] = post.subreddit
    return json.dumps(row, ensure_ascii=False, separators=(",", ":"))


def resolve_format(path: Union[str, Path], fmt: str = "auto") -> str:
    if fmt != "auto":
        if fmt not in FORMATS:
            raise DataError(f"unknown dataset format {fmt!r}; expected one of {FORMATS}")
        return fmt
    suffix = Path(path).suffix.lower()
    try:
        return _SUFFIX_FORMAT[suffix]
    except KeyError:
        raise DataError(
            f"cannot infer dataset format from {path!r}; "
            f"pass an explicit format ({', '.join(FORMATS)})"
        ) from None


def _row_to_fields(path: Path, lineno: int, row: dict, from_csv: bool) -> Post:
    post_id = row.get("id")
    if post_id is None or post_id == "":
        raise DataError(f"{path}:{lineno}: missing or empty field 'id'")
    if not isinstance(post_id, str):
        raise DataError(f"{path}:{lineno}: field 'id' must be a string")
    text = row.get("text")
    if text is None:
        raise DataError(f"{path}:{lineno}: missing field 'text'")
    if not isinstance(text, str):
        raise DataError(f"{path}:{lineno}: field 'text' must be a string")
    raw_label = row.get("label")
    if from_csv and raw_label == "":
        raw_label = None  # empty CSV cell means absent
    label = None
    if raw_label is not None:
        if not isinstance(raw_label, str):
            raise DataError(f"{path}:{lineno}: field 'label' must be a string")
        try:
            label = SeverityLabel.from_string(raw_label)
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    subreddit = row.get("subreddit")
    if subreddit == "":
        subreddit = None
    if subreddit is not None and not isinstance(subreddit, str):
        raise DataError(f"{path}:{lineno}: field 'subreddit' must be a string")
    return Post(id=post_id, text=text, label=label, subreddit=subreddit)


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from None
            if not isinstance(row, dict):
                raise DataError(f"{path}:{lineno}: row is not a JSON object")
            yield lineno, row


def _iter_delimited(path: Path, delimiter: str) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None:
            raise DataError(f"{path}: missing header row")
        for column in ("id", "text"):
            if column not in reader.fieldnames:
                raise DataError(f"{path}: header is missing required column {column!r}")
        for row in reader:
            if row.get(None):
                raise DataError(
                    f"{path}:{reader.line_num}: row has more fields than the header"
                )
            yield reader.line_num, {k: v for k, v in row.items() if k is not None}


def load_dataset(
    path: Union[str, Path],
    fmt: str = "auto",
    kind: Union[DatasetKind, str] = "auto",
) -> Dataset:
    """Load a dataset file.

    kind may be a DatasetKind, "labeled", "unlabeled", or "auto" (infer:
    a file where every row has a label is labeled, one where none does is
    unlabeled, anything mixed is an error).
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    fmt = resolve_format(path, fmt)
    if isinstance(kind, str) and kind != "auto":
        kind = DatasetKind(kind)

    if fmt == "jsonl":
        rows = _iter_jsonl(path)
        from_csv = False
    else:
        rows = _iter_delimited(path, "," if fmt == "csv" else "\t")
        from_csv = True

    posts: list[Post] = []
    seen_ids: dict[str, int] = {}
    try:
        for lineno, row in rows:
            post = _row_to_fields(path, lineno, row, from_csv)
            if post.id in seen_ids:
                raise DataError(
                    f"{path}:{lineno}: duplicate id {post.id!r} "
                    f"(first seen at line {seen_ids[post.id]})"
                )
            seen_ids[post.id] = lineno
            if kind is DatasetKind.LABELED and post.label is None:
                raise DataError(f"{path}:{lineno}: missing label in labeled dataset")
            if kind is DatasetKind.UNLABELED and post.label is not None:
                raise DataError(f"{path}:{lineno}: unexpected label in unlabeled dataset")
            posts.append(post)
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: invalid UTF-8: {exc}") from None

    if kind == "auto":
        n_labeled = sum(1 for post in posts if post.label is not None)
        if n_labeled == len(posts):
            kind = DatasetKind.LABELED
        elif n_labeled == 0:
            kind = DatasetKind.UNLABELED
        else:
            raise DataError(
                f"{path}: mixed rows ({n_labeled} labeled, "
                f"{len(posts) - n_labeled} unlabeled); pass an explicit kind"
            )
    return Dataset(tuple(posts), kind)


def save_dataset(ds: Dataset, path: Union[str, Path], fmt: str = "auto") -> None:
    """Write a dataset; save/load round-trips to an equal dataset."""
    path = Path(path)
    fmt = resolve_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as handle:
            for post in ds.posts:
                handle.write(_post_json(post))
                handle.write("\n")
        return
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, delimiter="," if fmt == "csv" else "\t")
        writer.writerow(_CSV_COLUMNS)
        for post in ds.posts:
            writer.writerow(
                [
                    post.id,
                    post.text,
                    post.label.to_string() if post.label is not None else "",
                    post.subreddit if post.subreddit is not None else "",
                ]
            )
