"""Synthetic corpora for tests and benchmarks.

Generates three-class text with a controllable signal-to-noise ratio: each
class owns a small vocabulary of marker words, mixed with shared filler.
Label noise is applied to the labeled training split only; dev and the
gold labels of the unlabeled pool stay clean so that measured deltas come
from the pipeline, not from a corrupted yardstick.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import LABELS, Dataset, DatasetKind, Post, SeverityLabel
from .errors import ConfigError

_SUBREDDITS = {
    SeverityLabel.LOW: ("calmcorner", "dailycheckin"),
    SeverityLabel.MODERATE: ("roughpatch", "copingtips"),
    SeverityLabel.SEVERE: ("darkdays", "crisistalk"),
}
_SHARED_SUBREDDIT = "offmychest"


@dataclass(frozen=True)
class SynthConfig:
    n_labeled: int = 300
    n_dev: int = 300
    n_unlabeled: int = 5000
    label_noise: float = 0.10
    class_word_frac: float = 0.35
    vocab_per_class: int = 30
    n_filler: int = 60
    min_len: int = 6
    max_len: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_labeled, self.n_dev, self.n_unlabeled) < 1:
            raise ConfigError("all split sizes must be >= 1")
        if not 0.0 <= self.label_noise < 1.0:
            raise ConfigError("label_noise must be in [0, 1)")
        if not 0.0 < self.class_word_frac <= 1.0:
            raise ConfigError("class_word_frac must be in (0, 1]")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ConfigError("need 1 <= min_len <= max_len")


@dataclass(frozen=True)
class SynthCorpus:
    train: Dataset
    dev: Dataset
    unlabeled: Dataset
    unlabeled_gold: Dataset  # same posts as unlabeled, with true labels


def _vocabulary(cfg: SynthConfig) -> tuple[dict[SeverityLabel, list[str]], list[str]]:
    class_words = {
        SeverityLabel.LOW: [f"low{i:02d}" for i in range(cfg.vocab_per_class)],
        SeverityLabel.MODERATE: [f"mod{i:02d}" for i in range(cfg.vocab_per_class)],
        SeverityLabel.SEVERE: [f"sev{i:02d}" for i in range(cfg.vocab_per_class)],
    }
    filler = [f"word{i:02d}" for i in range(cfg.n_filler)]
    return class_words, filler


def _make_text(
    rng: random.Random,
    label: SeverityLabel,
    class_words: dict[SeverityLabel, list[str]],
    filler: list[str],
    cfg: SynthConfig,
) -> str:
    length = rng.randint(cfg.min_len, cfg.max_len)
    words = []
    for _ in range(length):
        if rng.random() < cfg.class_word_frac:
            words.append(rng.choice(class_words[label]))
        else:
            words.append(rng.choice(filler))
    return " ".join(words)


def make_corpus(cfg: SynthConfig) -> SynthCorpus:
    rng = random.Random(cfg.seed)
    class_words, filler = _vocabulary(cfg)

    def draw_label() -> SeverityLabel:
        return LABELS[rng.randrange(3)]

    train_posts = []
    for i in range(cfg.n_labeled):
        true = draw_label()
        text = _make_text(rng, true, class_words, filler, cfg)
        observed = true
        if rng.random() < cfg.label_noise:
            observed = LABELS[(true.value + rng.randint(1, 2)) % 3]
        train_posts.append(Post(id=f"tr{i:05d}", text=text, label=observed))

    dev_posts = []
    for i in range(cfg.n_dev):
        true = draw_label()
        text = _make_text(rng, true, class_words, filler, cfg)
        dev_posts.append(Post(id=f"dv{i:05d}", text=text, label=true))

    gold_posts = []
    for i in range(cfg.n_unlabeled):
        true = draw_label()
        text = _make_text(rng, true, class_words, filler, cfg)
        subreddit = (
            _SHARED_SUBREDDIT
            if rng.random() < 0.25
            else rng.choice(_SUBREDDITS[true])
        )
        gold_posts.append(
            Post(id=f"ul{i:05d}", text=text, label=true, subreddit=subreddit)
        )

    gold = Dataset(tuple(gold_posts), DatasetKind.LABELED)
    return SynthCorpus(
        train=Dataset(tuple(train_posts), DatasetKind.LABELED),
        dev=Dataset(tuple(dev_posts), DatasetKind.LABELED),
        unlabeled=gold.without_labels(),
        unlabeled_gold=gold,
    )


def separable_corpus(n: int = 60, seed: int = 0) -> Dataset:
    """Small fully separable labeled set; a sanity check for trainers."""
    cfg = SynthConfig(
        n_labeled=n,
        n_dev=1,
        n_unlabeled=1,
        label_noise=0.0,
        class_word_frac=1.0,
        seed=seed,
    )
    return make_corpus(cfg).train
