import sys
from pathlib import Path

import pytest

# make oracles.py importable regardless of how pytest is invoked
sys.path.insert(0, str(Path(__file__).parent))

from sevtrain.corpus import Dataset, DatasetKind, Post, SeverityLabel


def make_labeled(rows) -> Dataset:
    """rows: iterable of (id, text, label_value) or (id, text, label_value, subreddit)."""
    posts = []
    for row in rows:
        sub = row[3] if len(row) > 3 else None
        posts.append(
            Post(id=row[0], text=row[1], label=SeverityLabel(row[2]), subreddit=sub)
        )
    return Dataset(tuple(posts), DatasetKind.LABELED)


def make_unlabeled(rows) -> Dataset:
    """rows: iterable of (id, text) or (id, text, subreddit)."""
    posts = []
    for row in rows:
        sub = row[2] if len(row) > 2 else None
        posts.append(Post(id=row[0], text=row[1], subreddit=sub))
    return Dataset(tuple(posts), DatasetKind.UNLABELED)


@pytest.fixture
def six_post_selection():
    """Posts and logits matching the documented selection walk-through:
    argmax classes [S,S,S,M,L,L], argmax logits [9,7,8,5,4,3]."""
    ids = ["p1", "p2", "p3", "p4", "p5", "p6"]
    logits = [
        [0.0, 0.0, 9.0],
        [0.0, 0.0, 7.0],
        [0.0, 0.0, 8.0],
        [0.0, 5.0, 0.0],
        [4.0, 0.0, 0.0],
        [3.0, 0.0, 0.0],
    ]
    posts = make_unlabeled([(i, f"text {i}") for i in ids]).posts
    return posts, logits
