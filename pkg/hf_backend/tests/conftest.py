import json
import subprocess
import sys
from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertForSequenceClassification, BertTokenizerFast

WORKER = [sys.executable, "-m", "hf_backend"]

LABELS = ("low", "moderate", "severe")


@pytest.fixture(scope="session")
def stub_model(tmp_path_factory) -> Path:
    """Tiny randomly initialized encoder so tests run offline and fast."""
    d = tmp_path_factory.mktemp("stub-model")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    vocab += [f"low{i}" for i in range(8)]
    vocab += [f"mod{i}" for i in range(8)]
    vocab += [f"sev{i}" for i in range(8)]
    vocab += [f"word{i}" for i in range(16)]
    (d / "vocab.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(vocab_file=str(d / "vocab.txt"))
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
        num_labels=3,
    )
    torch.manual_seed(0)
    BertForSequenceClassification(config).save_pretrained(d)
    tokenizer.save_pretrained(d)
    return d


def write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture()
def tiny_corpus(tmp_path) -> dict[str, Path]:
    """Small labeled/dev/unlabeled files built from the stub vocabulary."""
    stems = {"low": "low", "moderate": "mod", "severe": "sev"}
    train = []
    for i in range(18):
        label = LABELS[i % 3]
        stem = stems[label]
        train.append(
            {
                "id": f"tr{i:03d}",
                "text": f"{stem}{i % 8} word{i % 16} {stem}{(i + 3) % 8}",
                "label": label,
            }
        )
    dev = []
    for i in range(9):
        label = LABELS[i % 3]
        stem = stems[label]
        dev.append(
            {
                "id": f"dv{i:03d}",
                "text": f"{stem}{(i * 3) % 8} word{i % 16}",
                "label": label,
            }
        )
    unlabeled = []
    for i in range(24):
        stem = stems[LABELS[i % 3]]
        unlabeled.append(
            {
                "id": f"ul{i:03d}",
                "text": f"word{(i * 5) % 16} {stem}{i % 8} word{(i * 7) % 16}",
                "subreddit": "depression" if i % 4 else "offmychest",
            }
        )
    paths = {
        "train": tmp_path / "train.jsonl",
        "dev": tmp_path / "dev.jsonl",
        "unlabeled": tmp_path / "unlabeled.jsonl",
    }
    write_jsonl(paths["train"], train)
    write_jsonl(paths["dev"], dev)
    write_jsonl(paths["unlabeled"], unlabeled)
    return paths


class Worker:
    """One child worker plus line-level request and response helpers."""

    def __init__(self, *argv: str) -> None:
        self.proc = subprocess.Popen(
            WORKER + list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )

    def send_line(self, line: str) -> dict:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        assert reply, "worker closed the pipe without replying"
        return json.loads(reply)

    def request(self, **msg) -> dict:
        return self.send_line(json.dumps(msg))

    def shutdown(self) -> int:
        assert self.request(cmd="shutdown") == {"ok": True}
        return self.proc.wait(timeout=30)

    def kill(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
            self.proc.wait()
