"""Transformer classification runtime: load, finetune, predict.

Wraps a Hugging Face sequence-classification model behind the three
operations the wire worker needs. Class order is fixed (low, moderate,
severe) and logit index i always means class i; the parent pipeline
relies on that ordering, so it is part of the protocol, not a styling
choice.
"""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Optional, Sequence, Union

import torch
from transformers import AutoModelForSequenceClassification, AutoTokenizer

LABELS = ("low", "moderate", "severe")
N_CLASSES = len(LABELS)

# fit() falls back to these when the request config omits a key
FIT_DEFAULTS = {
    "optimizer": "adam",
    "learning_rate": 1e-5,
    "max_input_length": 256,
    "batch_size": 8,
    "epochs": 3,
    "l2_penalty": 0.0,
}

_OPTIMIZERS = ("adam", "sgd")
PREDICT_BATCH = 32


def resolve_device(spec: str) -> torch.device:
    if spec == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(spec)


def read_labeled_jsonl(path: Union[str, Path]) -> tuple[list[str], list[int]]:
    """Read texts and class indices from a JSONL training file."""
    label_to_index = {name: i for i, name in enumerate(LABELS)}
    texts: list[str] = []
    labels: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            text = row.get("text")
            label = row.get("label")
            if not isinstance(text, str):
                raise ValueError(f"{path}:{lineno}: missing text")
            if label not in label_to_index:
                raise ValueError(
                    f"{path}:{lineno}: unknown label {label!r} "
                    f"(expected one of: {', '.join(LABELS)})"
                )
            texts.append(text)
            labels.append(label_to_index[label])
    if not texts:
        raise ValueError(f"{path}: no labeled rows")
    return texts, labels


class Runtime:
    """One loaded model plus the fit and predict operations against it.

    ``model_ref`` names the checkpoint new fits start from (a hub id or a
    local directory). A fit whose config carries ``init_model_dir`` starts
    from that saved directory instead, which is how the parent warm-starts
    finetuning and how it loads an existing model (``epochs: 0``).
    """

    def __init__(self, model_ref: str, device: str = "auto") -> None:
        self.model_ref = model_ref
        self.device = resolve_device(device)
        self.model: Optional[torch.nn.Module] = None
        self.tokenizer = None
        self.max_input_length = int(FIT_DEFAULTS["max_input_length"])

    def fit(self, train_path: str, config: dict, model_dir: str) -> None:
        cfg = {**FIT_DEFAULTS, **config}
        optimizer_name = cfg["optimizer"]
        if optimizer_name not in _OPTIMIZERS:
            raise ValueError(
                f"unknown optimizer {optimizer_name!r} "
                f"(expected one of: {', '.join(_OPTIMIZERS)})"
            )
        epochs = int(cfg["epochs"])
        if epochs < 0:
            raise ValueError("epochs must be >= 0")
        batch_size = int(cfg["batch_size"])
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        max_input_length = int(cfg["max_input_length"])
        if max_input_length < 1:
            raise ValueError("max_input_length must be >= 1")
        seed = int(cfg.get("seed", 0))

        source = cfg.get("init_model_dir") or self.model_ref
        # seed before construction: a fresh classifier head draws from here
        torch.manual_seed(seed)
        random.seed(seed)
        tokenizer = AutoTokenizer.from_pretrained(source)
        model = AutoModelForSequenceClassification.from_pretrained(
            source,
            num_labels=N_CLASSES,
            id2label={i: name for i, name in enumerate(LABELS)},
            label2id={name: i for i, name in enumerate(LABELS)},
        )
        model.to(self.device)
        self.max_input_length = max_input_length

        if epochs > 0:
            texts, labels = read_labeled_jsonl(train_path)
            self._train(
                model,
                tokenizer,
                texts,
                labels,
                optimizer_name=optimizer_name,
                learning_rate=float(cfg["learning_rate"]),
                l2_penalty=float(cfg["l2_penalty"]),
                epochs=epochs,
                batch_size=batch_size,
                seed=seed,
            )
        model.eval()

        out = Path(model_dir)
        out.mkdir(parents=True, exist_ok=True)
        model.save_pretrained(out)
        tokenizer.save_pretrained(out)
        # swap in only after the save: a failed fit keeps the old model
        self.model = model
        self.tokenizer = tokenizer

    def _train(
        self,
        model,
        tokenizer,
        texts: list[str],
        labels: list[int],
        *,
        optimizer_name: str,
        learning_rate: float,
        l2_penalty: float,
        epochs: int,
        batch_size: int,
        seed: int,
    ) -> None:
        # weight_decay is the optimizer-coupled L2 penalty
        if optimizer_name == "adam":
            opt = torch.optim.Adam(
                model.parameters(), lr=learning_rate, weight_decay=l2_penalty
            )
        else:
            opt = torch.optim.SGD(
                model.parameters(), lr=learning_rate, weight_decay=l2_penalty
            )
        shuffle = torch.Generator().manual_seed(seed)
        label_tensor = torch.tensor(labels, dtype=torch.long)
        model.train()
        for _ in range(epochs):
            order = torch.randperm(len(texts), generator=shuffle)
            for start in range(0, len(texts), batch_size):
                idx = order[start : start + batch_size]
                batch = tokenizer(
                    [texts[i] for i in idx.tolist()],
                    truncation=True,
                    max_length=self.max_input_length,
                    padding=True,
                    return_tensors="pt",
                ).to(self.device)
                target = label_tensor[idx].to(self.device)
                opt.zero_grad()
                loss = model(**batch, labels=target).loss
                loss.backward()
                opt.step()

    def predict(self, texts: Sequence[str]) -> list[list[float]]:
        """One raw 3-logit row per text, in input order."""
        if self.model is None:
            # no fit yet: answer zeros rather than failing, like the
            # reference backend
            return [[0.0] * N_CLASSES for _ in texts]
        rows: list[list[float]] = []
        self.model.eval()
        with torch.no_grad():
            for start in range(0, len(texts), PREDICT_BATCH):
                chunk = list(texts[start : start + PREDICT_BATCH])
                batch = self.tokenizer(
                    chunk,
                    truncation=True,
                    max_length=self.max_input_length,
                    padding=True,
                    return_tensors="pt",
                ).to(self.device)
                logits = self.model(**batch).logits
                rows.extend([float(x) for x in row] for row in logits.cpu().tolist())
        return rows
