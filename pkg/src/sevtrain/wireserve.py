"""Serve the native linear classifier over the backend wire protocol.

Run with ``python -m sevtrain.wireserve``. This is the reference
implementation of the protocol documented in sevtrain.wire: it backs the
protocol conformance tests and doubles as a worked example for external
backend authors. model_dir is treated as a directory holding ``model.bin``.

Errors never crash the loop; every failed request gets a
{"ok": false, "error": ...} line.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional, TextIO

from . import classifier
from .classifier import LinearModel, TrainConfig
from .corpus import DatasetKind, load_dataset
from .wire import PROTOCOL_VERSION

MODEL_FILENAME = "model.bin"


def _handle_fit(msg: dict, state: dict) -> dict:
    train_path = msg.get("train_path")
    model_dir = msg.get("model_dir")
    if not isinstance(train_path, str) or not isinstance(model_dir, str):
        return {"ok": False, "error": "fit needs string train_path and model_dir"}
    config = msg.get("config") or {}
    if not isinstance(config, dict):
        return {"ok": False, "error": "fit config must be an object"}
    cfg = TrainConfig.from_wire(config)
    init = None
    init_dir = config.get("init_model_dir")
    if init_dir:
        init = classifier.load_model(Path(init_dir) / MODEL_FILENAME)
    ds = load_dataset(train_path, "jsonl", DatasetKind.LABELED)
    if cfg.epochs == 0 and init is not None:
        model = init  # pure load, no training pass
    else:
        model = classifier.fit(ds, cfg, init=init)
    out = Path(model_dir)
    out.mkdir(parents=True, exist_ok=True)
    classifier.save_model(model, out / MODEL_FILENAME)
    state["model"] = model
    return {"ok": True}


def _handle_predict(msg: dict, state: dict) -> dict:
    texts = msg.get("texts")
    if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
        return {"ok": False, "error": "predict needs a list of strings"}
    model: Optional[LinearModel] = state.get("model")
    if model is None:
        model = LinearModel.zeros()
    logits = classifier.predict_logits(model, texts)
    return {"ok": True, "logits": [[float(x) for x in row] for row in logits]}


def serve(stdin: TextIO = sys.stdin, stdout: TextIO = sys.stdout) -> None:
    state: dict = {"model": None}
    for line in stdin:
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("request is not a JSON object")
            cmd = msg.get("cmd")
            if cmd == "hello":
                resp = {"ok": True, "proto": PROTOCOL_VERSION}
            elif cmd == "fit":
                resp = _handle_fit(msg, state)
            elif cmd == "predict":
                resp = _handle_predict(msg, state)
            elif cmd == "shutdown":
                stdout.write(json.dumps({"ok": True}) + "\n")
                stdout.flush()
                return
            else:
                resp = {"ok": False, "error": f"unknown command {cmd!r}"}
        except Exception as exc:  # error framing: never crash without a response
            resp = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()


def main() -> None:
    serve()


if __name__ == "__main__":
    main()
