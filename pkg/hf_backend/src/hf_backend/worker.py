"""Serve the transformer classifier over the line-delimited JSON protocol.

Run with ``python -m hf_backend`` (or the installed ``hf-backend`` script),
usually as a child process of the sevtrain CLI via
``--backend "exec:hf-backend --model <name-or-path>"``. The parent drives
the worker over stdin/stdout, one JSON request per line, one request in
flight at a time: hello, fit, predict, shutdown.

Errors never crash the loop; every failed request gets a
{"ok": false, "error": ...} line and the worker keeps serving.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional, Sequence, TextIO

from .model import Runtime

PROTOCOL_VERSION = 1
DEFAULT_MODEL = "mental/mental-roberta-base"


def _handle_fit(msg: dict, runtime: Runtime) -> dict:
    train_path = msg.get("train_path")
    model_dir = msg.get("model_dir")
    if not isinstance(train_path, str) or not isinstance(model_dir, str):
        return {"ok": False, "error": "fit needs string train_path and model_dir"}
    config = msg.get("config") or {}
    if not isinstance(config, dict):
        return {"ok": False, "error": "fit config must be an object"}
    runtime.fit(train_path, config, model_dir)
    return {"ok": True}


def _handle_predict(msg: dict, runtime: Runtime) -> dict:
    texts = msg.get("texts")
    if not isinstance(texts, list) or any(not isinstance(t, str) for t in texts):
        return {"ok": False, "error": "predict needs a list of strings"}
    return {"ok": True, "logits": runtime.predict(texts)}


def serve(
    runtime: Runtime,
    stdin: TextIO = sys.stdin,
    stdout: TextIO = sys.stdout,
) -> None:
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
                resp = _handle_fit(msg, runtime)
            elif cmd == "predict":
                resp = _handle_predict(msg, runtime)
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


def _quiet_libraries() -> None:
    # stdout carries the protocol; keep stderr free of progress bars too
    os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")
    from transformers.utils import logging as hf_logging

    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="hf-backend",
        description="transformer classification backend speaking the JSONL wire protocol",
    )
    parser.add_argument(
        "--model",
        default=DEFAULT_MODEL,
        help=f"checkpoint name or path new fits start from (default: {DEFAULT_MODEL})",
    )
    parser.add_argument(
        "--device",
        default="auto",
        help="auto, cpu, cuda, or any torch device string (default: auto)",
    )
    args = parser.parse_args(argv)
    _quiet_libraries()
    serve(Runtime(args.model, device=args.device))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
