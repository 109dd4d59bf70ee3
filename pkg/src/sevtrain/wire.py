"""Classifier backends behind one session interface.

The external wire protocol is line-delimited JSON over a child process's
stdin/stdout, strictly serial (one request in flight):

    {"cmd": "hello"}                                -> {"ok": true, "proto": 1}
    {"cmd": "fit", "train_path": <jsonl>,
     "config": {...}, "model_dir": <path>}          -> {"ok": true}
    {"cmd": "predict", "texts": [...]}              -> {"ok": true,
                                                        "logits": [[f,f,f], ...]}
    {"cmd": "shutdown"}                             -> {"ok": true}, then exit

Any {"ok": false, "error": msg} response aborts the pipeline with the
backend's message. The fit config carries the training hyperparameters
(optimizer, learning_rate, max_input_length, batch_size, epochs, l2_penalty,
seed) plus an optional ``init_model_dir`` for warm starts (finetuning);
backends keep no state between fits other than the model directories they
write, so loading an existing model is expressed as a fit with epochs=0 and
init_model_dir set.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import classifier
from .classifier import LinearModel, TrainConfig
from .corpus import DatasetKind, load_dataset
from .errors import BackendError, ConfigError

PROTOCOL_VERSION = 1

#: Texts per predict request when talking to an external backend.
PREDICT_CHUNK = 2048

NATIVE_BACKEND = "native"
_EXEC_PREFIX = "exec:"


def parse_backend(spec: str) -> Optional[list[str]]:
    """Parse a --backend value: None for native, argv list for exec:<argv>."""
    if spec == NATIVE_BACKEND:
        return None
    if spec.startswith(_EXEC_PREFIX):
        import shlex

        argv = shlex.split(spec[len(_EXEC_PREFIX) :])
        if not argv:
            raise ConfigError("empty exec: backend command line")
        return argv
    raise ConfigError(
        f"unknown backend {spec!r}; expected 'native' or 'exec:<argv>'"
    )


class NativeSession:
    """In-process session around the native linear classifier.

    Mirrors the wire surface so the orchestrator has one code path: fit
    reads a JSONL file and writes a model file at model_dir.
    """

    kind = NATIVE_BACKEND

    def __init__(self, feature_config=None):
        self._feature_config = feature_config
        self._model: Optional[LinearModel] = None

    def fit(
        self,
        train_path: Union[str, Path],
        cfg: TrainConfig,
        model_dir: Union[str, Path],
        init_model_dir: Optional[Union[str, Path]] = None,
    ) -> None:
        ds = load_dataset(train_path, "jsonl", DatasetKind.LABELED)
        init = classifier.load_model(init_model_dir) if init_model_dir else None
        self._model = classifier.fit(
            ds, cfg, feature_config=self._feature_config, init=init
        )
        classifier.save_model(self._model, model_dir)

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        model = self._model or LinearModel.zeros(self._feature_config)
        return classifier.predict_logits(model, texts)

    def load(self, model_dir: Union[str, Path], **_: object) -> None:
        self._model = classifier.load_model(model_dir)

    def close(self) -> None:
        self._model = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ExternalSession:
    """Wire-protocol client driving a child-process backend."""

    kind = "external"

    def __init__(self, argv: Sequence[str]):
        self._argv = list(argv)
        try:
            self._proc = subprocess.Popen(
                self._argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=sys.stderr,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise BackendError(f"cannot launch backend {self._argv}: {exc}") from None
        resp = self._request({"cmd": "hello"})
        if resp.get("proto") != PROTOCOL_VERSION:
            self.close()
            raise BackendError(
                f"backend speaks protocol {resp.get('proto')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )

    def _request(self, msg: dict) -> dict:
        if self._proc.poll() is not None:
            raise BackendError(
                f"backend exited with code {self._proc.returncode} "
                "before the request could be sent"
            )
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"backend pipe closed: {exc}") from None
        line = self._proc.stdout.readline()
        if not line:
            code = self._proc.poll()
            raise BackendError(
                f"backend closed its stdout (exit code {code}) "
                f"while handling {msg.get('cmd')!r}"
            )
        try:
            resp = json.loads(line)
        except json.JSONDecodeError:
            raise BackendError(f"backend sent a malformed response: {line!r}") from None
        if not isinstance(resp, dict):
            raise BackendError(f"backend sent a non-object response: {resp!r}")
        if not resp.get("ok", False):
            raise BackendError(str(resp.get("error", f"backend error: {resp!r}")))
        return resp

    def fit(
        self,
        train_path: Union[str, Path],
        cfg: TrainConfig,
        model_dir: Union[str, Path],
        init_model_dir: Optional[Union[str, Path]] = None,
    ) -> None:
        config = cfg.to_wire()
        if init_model_dir is not None:
            config["init_model_dir"] = str(init_model_dir)
        self._request(
            {
                "cmd": "fit",
                "train_path": str(train_path),
                "config": config,
                "model_dir": str(model_dir),
            }
        )

    def predict(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        texts = list(texts)
        for start in range(0, len(texts), PREDICT_CHUNK):
            chunk = texts[start : start + PREDICT_CHUNK]
            resp = self._request({"cmd": "predict", "texts": chunk})
            logits = resp.get("logits")
            if not isinstance(logits, list) or len(logits) != len(chunk):
                raise BackendError(
                    f"backend returned {0 if not isinstance(logits, list) else len(logits)} "
                    f"logit rows for {len(chunk)} texts"
                )
            for row in logits:
                if not isinstance(row, list) or len(row) != classifier.N_CLASSES:
                    raise BackendError(f"backend returned a malformed logit row: {row!r}")
                rows.append([float(x) for x in row])
        out = np.array(rows, dtype=np.float64).reshape(len(texts), classifier.N_CLASSES)
        if not np.all(np.isfinite(out)):
            raise BackendError("backend returned non-finite logits")
        return out

    def load(
        self,
        model_dir: Union[str, Path],
        *,
        train_path: Optional[Union[str, Path]] = None,
        scratch_dir: Optional[Union[str, Path]] = None,
    ) -> None:
        """Make an existing model current via a zero-epoch warm-start fit."""
        if train_path is None or scratch_dir is None:
            raise BackendError(
                "loading an external model needs a train_path and a scratch_dir"
            )
        self.fit(train_path, TrainConfig(epochs=0), scratch_dir, model_dir)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(json.dumps({"cmd": "shutdown"}) + "\n")
                self._proc.stdin.flush()
                self._proc.stdout.readline()  # optional {"ok": true}
            except (BrokenPipeError, OSError):
                pass
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(backend: Optional[Sequence[str]], feature_config=None):
    """backend=None opens the native session, otherwise an external one."""
    if backend is None:
        return NativeSession(feature_config)
    return ExternalSession(backend)
