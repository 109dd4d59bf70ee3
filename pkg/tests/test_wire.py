import json
import subprocess
import sys

import numpy as np
import pytest

from sevtrain.classifier import TrainConfig, fit, predict_logits
from sevtrain.errors import BackendError, ConfigError
from sevtrain.features import FeatureConfig
from sevtrain.selftrain import SelectionConfig, run_self_training
from sevtrain.synth import SynthConfig, make_corpus
from sevtrain.wire import (
    ExternalSession,
    NativeSession,
    parse_backend,
    open_session,
)
from sevtrain.corpus import save_dataset

SERVE = [sys.executable, "-m", "sevtrain.wireserve"]
FAST = TrainConfig(epochs=2)
SMALL = FeatureConfig(dim=2**12)


def _corpus():
    return make_corpus(SynthConfig(n_labeled=40, n_dev=10, n_unlabeled=60, seed=0))


class TestParseBackend:
    def test_native(self):
        assert parse_backend("native") is None

    def test_exec(self):
        assert parse_backend("exec:python3 -m mod --flag x") == [
            "python3",
            "-m",
            "mod",
            "--flag",
            "x",
        ]

    def test_exec_quoting(self):
        assert parse_backend("exec:prog 'a b'") == ["prog", "a b"]

    def test_rejects_unknown(self):
        with pytest.raises(ConfigError):
            parse_backend("gpu")
        with pytest.raises(ConfigError):
            parse_backend("exec:")


class TestRawProtocol:
    """Drive the reference server over raw pipes, no client library."""

    def _talk(self, messages):
        proc = subprocess.Popen(
            SERVE, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        replies = []
        try:
            for msg in messages:
                proc.stdin.write(json.dumps(msg) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
                replies.append(json.loads(line) if line else None)
        finally:
            proc.stdin.close()
            proc.wait(timeout=10)
        return replies, proc.returncode

    def test_hello_fit_predict_shutdown(self, tmp_path):
        c = _corpus()
        train_path = tmp_path / "train.jsonl"
        save_dataset(c.train, train_path, "jsonl")
        model_dir = tmp_path / "model"
        replies, code = self._talk(
            [
                {"cmd": "hello"},
                {
                    "cmd": "fit",
                    "train_path": str(train_path),
                    "config": FAST.to_wire(),
                    "model_dir": str(model_dir),
                },
                {"cmd": "predict", "texts": c.dev.texts()[:4]},
                {"cmd": "shutdown"},
            ]
        )
        assert replies[0] == {"ok": True, "proto": 1}
        assert replies[1] == {"ok": True}
        assert replies[2]["ok"] is True
        logits = replies[2]["logits"]
        assert len(logits) == 4
        assert all(len(row) == 3 for row in logits)
        assert replies[3] == {"ok": True}
        assert code == 0
        assert model_dir.is_dir()

    def test_unknown_command_is_an_error_not_a_crash(self):
        replies, code = self._talk([{"cmd": "explode"}, {"cmd": "shutdown"}])
        assert replies[0]["ok"] is False
        assert "explode" in replies[0]["error"]
        assert replies[1] == {"ok": True}
        assert code == 0

    def test_fit_error_keeps_serving(self, tmp_path):
        replies, code = self._talk(
            [
                {
                    "cmd": "fit",
                    "train_path": str(tmp_path / "missing.jsonl"),
                    "config": {},
                    "model_dir": str(tmp_path / "m"),
                },
                {"cmd": "predict", "texts": ["still alive"]},
                {"cmd": "shutdown"},
            ]
        )
        assert replies[0]["ok"] is False
        assert "missing.jsonl" in replies[0]["error"]
        assert replies[1]["ok"] is True
        assert code == 0

    def test_predict_before_fit_returns_zeros(self):
        replies, _ = self._talk(
            [{"cmd": "predict", "texts": ["a", "b"]}, {"cmd": "shutdown"}]
        )
        assert replies[0]["logits"] == [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]

    def test_malformed_json_is_an_error(self):
        proc = subprocess.Popen(
            SERVE, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True
        )
        proc.stdin.write("this is not json\n")
        proc.stdin.flush()
        reply = json.loads(proc.stdout.readline())
        assert reply["ok"] is False
        proc.stdin.close()
        proc.wait(timeout=10)


class TestExternalSession:
    def test_matches_native_exactly(self, tmp_path):
        c = _corpus()
        train_path = tmp_path / "train.jsonl"
        save_dataset(c.train, train_path, "jsonl")
        texts = c.dev.texts()

        native = fit(c.train, FAST, feature_config=FeatureConfig())
        want = predict_logits(native, texts)

        with ExternalSession(SERVE) as session:
            session.fit(train_path, FAST, tmp_path / "model")
            got = session.predict(texts)
        # logits cross the wire as JSON floats, which round-trip exactly
        assert np.array_equal(got, want)

    def test_load_via_zero_epoch_fit(self, tmp_path):
        c = _corpus()
        train_path = tmp_path / "train.jsonl"
        save_dataset(c.train, train_path, "jsonl")
        with ExternalSession(SERVE) as session:
            session.fit(train_path, FAST, tmp_path / "model")
            first = session.predict(c.dev.texts())
        with ExternalSession(SERVE) as session:
            session.load(
                tmp_path / "model",
                train_path=train_path,
                scratch_dir=tmp_path / "scratch",
            )
            second = session.predict(c.dev.texts())
        assert np.array_equal(first, second)

    def test_backend_crash_raises_backend_error(self):
        with pytest.raises(BackendError):
            ExternalSession([sys.executable, "-c", "import sys; sys.exit(1)"])

    def test_backend_garbage_raises_backend_error(self):
        with pytest.raises(BackendError, match="malformed"):
            ExternalSession(
                [sys.executable, "-c", "print('garbage'); import time; time.sleep(5)"]
            )

    def test_backend_error_reply_raises(self, tmp_path):
        with ExternalSession(SERVE) as session:
            with pytest.raises(BackendError, match="missing.jsonl"):
                session.fit(
                    tmp_path / "missing.jsonl", FAST, tmp_path / "m"
                )

    def test_open_session_dispatch(self):
        with open_session(None, SMALL) as session:
            assert isinstance(session, NativeSession)
        with open_session(SERVE) as session:
            assert isinstance(session, ExternalSession)


class TestPipelineOverWire:
    def test_external_backend_reproduces_native_artifacts(self, tmp_path):
        c = _corpus()
        common = dict(
            train_cfg=FAST,
            sel_cfg=SelectionConfig(k_per_class=15),
            seed=3,
        )
        native_run = run_self_training(
            c.train, c.unlabeled, run_dir=tmp_path / "native", **common
        )
        wire_run = run_self_training(
            c.train,
            c.unlabeled,
            run_dir=tmp_path / "wire",
            backend=SERVE,
            **common,
        )
        assert (
            (native_run.run_dir / "pseudo.jsonl").read_bytes()
            == (wire_run.run_dir / "pseudo.jsonl").read_bytes()
        )
        # native writes one model file; the wire server writes a directory
        native_final = (tmp_path / "native" / "final.model").read_bytes()
        wire_final = (tmp_path / "wire" / "final.model" / "model.bin").read_bytes()
        assert native_final == wire_final
