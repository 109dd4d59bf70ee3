import random

import numpy as np
import pytest

from sevtrain.classifier import TrainConfig, load_model, predict_labels, predict_logits
from sevtrain.corpus import LABELS, DatasetKind, load_dataset
from sevtrain.errors import ConfigError, DataError
from sevtrain.features import FeatureConfig
from sevtrain.selftrain import (
    PseudoLabeledSample,
    RankingScore,
    SelectionConfig,
    build_pseudo_dataset,
    derive_seed,
    load_manifest,
    load_pseudo_samples,
    run_self_training,
    save_pseudo_samples,
    select_top_k,
)
from sevtrain.synth import SynthConfig, make_corpus

from conftest import make_unlabeled
from helpers import assert_selection_matches_oracle

FAST = dict(epochs=2, learning_rate=0.1)
SMALL_FEATS = FeatureConfig(dim=2**12)


def _posts(n):
    return make_unlabeled([(f"id{i:05d}", f"text {i}") for i in range(n)]).posts


class TestSelectTopK:
    def test_six_post_walkthrough(self, six_post_selection):
        posts, logits = six_post_selection
        out = select_top_k(np.array(logits), posts, SelectionConfig(k_per_class=2))
        # Low block first (scores 4, 3), then the single Moderate, then the
        # two best Severe posts (scores 9, 8); the score-7 post is cut.
        assert [(s.post.id, s.pseudo_label.value, s.score) for s in out] == [
            ("p5", 0, 4.0),
            ("p6", 0, 3.0),
            ("p4", 1, 5.0),
            ("p1", 2, 9.0),
            ("p3", 2, 8.0),
        ]

    def test_k_larger_than_population_keeps_all(self, six_post_selection):
        posts, logits = six_post_selection
        out = select_top_k(np.array(logits), posts, SelectionConfig(k_per_class=100))
        assert len(out) == 6

    def test_tie_at_boundary_prefers_smaller_id(self):
        posts = _posts(3)
        logits = np.array([[5.0, 0, 0], [5.0, 0, 0], [5.0, 0, 0]])
        out = select_top_k(logits, posts, SelectionConfig(k_per_class=2))
        assert [s.post.id for s in out] == ["id00000", "id00001"]

    def test_argmax_tie_goes_to_lowest_class(self):
        posts = _posts(1)
        logits = np.array([[2.0, 2.0, 1.0]])
        out = select_top_k(logits, posts, SelectionConfig(k_per_class=1))
        assert out[0].pseudo_label.value == 0

    def test_empty_input_gives_empty_output(self):
        assert select_top_k(np.zeros((0, 3)), [], SelectionConfig()) == []

    def test_non_finite_logits_rejected(self):
        posts = _posts(1)
        with pytest.raises(DataError, match="finite"):
            select_top_k(np.array([[np.nan, 0, 0]]), posts, SelectionConfig())

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            select_top_k(np.zeros((2, 3)), _posts(3), SelectionConfig())

    def test_probability_recorded_for_argmax_class(self):
        posts = _posts(1)
        logits = np.array([[0.0, 1.0, 0.0]])
        out = select_top_k(logits, posts, SelectionConfig())
        expected = np.exp(1.0) / (np.exp(1.0) + 2.0)
        assert out[0].teacher_probability == pytest.approx(expected, abs=1e-12)

    def test_margin_ranking(self):
        posts = _posts(2)
        # same argmax logit, different runner-up: margin prefers id00001
        logits = np.array([[0.0, 3.0, 2.9], [0.0, 3.0, 1.0]])
        out = select_top_k(
            logits, posts, SelectionConfig(k_per_class=1, ranking_score=RankingScore.MARGIN)
        )
        assert [s.post.id for s in out] == ["id00001"]

    def test_matches_oracle_on_random_instances(self):
        # a quick pass here; the acceptance gate runs the full-size trial
        assert_selection_matches_oracle(n_cases=48, max_posts=2000)

    def test_selection_monotonicity(self):
        rng = random.Random(5)
        n = 500
        logits = np.array(
            [[rng.uniform(-3, 3) for _ in range(3)] for _ in range(n)]
        )
        posts = _posts(n)
        cfg = SelectionConfig(k_per_class=40)
        selected = select_top_k(logits, posts, cfg)
        chosen = {s.post.id for s in selected}
        argmax = np.argmax(logits, axis=1)
        for label in LABELS:
            members = [i for i in range(n) if argmax[i] == label.value]
            in_scores = [
                logits[i][label.value] for i in members if posts[i].id in chosen
            ]
            out_scores = [
                logits[i][label.value] for i in members if posts[i].id not in chosen
            ]
            if in_scores and out_scores:
                assert min(in_scores) >= max(out_scores)


class TestPseudoDataset:
    def test_hard_labels_carry_provenance(self, six_post_selection):
        posts, logits = six_post_selection
        samples = select_top_k(np.array(logits), posts, SelectionConfig(k_per_class=2))
        ds = build_pseudo_dataset(samples)
        assert ds.kind is DatasetKind.LABELED
        assert [p.label.value for p in ds.posts] == [0, 0, 1, 2, 2]
        assert [p.id for p in ds.posts] == [s.post.id for s in samples]

    def test_duplicate_ids_rejected(self):
        sample = PseudoLabeledSample(
            post=_posts(1)[0],
            pseudo_label=LABELS[0],
            score=1.0,
            teacher_probability=0.9,
        )
        with pytest.raises(DataError, match="duplicate"):
            build_pseudo_dataset([sample, sample])

    def test_round_trip_file(self, tmp_path, six_post_selection):
        posts, logits = six_post_selection
        samples = select_top_k(np.array(logits), posts, SelectionConfig(k_per_class=2))
        path = tmp_path / "pseudo.jsonl"
        save_pseudo_samples(samples, path)
        assert load_pseudo_samples(path) == samples


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(0, "teacher") == derive_seed(0, "teacher")

    def test_distinct_roles_and_seeds(self):
        values = {
            derive_seed(seed, role)
            for seed in (0, 1, 2)
            for role in ("teacher", "student", "finetune")
        }
        assert len(values) == 9

    def test_in_numpy_seed_range(self):
        for seed in range(20):
            assert 0 <= derive_seed(seed, "teacher") < 2**63


class TestRunSelfTraining:
    def _tiny_corpus(self, seed=0):
        return make_corpus(
            SynthConfig(n_labeled=60, n_dev=30, n_unlabeled=120, seed=seed)
        )

    def _run(self, tmp_path, seed=0, name="run", **kwargs):
        c = self._tiny_corpus(seed)
        return c, run_self_training(
            c.train,
            c.unlabeled,
            TrainConfig(**FAST),
            SelectionConfig(k_per_class=30),
            seed=seed,
            run_dir=tmp_path / name,
            feature_config=SMALL_FEATS,
            **kwargs,
        )

    def test_artifacts_exist(self, tmp_path):
        _, run = self._run(tmp_path)
        d = run.run_dir
        for rel in (
            "manifest.json",
            "timings.json",
            "inputs/train.jsonl",
            "inputs/unlabeled.jsonl",
            "teacher.model",
            "logits.jsonl",
            "pseudo.jsonl",
            "pseudo_train.jsonl",
            "student.model",
            "final.model",
        ):
            assert (d / rel).exists(), rel

    def test_manifest_contents(self, tmp_path):
        c, run = self._run(tmp_path)
        m = load_manifest(run.run_dir)
        assert m["seed"] == 0
        assert m["backend"] == {"kind": "native"}
        assert set(m["derived_seeds"]) == {"teacher", "student", "finetune"}
        assert m["selection"]["k_per_class"] == 30
        assert m["data"]["train"]["n"] == len(c.train)
        assert m["data"]["train"]["digest"] == c.train.content_digest()
        counts = m["selection_counts"]
        assert set(counts) == {"low", "moderate", "severe"}
        assert all(v <= 30 for v in counts.values())
        assert sum(counts.values()) == len(run.pseudo)

    def test_pseudo_counts_capped_and_disjoint(self, tmp_path):
        _, run = self._run(tmp_path)
        ids = [s.post.id for s in run.pseudo]
        assert len(set(ids)) == len(ids)
        pseudo_ds = load_dataset(run.run_dir / "pseudo_train.jsonl")
        assert len(pseudo_ds) == len(run.pseudo)

    def test_deterministic_across_runs(self, tmp_path):
        _, run_a = self._run(tmp_path, name="a")
        _, run_b = self._run(tmp_path, name="b")
        for rel in (
            "manifest.json",
            "pseudo.jsonl",
            "teacher.model",
            "student.model",
            "final.model",
        ):
            a = (run_a.run_dir / rel).read_bytes()
            b = (run_b.run_dir / rel).read_bytes()
            # manifests differ only in the run name they record
            if rel == "manifest.json":
                a = a.replace(b'"a"', b'"run"')
                b = b.replace(b'"b"', b'"run"')
            assert a == b, rel

    def test_degenerate_unlabeled_equals_labeled(self, tmp_path):
        c = self._tiny_corpus()
        unlabeled = c.train.without_labels()
        run = run_self_training(
            c.train,
            unlabeled,
            TrainConfig(**FAST),
            SelectionConfig(k_per_class=1000),
            seed=0,
            run_dir=tmp_path / "degenerate",
            feature_config=SMALL_FEATS,
        )
        teacher = load_model(run.teacher_path)
        expected = predict_labels(teacher, c.train.texts())
        by_id = {s.post.id: s.pseudo_label for s in run.pseudo}
        assert len(by_id) == len(c.train)
        for post, label in zip(c.train.posts, expected):
            assert by_id[post.id] is label

    def test_student_trained_on_pseudo_labels_only(self, tmp_path):
        # stage isolation: refitting from the persisted pseudo-dataset
        # reproduces the student exactly
        from sevtrain.classifier import fit, save_model
        from sevtrain.selftrain import manifest_train_config

        _, run = self._run(tmp_path)
        manifest = load_manifest(run.run_dir)
        pseudo_ds = load_dataset(run.run_dir / "pseudo_train.jsonl")
        cfg = manifest_train_config(manifest, "student")
        refit = fit(pseudo_ds, cfg, feature_config=SMALL_FEATS)
        out = tmp_path / "refit.model"
        save_model(refit, out)
        assert out.read_bytes() == (run.run_dir / "student.model").read_bytes()

    def test_final_differs_from_student(self, tmp_path):
        _, run = self._run(tmp_path)
        assert (
            (run.run_dir / "final.model").read_bytes()
            != (run.run_dir / "student.model").read_bytes()
        )

    def test_existing_run_dir_rejected(self, tmp_path):
        _, run = self._run(tmp_path)
        c = self._tiny_corpus()
        with pytest.raises(ConfigError, match="fresh output"):
            run_self_training(
                c.train,
                c.unlabeled,
                TrainConfig(**FAST),
                SelectionConfig(k_per_class=30),
                seed=0,
                run_dir=run.run_dir,
                feature_config=SMALL_FEATS,
            )

    def test_empty_inputs_rejected(self, tmp_path):
        c = self._tiny_corpus()
        from sevtrain.corpus import Dataset

        with pytest.raises(DataError, match="empty"):
            run_self_training(
                Dataset((), DatasetKind.LABELED),
                c.unlabeled,
                TrainConfig(**FAST),
                SelectionConfig(),
                seed=0,
                run_dir=tmp_path / "x",
            )
        with pytest.raises(DataError, match="empty"):
            run_self_training(
                c.train,
                Dataset((), DatasetKind.UNLABELED),
                TrainConfig(**FAST),
                SelectionConfig(),
                seed=0,
                run_dir=tmp_path / "y",
            )

    def test_separate_finetune_config_recorded(self, tmp_path):
        c = self._tiny_corpus()
        ft = TrainConfig(epochs=1, learning_rate=0.01)
        run = run_self_training(
            c.train,
            c.unlabeled,
            TrainConfig(**FAST),
            SelectionConfig(k_per_class=30),
            seed=0,
            run_dir=tmp_path / "ft",
            finetune_cfg=ft,
            feature_config=SMALL_FEATS,
        )
        m = load_manifest(run.run_dir)
        assert m["finetune_config"]["epochs"] == 1
        assert m["finetune_config"]["learning_rate"] == 0.01

    def test_multi_round_layout(self, tmp_path):
        c = self._tiny_corpus()
        run = run_self_training(
            c.train,
            c.unlabeled,
            TrainConfig(**FAST),
            SelectionConfig(k_per_class=30),
            seed=0,
            run_dir=tmp_path / "rounds",
            feature_config=SMALL_FEATS,
            rounds=2,
        )
        d = run.run_dir
        assert (d / "round1" / "teacher.model").exists()
        assert (d / "round1" / "final.model").exists()
        assert (d / "round2" / "final.model").exists()
        assert not (d / "round2" / "teacher.model").exists()  # reuses round1 final
        assert run.final_path == d / "round2" / "final.model"
        m = load_manifest(d)
        assert m["rounds"] == 2
        assert len(m["selection_counts_per_round"]) == 2
        assert "round2:student" in m["derived_seeds"]

    def test_logits_cache_matches_teacher(self, tmp_path):
        from sevtrain.selftrain import load_logits

        c, run = self._run(tmp_path)
        teacher = load_model(run.teacher_path)
        unlabeled = load_dataset(run.run_dir / "inputs" / "unlabeled.jsonl")
        cached = load_logits(
            run.run_dir / "logits.jsonl", [p.id for p in unlabeled.posts]
        )
        fresh = predict_logits(teacher, unlabeled.texts())
        assert np.array_equal(cached, fresh)
