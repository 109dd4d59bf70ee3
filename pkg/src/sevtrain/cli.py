"""Command-line entry points.

Commands compose over a run directory: selftrain executes the whole
pipeline, while pseudolabel, train-student and finetune rerun one stage of
an existing run from the files the previous stages left behind. Every
config key can be set in the config file or as a flag of the same name;
see config.KNOWN_KEYS.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 backend failure.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from filelock import FileLock, Timeout

from . import metrics
from .classifier import TrainConfig
from .config import KNOWN_KEYS, RunConfig
from .corpus import (
    LABELS,
    Dataset,
    DatasetKind,
    load_dataset,
    prepare,
    save_dataset,
)
from .errors import ConfigError, SevTrainError
from .features import FeatureConfig
from .ioutil import write_json
from .report import distribution, render_figure_data
from .selftrain import (
    MANIFEST_NAME,
    SelectionConfig,
    RankingScore,
    digest_path,
    load_logits,
    load_manifest,
    load_pseudo_samples,
    manifest_backend,
    manifest_feature_config,
    manifest_train_config,
    build_pseudo_dataset,
    run_paths,
    run_self_training,
    save_logits,
    save_pseudo_samples,
    select_top_k,
    selection_counts,
)
from .wire import open_session

log = logging.getLogger("sevtrain")

# config keys that also get a short flag
_ALIASES = {
    "run.seed": "--seed",
    "run.seeds": "--seeds",
    "run.out": "--out",
    "run.rounds": "--rounds",
    "select.k_per_class": "--k",
    "eval.split": "--split",
    "eval.model": "--model",
    "report.top_n": "--top-n",
    "data.format": "--format",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage problems exit 1, not argparse's 2
        raise ConfigError(message)


def _mangle(key: str) -> str:
    return "cfg_" + key.replace(".", "__")


def _shared_parent() -> _Parser:
    parent = _Parser(add_help=False)
    parent.add_argument("--config", metavar="PATH", help="key = value config file")
    parent.add_argument(
        "--log-level",
        default="info",
        choices=["debug", "info", "warning", "error"],
    )
    group = parent.add_argument_group(
        "config overrides", "any config key can be passed as --<key> VALUE"
    )
    for key in KNOWN_KEYS:
        opts = [f"--{key}"]
        alias = _ALIASES.get(key)
        if alias and alias not in opts:
            opts.append(alias)
        group.add_argument(*opts, dest=_mangle(key), metavar="VALUE")
    return parent


def build_parser() -> _Parser:
    parser = _Parser(
        prog="sevtrain",
        description="Self-training pipeline for depression severity classification.",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    parent = _shared_parent()

    p = sub.add_parser(
        "clean", parents=[parent], help="normalize texts, dedup, drop dev overlap"
    )
    p.add_argument("input", metavar="INPUT", help="raw dataset file")
    p.add_argument("output", metavar="OUTPUT", help="cleaned dataset file")
    p.add_argument(
        "--dev", metavar="PATH", help="dev split; train rows sharing a text are dropped"
    )
    p.add_argument(
        "--kind", default="auto", choices=["auto", "labeled", "unlabeled"]
    )
    p.add_argument("--report", metavar="PATH", help="write the cleaning report JSON here")

    sub.add_parser(
        "selftrain",
        parents=[parent],
        help="full pipeline: teacher, pseudo-labels, student, finetune",
    )

    for name, help_text in (
        ("pseudolabel", "re-predict and re-select pseudo-labels for an existing run"),
        ("train-student", "retrain the student from the run's pseudo-labels"),
        ("finetune", "re-finetune the run's student on the clean training data"),
        ("eval", "evaluate a run's model on a labeled split"),
        ("report", "summarize the pseudo-label harvest by subreddit"),
    ):
        p = sub.add_parser(name, parents=[parent], help=help_text)
        p.add_argument("--run", required=True, metavar="DIR", help="run directory")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    values = {}
    for key in KNOWN_KEYS:
        raw = getattr(args, _mangle(key), None)
        if raw is not None:
            values[key] = raw
    return values


def _runconfig(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_sources(args.config, _overrides(args))


@contextlib.contextmanager
def _run_lock(run_dir: Path):
    """One mutating command per run directory at a time."""
    run_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(run_dir / ".lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(
            f"another sevtrain command is already operating on {run_dir}"
        ) from None
    try:
        yield
    finally:
        lock.release()


def _single_round_paths(run_dir: Path, manifest: dict):
    if manifest.get("rounds", 1) != 1:
        raise ConfigError(
            "stage commands (pseudolabel, train-student, finetune) support "
            "single-round runs only"
        )
    return run_paths(run_dir, 1, 1)


def cmd_clean(args: argparse.Namespace) -> int:
    rc = _runconfig(args)
    fmt = rc.data_format()
    ds = load_dataset(args.input, fmt, args.kind)
    dev = load_dataset(args.dev, "auto", "auto") if args.dev else None
    cleaned, rep = prepare(ds, dev)
    save_dataset(cleaned, args.output, fmt)
    if args.report:
        write_json(rep.to_json(), args.report)
    log.info("cleaning report: %s", rep.to_json())
    print(
        f"kept {rep.n_surviving} of {rep.n_input} posts "
        f"(empty {rep.n_empty_dropped}, duplicate {rep.n_dupes_dropped}, "
        f"shared with dev {rep.n_cross_split_dropped}) -> {args.output}"
    )
    return 0


def cmd_selftrain(args: argparse.Namespace) -> int:
    rc = _runconfig(args)
    if len(rc.seeds()) > 1:
        raise ConfigError(
            "selftrain runs one seed (run.seed); run.seeds drives eval aggregation"
        )
    backend_argv = rc.backend_argv()
    native = backend_argv is None
    labeled = load_dataset(
        rc.require_data_path("train"), rc.data_format(), DatasetKind.LABELED
    )
    unlabeled = load_dataset(
        rc.require_data_path("unlabeled"), rc.data_format(), "auto"
    ).without_labels()
    run_dir = rc.out_dir()
    with _run_lock(run_dir):
        run = run_self_training(
            labeled,
            unlabeled,
            rc.train_config(native=native),
            rc.selection_config(),
            seed=rc.seed(),
            run_dir=run_dir,
            backend=backend_argv,
            finetune_cfg=rc.finetune_config(native=native),
            feature_config=rc.feature_config(),
            rounds=rc.rounds(),
            data_paths={
                split: rc.data_path(split)
                for split in ("train", "unlabeled", "dev", "test")
            },
        )
    counts = run.manifest["selection_counts"]
    print(
        f"run {run.run_dir}: selected "
        + ", ".join(f"{counts[label.to_string()]} {label.to_string()}" for label in LABELS)
        + f"; final model at {run.final_path}"
    )
    return 0


def cmd_pseudolabel(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    rc = _runconfig(args)
    with _run_lock(run_dir):
        manifest = load_manifest(run_dir)
        paths = _single_round_paths(run_dir, manifest)
        stored = manifest["selection"]
        explicit = rc.values
        sel = SelectionConfig(
            k_per_class=int(
                explicit.get("select.k_per_class", stored["k_per_class"])
            ),
            ranking_score=RankingScore(
                explicit.get("select.ranking_score", stored["ranking_score"])
            ),
        )
        unlabeled = load_dataset(paths.unlabeled_input, "jsonl", DatasetKind.UNLABELED)
        ids = [post.id for post in unlabeled.posts]
        teacher_digest = digest_path(paths.teacher)
        if paths.logits.exists() and manifest.get("teacher_digest") == teacher_digest:
            log.info("reusing cached teacher logits at %s", paths.logits)
            logits = load_logits(paths.logits, ids)
        else:
            backend_argv = manifest_backend(manifest)
            with open_session(backend_argv, manifest_feature_config(manifest)) as session:
                session.load(
                    paths.teacher,
                    train_path=paths.train_input,
                    scratch_dir=paths.scratch,
                )
                logits = session.predict(unlabeled.texts())
            save_logits(ids, logits, paths.logits)
        samples = select_top_k(logits, unlabeled.posts, sel)
        if not samples:
            raise SevTrainError("teacher produced no confident predictions")
        save_pseudo_samples(samples, paths.pseudo)
        save_dataset(build_pseudo_dataset(samples), paths.pseudo_train, "jsonl")
        counts = selection_counts(samples)
        manifest["selection"] = sel.to_json()
        manifest["selection_counts"] = counts
        manifest["selection_counts_per_round"] = [counts]
        manifest["teacher_digest"] = teacher_digest
        write_json(manifest, paths.manifest)
    print(
        f"selected {sum(counts.values())} pseudo-labeled posts "
        f"({', '.join(f'{counts[l.to_string()]} {l.to_string()}' for l in LABELS)})"
    )
    return 0


def cmd_train_student(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    with _run_lock(run_dir):
        manifest = load_manifest(run_dir)
        paths = _single_round_paths(run_dir, manifest)
        cfg = manifest_train_config(manifest, "student")
        with open_session(
            manifest_backend(manifest), manifest_feature_config(manifest)
        ) as session:
            session.fit(paths.pseudo_train, cfg, paths.student)
    print(f"student model written to {paths.student}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    with _run_lock(run_dir):
        manifest = load_manifest(run_dir)
        paths = _single_round_paths(run_dir, manifest)
        cfg = manifest_train_config(manifest, "finetune")
        with open_session(
            manifest_backend(manifest), manifest_feature_config(manifest)
        ) as session:
            session.fit(paths.train_input, cfg, paths.final, init_model_dir=paths.student)
    print(f"final model written to {paths.final}")
    return 0


def _predict_labels_with(
    backend_argv: Optional[list[str]],
    fcfg: Optional[FeatureConfig],
    model_path: Path,
    train_input: Path,
    scratch: Path,
    ds: Dataset,
) -> list:
    with open_session(backend_argv, fcfg) as session:
        session.load(model_path, train_path=train_input, scratch_dir=scratch)
        logits = session.predict(ds.texts())
    return [LABELS[int(i)] for i in np.argmax(np.asarray(logits), axis=1)]


def cmd_eval(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    rc = _runconfig(args)
    with _run_lock(run_dir):
        manifest = load_manifest(run_dir)
        rounds = manifest.get("rounds", 1)
        base_paths = run_paths(run_dir, 1, rounds)
        split = rc.eval_split()
        model_kind = rc.eval_model()
        data_path = rc.data_path(split) or (
            manifest["data"].get(split, {}) or {}
        ).get("path")
        if not data_path:
            raise ConfigError(
                f"no {split} data available: pass --data.{split} or record it "
                f"in the selftrain config"
            )
        gold_ds = load_dataset(data_path, rc.data_format(), DatasetKind.LABELED)
        if "run.seeds" in rc.values or "run.seed" in rc.values:
            seeds = rc.seeds()
        else:
            seeds = [manifest["seed"]]
        backend_argv = manifest_backend(manifest)
        fcfg = manifest_feature_config(manifest)

        def model_path_for(base: Path) -> Path:
            last = run_paths(base, rounds, rounds)
            first = run_paths(base, 1, rounds)
            return {
                "final": last.final,
                "student": last.student,
                "teacher": first.teacher,
            }[model_kind]

        def ensure_run(seed: int) -> Path:
            if seed == manifest["seed"]:
                return run_dir
            sub = run_dir / "reseeds" / str(seed)
            if not (sub / MANIFEST_NAME).exists():
                log.info("retraining with seed %d into %s", seed, sub)
                labeled = load_dataset(
                    base_paths.train_input, "jsonl", DatasetKind.LABELED
                )
                unlabeled = load_dataset(
                    base_paths.unlabeled_input, "jsonl", DatasetKind.UNLABELED
                )
                run_self_training(
                    labeled,
                    unlabeled,
                    TrainConfig.from_wire(manifest["train_config"]),
                    SelectionConfig(
                        k_per_class=manifest["selection"]["k_per_class"],
                        ranking_score=RankingScore(
                            manifest["selection"]["ranking_score"]
                        ),
                    ),
                    seed=seed,
                    run_dir=sub,
                    backend=backend_argv,
                    finetune_cfg=TrainConfig.from_wire(manifest["finetune_config"]),
                    feature_config=fcfg,
                    rounds=rounds,
                )
            return sub

        def run_one(seed: int) -> metrics.EvalReport:
            base = ensure_run(seed)
            pred = _predict_labels_with(
                backend_argv,
                fcfg,
                model_path_for(base),
                base_paths.train_input,
                base / ".scratch.model",
                gold_ds,
            )
            return metrics.evaluate(gold_ds.labels(), pred, seed=seed)

        out_path = run_dir / f"eval_{split}_{model_kind}.json"
        if len(seeds) == 1:
            rep = run_one(seeds[0])
            write_json(rep.to_json(), out_path)
            per_class = ", ".join(
                f"{label.to_string()} F1 {rep.per_class[label.value].f1:.4f}"
                for label in LABELS
            )
            print(
                f"{split} {model_kind} macro-F1 {rep.macro_f1:.4f} "
                f"(n={rep.n}, seed={seeds[0]}; {per_class})"
            )
        else:
            multi = metrics.evaluate_runs(run_one, seeds)
            write_json(multi.to_json(), out_path)
            csv_path = run_dir / f"eval_{split}_{model_kind}_runs.csv"
            csv_path.write_text(multi.to_csv(), encoding="utf-8", newline="")
            for rep in multi.runs:
                print(f"  seed {rep.seed}: macro-F1 {rep.macro_f1:.4f}")
            print(
                f"{split} {model_kind} macro-F1 {multi.mean_macro_f1:.4f} "
                f"+/- {multi.std_macro_f1:.4f} over {len(seeds)} seeds"
            )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    rc = _runconfig(args)
    manifest = load_manifest(run_dir)
    rounds = manifest.get("rounds", 1)
    paths = run_paths(run_dir, rounds, rounds)
    samples = load_pseudo_samples(paths.pseudo)
    rep = distribution(samples)
    top_n = rc.report_top_n()
    write_json(rep.to_json(), run_dir / "distribution.json")
    render_figure_data(rep, top_n, run_dir / "figure.csv")
    print(f"{rep.n} pseudo-labeled posts across {len(rep.subreddits)} subreddits")
    for name in rep.top(top_n):
        i = rep.subreddits.index(name)
        print(f"  {name}: {rep.per_subreddit_totals[i]}")
    print(f"top-{top_n} concentration: {rep.top_concentration(top_n):.3f}")
    return 0


COMMANDS = {
    "clean": cmd_clean,
    "selftrain": cmd_selftrain,
    "pseudolabel": cmd_pseudolabel,
    "train-student": cmd_train_student,
    "finetune": cmd_finetune,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=getattr(logging, args.log_level.upper()),
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        return COMMANDS[args.command](args)
    except SevTrainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
