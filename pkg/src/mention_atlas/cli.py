"""Command-line pipeline around the library.

Subcommands: synth, train, guide, sweep-eps, sweep-threshold, compare-refs.
Flags override config-file values; every random stage draws a named sub-seed
from the single root seed, so reruns with the same config and seed write
byte-identical outputs in deterministic (single-worker) mode.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .corpus import (
    build_training_sequences,
    load_annotations,
    load_corpus,
    save_annotations,
    save_corpus,
    tokenize,
)
from .embedding import EmbeddingModel, TrainConfig, load_model, save_model, train_cbow
from .errors import MentionAtlasError, UnknownConceptError
from .guidance import (
    ReferenceStrategy,
    classify,
    cosine,
    reference_vector,
    save_partition,
    write_triage_tsv,
)
from .mention_space import cluster_mentions, clustered_percentage, vectorize_mentions
from .metrics import (
    accuracy,
    build_waste_report,
    random_baseline_sp,
    separate_power,
    write_report_json,
)
from .ontology import ConceptTree, load_concept_tree, toy_tree
from .seeds import derive_seed
from .synth import (
    SCENARIOS,
    SynthConfig,
    generate,
    load_config as load_synth_config,
    save_config as save_synth_config,
    save_pattern_ids,
    split as split_corpus,
)

log = logging.getLogger(__name__)

THREADS_ENV = "MENTION_ATLAS_THREADS"


class MissingInputError(MentionAtlasError):
    """A required input file is absent (exit code 2)."""


@dataclass
class PipelineConfig:
    corpus: str | None = None
    annotations: str | None = None
    ontology: str | None = None  # None: packaged toy tree
    model: str | None = None
    out_dir: str = "out"
    train: TrainConfig = field(default_factory=TrainConfig)
    k: int = 5
    eps: float = 3.8
    min_pts: int = 3
    similarity_threshold: float = 0.01
    e: int = 3
    reference_strategy: str = ReferenceStrategy.AVERAGE_CONTEXTS.value
    seed: int = 1
    sp_trials: int = 200
    workers: int = 1
    deterministic: bool = False


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(obj) - known
    if unknown:
        raise MentionAtlasError(
            f"{path}: unknown config keys: {', '.join(sorted(unknown))}"
        )
    if "train" in obj:
        obj["train"] = TrainConfig(**obj["train"])
    return PipelineConfig(**obj)


def _require_file(path: str | None, what: str) -> Path:
    if path is None:
        raise MissingInputError(f"missing required {what} path")
    p = Path(path)
    if not p.exists():
        raise MissingInputError(f"{what} file not found: {p}")
    return p


def _load_tree(config: PipelineConfig) -> ConceptTree:
    if config.ontology is None:
        return toy_tree()
    return load_concept_tree(_require_file(config.ontology, "ontology"))


def _effective_workers(config: PipelineConfig) -> int:
    workers = 1 if config.deterministic else max(1, config.workers)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def _fmt(value: float | None) -> str:
    return "nan" if value is None else repr(float(value))


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(config: PipelineConfig, args: argparse.Namespace) -> int:
    if args.scenario:
        builder = SCENARIOS[args.scenario]
        kwargs = {"seed": derive_seed(config.seed, "synth")}
        if args.n_documents is not None:
            kwargs["n_documents"] = args.n_documents
        synth_config = builder(**kwargs).config
    elif args.synth_config:
        synth_config = load_synth_config(_require_file(args.synth_config, "synth config"))
        if args.seed is not None:
            synth_config = replace(synth_config, seed=derive_seed(config.seed, "synth"))
        if args.n_documents is not None:
            synth_config = replace(synth_config, n_documents=args.n_documents)
    else:
        raise MentionAtlasError("synth needs --scenario or --synth-config")

    out = _out_dir(config)
    result = generate(synth_config)
    save_corpus(result.documents, out / "corpus.jsonl")
    save_annotations(result.annotations, out / "annotations.jsonl")
    save_pattern_ids(result.pattern_ids, out / "pattern_ids.jsonl")
    save_synth_config(synth_config, out / "synth_config.json")
    written = ["corpus.jsonl", "annotations.jsonl", "pattern_ids.jsonl", "synth_config.json"]

    if args.split_fraction is not None:
        source, target = split_corpus(
            result, args.split_fraction, derive_seed(config.seed, "split")
        )
        save_corpus(source.documents, out / "source_corpus.jsonl")
        save_annotations(source.annotations, out / "source_annotations.jsonl")
        save_corpus(target.documents, out / "target_corpus.jsonl")
        save_annotations(target.annotations, out / "target_annotations.jsonl")
        written += [
            "source_corpus.jsonl", "source_annotations.jsonl",
            "target_corpus.jsonl", "target_annotations.jsonl",
        ]
    print(
        f"generated {len(result.documents)} documents, "
        f"{len(result.annotations)} mentions "
        f"({len(synth_config.patterns())} patterns)"
    )
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def cmd_train(config: PipelineConfig, args: argparse.Namespace) -> int:
    corpus_path = _require_file(config.corpus, "corpus")
    annotations_path = _require_file(config.annotations, "annotations")
    documents = load_corpus(corpus_path)
    annotations = load_annotations(annotations_path)
    sequences = build_training_sequences(documents, annotations)
    train_config = replace(config.train, seed=derive_seed(config.seed, "train"))
    model = train_cbow(sequences, train_config, workers=_effective_workers(config))
    out = _out_dir(config)
    model_path = Path(config.model) if config.model else out / "model.txt"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, model_path)
    print(f"vocabulary size: {len(model.vectors)}")
    print(f"dimension: {model.dim}")
    print("trained phenotypes: " + ", ".join(sorted(model.trained_phenotypes)))
    print(f"wrote {model_path}")
    return 0


@dataclass
class _Task:
    model: EmbeddingModel
    mentions: list
    vectors: list
    unrepresentable: list[str]


def _load_task(config: PipelineConfig, concept: str) -> _Task:
    corpus_path = _require_file(config.corpus, "corpus")
    annotations_path = _require_file(config.annotations, "annotations")
    model = load_model(_require_file(config.model, "model"))
    documents = load_corpus(corpus_path)
    annotations = load_annotations(annotations_path)
    mentions = [a for a in annotations if a.concept == concept]
    if not mentions:
        raise MentionAtlasError(f"no mentions of concept {concept!r} in {annotations_path}")
    sequences = [tokenize(doc.text, doc.id) for doc in documents]
    vectors, unrepresentable = vectorize_mentions(model, sequences, mentions, k=config.k)
    return _Task(model, mentions, vectors, unrepresentable)


def _gold_of(mentions) -> dict[str, bool]:
    return {
        m.mention_id: m.gold_correct for m in mentions if m.gold_correct is not None
    }


def cmd_guide(config: PipelineConfig, args: argparse.Namespace) -> int:
    tree = _load_tree(config)
    if args.concept not in tree:
        raise UnknownConceptError(f"target concept {args.concept!r} absent from ontology")
    task = _load_task(config, args.concept)
    cs = cluster_mentions(task.vectors, eps=config.eps, min_pts=config.min_pts)
    noise_ids = set(cs.noise)
    noise_vectors = [v for v in task.vectors if v.mention_id in noise_ids]
    strategy = ReferenceStrategy(config.reference_strategy)
    ref_concept, ref = reference_vector(task.model, tree, args.concept, strategy)
    rep_seed = (
        derive_seed(config.seed, "representatives") if args.random_representatives else None
    )
    partition = classify(
        cs,
        noise_vectors,
        ref,
        threshold=config.similarity_threshold,
        e=config.e,
        task_concept=args.concept,
        reference_concept=ref_concept,
        unrepresentable=task.unrepresentable,
        representative_seed=rep_seed,
    )
    out = _out_dir(config)
    save_partition(partition, out / "partition.json")
    write_triage_tsv(partition, out / "triage.tsv")
    waste = build_waste_report(partition, total=len(task.mentions), e=config.e)
    write_report_json(waste, out / "waste.json")
    written = ["partition.json", "triage.tsv", "waste.json"]
    gold = _gold_of(task.mentions)
    if gold:
        report = accuracy(partition, gold)
        write_report_json(report, out / "accuracy.json")
        written.append("accuracy.json")
        print(f"macro accuracy: {report.macro:.3f}  micro accuracy: {report.micro:.3f}")
    print(
        f"reference {ref_concept} for task {args.concept}; "
        f"duplicate waste {waste.duplicate_waste:.3f}; "
        f"{len(partition.p_unknown)} p-unknown clusters; "
        f"saved imbalance waste {waste.imbalance_waste_saved:.1f}"
    )
    print(f"wrote {', '.join(written)} to {out}")
    return 0


def _parse_float_list(text: str, what: str) -> list[float]:
    items = [s for s in (part.strip() for part in text.split(",")) if s]
    if not items:
        raise MentionAtlasError(f"empty {what} list")
    return [float(s) for s in items]


def cmd_sweep_eps(config: PipelineConfig, args: argparse.Namespace) -> int:
    eps_values = sorted(_parse_float_list(args.eps_list, "eps"))
    if any(e <= 0 for e in eps_values):
        raise MentionAtlasError("eps values must be positive")
    task = _load_task(config, args.concept)
    gold = _gold_of(task.mentions)
    missing = sorted(
        v.mention_id for v in task.vectors if v.mention_id not in gold
    )
    if missing:
        raise MentionAtlasError(
            "sweep-eps needs gold_correct for every mention; missing: "
            + ", ".join(missing[:10])
        )
    lines = ["eps,clustered_percentage,sp_embedding,sp_random"]
    for i, eps in enumerate(eps_values):
        cs = cluster_mentions(task.vectors, eps=eps, min_pts=config.min_pts)
        pct = clustered_percentage(cs)
        groups = [list(c.members) for c in cs.clusters]
        labels = {m: gold[m] for g in groups for m in g}
        sp_emb = sp_rand = None
        if groups and any(not v for v in labels.values()):
            sp_emb = separate_power(groups, labels, target=False)
            sp_rand = random_baseline_sp(
                [len(g) for g in groups],
                labels,
                target=False,
                trials=config.sp_trials,
                seed=derive_seed(config.seed, f"sp-random:{i}"),
            )
        lines.append(f"{_fmt(eps)},{_fmt(pct)},{_fmt(sp_emb)},{_fmt(sp_rand)}")
    out = _out_dir(config)
    _write_text(out / "sweep_eps.csv", "\n".join(lines) + "\n")
    print(f"wrote sweep_eps.csv ({len(eps_values)} rows) to {out}")
    return 0


def cmd_sweep_threshold(config: PipelineConfig, args: argparse.Namespace) -> int:
    thresholds = sorted(_parse_float_list(args.threshold_list, "threshold"))
    bad = [t for t in thresholds if not -1.0 <= t <= 1.0]
    if bad:
        raise MentionAtlasError(f"thresholds outside [-1, 1]: {bad}")
    tree = _load_tree(config)
    task = _load_task(config, args.concept)
    cs = cluster_mentions(task.vectors, eps=config.eps, min_pts=config.min_pts)
    noise_ids = set(cs.noise)
    noise_vectors = [v for v in task.vectors if v.mention_id in noise_ids]
    strategy = ReferenceStrategy(config.reference_strategy)
    ref_concept, ref = reference_vector(task.model, tree, args.concept, strategy)
    gold = _gold_of(task.mentions)
    lines = ["threshold,duplicate_waste,macro,micro,saved_imbalance_waste"]
    for threshold in thresholds:
        partition = classify(
            cs, noise_vectors, ref, threshold=threshold, e=config.e,
            task_concept=args.concept, reference_concept=ref_concept,
            unrepresentable=task.unrepresentable,
        )
        waste = build_waste_report(partition, total=len(task.mentions), e=config.e)
        macro = micro = None
        if gold:
            try:
                report = accuracy(partition, gold)
                macro, micro = report.macro, report.micro
            except ValueError:
                pass  # nothing within threshold, or gold coverage incomplete
        lines.append(
            f"{_fmt(threshold)},{_fmt(waste.duplicate_waste)},{_fmt(macro)},"
            f"{_fmt(micro)},{_fmt(waste.imbalance_waste_saved)}"
        )
    out = _out_dir(config)
    _write_text(out / "sweep_threshold.csv", "\n".join(lines) + "\n")
    print(f"wrote sweep_threshold.csv ({len(thresholds)} rows) to {out}")
    return 0


def cmd_compare_refs(config: PipelineConfig, args: argparse.Namespace) -> int:
    candidates = [s for s in (part.strip() for part in args.candidates.split(",")) if s]
    if len(candidates) < 2:
        raise MentionAtlasError("compare-refs needs at least two candidate concepts")
    task = _load_task(config, args.concept)
    unknown = [c for c in candidates if c not in task.model.trained_phenotypes]
    if unknown:
        raise MentionAtlasError(
            "candidates not among trained phenotypes: " + ", ".join(unknown)
        )
    cs = cluster_mentions(task.vectors, eps=config.eps, min_pts=config.min_pts)
    noise_ids = set(cs.noise)
    noise_vectors = [v for v in task.vectors if v.mention_id in noise_ids]
    strategy = ReferenceStrategy(config.reference_strategy)
    gold = _gold_of(task.mentions)
    tree = _load_tree(config)
    lines = ["reference\tduplicate_waste\tmacro\tmicro"]
    for candidate in candidates:
        # bypass tree-based choice: evaluate this candidate as the reference
        _, ref = reference_vector(task.model, tree, candidate, strategy)
        partition = classify(
            cs, noise_vectors, ref, threshold=config.similarity_threshold,
            e=config.e, task_concept=args.concept, reference_concept=candidate,
            unrepresentable=task.unrepresentable,
        )
        waste = build_waste_report(partition, total=len(task.mentions), e=config.e)
        macro = micro = None
        if gold:
            try:
                report = accuracy(partition, gold)
                macro, micro = report.macro, report.micro
            except ValueError:
                pass
        lines.append(
            f"{candidate}\t{_fmt(waste.duplicate_waste)}\t{_fmt(macro)}\t{_fmt(micro)}"
        )
    out = _out_dir(config)
    _write_text(out / "compare_refs.tsv", "\n".join(lines) + "\n")
    print(f"wrote compare_refs.tsv ({len(candidates)} references) to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON; flags win over file values")
    common.add_argument("--seed", type=int, help="root seed for all stages")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument(
        "--deterministic", action="store_true",
        help="force single-worker, bit-reproducible runs",
    )
    common.add_argument("--workers", type=int, help="parallel workers (non-deterministic)")
    common.add_argument("--corpus", help="corpus JSONL path")
    common.add_argument("--annotations", help="annotations JSONL path")
    common.add_argument("--ontology", help="ontology TSV path (default: packaged toy tree)")
    common.add_argument("--model", help="embedding model path")
    common.add_argument("--eps", type=float, help="DBSCAN neighbourhood radius")
    common.add_argument("--min-pts", type=int, help="DBSCAN core-point threshold")
    common.add_argument("--threshold", type=float, help="similarity threshold")
    common.add_argument("--e", type=int, help="representatives per p-unknown cluster")
    common.add_argument("--k", type=int, help="context window half-size for mentions")
    common.add_argument(
        "--strategy", choices=[s.value for s in ReferenceStrategy],
        help="reference vector strategy",
    )
    common.add_argument("--sp-trials", type=int, help="trials for the random SP baseline")

    parser = argparse.ArgumentParser(
        prog="mention-atlas",
        description="Guide the reuse of phenotype-mention NLP models on new corpora.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled corpus")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--synth-config", help="synth config JSON path")
    p.add_argument("--split-fraction", type=float, help="also write source/target splits")
    p.add_argument("--n-documents", type=int, help="override document count")

    sub.add_parser("train", parents=[common], help="train the mark-up embedding model")

    p = sub.add_parser("guide", parents=[common], help="partition a new task's mentions")
    p.add_argument("--concept", required=True, help="task phenotype concept id")
    p.add_argument(
        "--random-representatives", action="store_true",
        help="draw representatives by seeded sampling instead of mention-id order",
    )

    p = sub.add_parser("sweep-eps", parents=[common], help="clustered %% and SP per eps")
    p.add_argument("--concept", required=True)
    p.add_argument("--eps-list", required=True, help="comma-separated eps values")

    p = sub.add_parser("sweep-threshold", parents=[common], help="waste and accuracy per threshold")
    p.add_argument("--concept", required=True)
    p.add_argument("--threshold-list", required=True, help="comma-separated thresholds")

    p = sub.add_parser("compare-refs", parents=[common], help="evaluate candidate reference concepts")
    p.add_argument("--concept", required=True)
    p.add_argument("--candidates", required=True, help="comma-separated concept ids")

    return parser


_FLAG_TO_FIELD = {
    "corpus": "corpus",
    "annotations": "annotations",
    "ontology": "ontology",
    "model": "model",
    "out_dir": "out_dir",
    "seed": "seed",
    "eps": "eps",
    "min_pts": "min_pts",
    "threshold": "similarity_threshold",
    "e": "e",
    "k": "k",
    "strategy": "reference_strategy",
    "sp_trials": "sp_trials",
    "workers": "workers",
}


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    config = (
        load_pipeline_config(_require_file(args.config, "config"))
        if args.config
        else PipelineConfig()
    )
    for flag, field_name in _FLAG_TO_FIELD.items():
        value = getattr(args, flag, None)
        if value is not None:
            config = replace(config, **{field_name: value})
    if args.deterministic:
        config = replace(config, deterministic=True)
    return config


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "guide": cmd_guide,
    "sweep-eps": cmd_sweep_eps,
    "sweep-threshold": cmd_sweep_threshold,
    "compare-refs": cmd_compare_refs,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _resolve_config(args)
        return _COMMANDS[args.command](config, args)
    except MissingInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MentionAtlasError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
