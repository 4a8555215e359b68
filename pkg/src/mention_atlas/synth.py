"""Synthetic labelled corpora with planted language patterns.

Each pattern is a short sentence template around a mention slot. Patterns use
their own filler vocabularies, so how separable the planted patterns are in
embedding space is controllable (an overlap knob can mix the vocabularies to
make things harder). Every generated mention records the pattern that produced
it, giving tests a hidden ground truth for separate-power and routing checks.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Context, Document, MentionAnnotation
from .embedding import TrainConfig

MENTION_SLOT = "<M>"
JITTER_SLOT = "<J>"

_WORD_RE = re.compile(r"\w+")


def _check_wordlike(label: str, tokens: Iterable[str]) -> None:
    for tok in tokens:
        if not _WORD_RE.fullmatch(tok):
            raise ValueError(f"{label}: token {tok!r} is not a single word")


@dataclass(frozen=True)
class PatternSpec:
    """One language pattern: a sentence template around a mention slot."""

    pattern_id: str
    template: tuple[str, ...]
    context: Context
    correct: bool
    vocabulary_jitter: tuple[str, ...] = ()
    weight: float = 1.0
    concept: str | None = None  # None: draw uniformly from config.phenotypes

    def validate(self) -> None:
        if self.template.count(MENTION_SLOT) != 1:
            raise ValueError(
                f"pattern {self.pattern_id!r}: template needs exactly one "
                f"{MENTION_SLOT} slot"
            )
        if self.weight <= 0:
            raise ValueError(f"pattern {self.pattern_id!r}: weight must be positive")
        if JITTER_SLOT in self.template and not self.vocabulary_jitter:
            raise ValueError(
                f"pattern {self.pattern_id!r}: jitter slot without jitter vocabulary"
            )
        words = [t for t in self.template if t not in (MENTION_SLOT, JITTER_SLOT)]
        _check_wordlike(f"pattern {self.pattern_id!r}", words)
        _check_wordlike(f"pattern {self.pattern_id!r} jitter", self.vocabulary_jitter)


@dataclass(frozen=True)
class SynthConfig:
    phenotypes: tuple[tuple[str, tuple[str, ...]], ...]
    familiar_patterns: tuple[PatternSpec, ...]
    novel_patterns: tuple[PatternSpec, ...]
    n_documents: int
    mentions_per_doc: tuple[int, int] = (1, 2)
    incorrect_fraction: float | None = None
    jitter_overlap: float = 0.0
    seed: int = 1

    def patterns(self) -> tuple[PatternSpec, ...]:
        return self.familiar_patterns + self.novel_patterns

    def validate(self) -> None:
        if self.n_documents < 0:
            raise ValueError("n_documents must be >= 0")
        lo, hi = self.mentions_per_doc
        if lo < 1 or hi < lo:
            raise ValueError(f"bad mentions_per_doc range ({lo}, {hi})")
        if self.incorrect_fraction is not None and not 0 <= self.incorrect_fraction <= 1:
            raise ValueError("incorrect_fraction must be in [0, 1]")
        if not 0 <= self.jitter_overlap <= 1:
            raise ValueError("jitter_overlap must be in [0, 1]")
        if not self.patterns():
            raise ValueError("at least one pattern is required")
        ids = [p.pattern_id for p in self.patterns()]
        if len(ids) != len(set(ids)):
            raise ValueError("pattern ids must be unique")
        surfaces = dict(self.phenotypes)
        for concept, forms in self.phenotypes:
            if not forms:
                raise ValueError(f"phenotype {concept!r} has no surface forms")
            for form in forms:
                _check_wordlike(f"phenotype {concept!r}", form.split())
        for p in self.patterns():
            p.validate()
            if p.concept is not None and p.concept not in surfaces:
                raise ValueError(
                    f"pattern {p.pattern_id!r} references phenotype {p.concept!r} "
                    f"with no surface forms"
                )
            if p.concept is None and not self.phenotypes:
                raise ValueError(
                    f"pattern {p.pattern_id!r} needs config phenotypes to draw from"
                )


@dataclass(frozen=True)
class SynthOutput:
    config: SynthConfig
    documents: tuple[Document, ...]
    annotations: tuple[MentionAnnotation, ...]
    pattern_ids: dict[str, str]  # mention_id -> generating pattern

    def familiar_mention_ids(self) -> frozenset[str]:
        familiar = {p.pattern_id for p in self.config.familiar_patterns}
        return frozenset(m for m, p in self.pattern_ids.items() if p in familiar)


@dataclass(frozen=True)
class SynthSplit:
    documents: tuple[Document, ...]
    annotations: tuple[MentionAnnotation, ...]


def _effective_weights(config: SynthConfig) -> np.ndarray:
    pats = config.patterns()
    w = np.array([p.weight for p in pats], dtype=np.float64)
    if config.incorrect_fraction is None:
        return w / w.sum()
    incorrect = np.array([not p.correct for p in pats])
    w_inc = float(w[incorrect].sum())
    w_cor = float(w[~incorrect].sum())
    f = config.incorrect_fraction
    if f > 0 and w_inc == 0:
        raise ValueError("incorrect_fraction > 0 but no incorrect pattern exists")
    if f < 1 and w_cor == 0:
        raise ValueError("incorrect_fraction < 1 but no correct pattern exists")
    out = np.where(
        incorrect,
        w * (f / w_inc if w_inc else 0.0),
        w * ((1.0 - f) / w_cor if w_cor else 0.0),
    )
    return out


def generate(config: SynthConfig) -> SynthOutput:
    """Generate a corpus; deterministic for a fixed config (seed included)."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    patterns = config.patterns()
    weights = _effective_weights(config)
    surfaces = dict(config.phenotypes)
    concept_ids = [c for c, _ in config.phenotypes]
    union_jitter = tuple(
        sorted({w for p in patterns for w in p.vocabulary_jitter})
    )
    lo, hi = config.mentions_per_doc

    documents: list[Document] = []
    annotations: list[MentionAnnotation] = []
    pattern_ids: dict[str, str] = {}
    mention_counter = 0
    for d in range(config.n_documents):
        n_mentions = int(rng.integers(lo, hi + 1))
        words: list[str] = []
        pending: list[tuple[str, int, int, PatternSpec, str]] = []
        for _ in range(n_mentions):
            if words:
                words.append(".")
            spec = patterns[int(rng.choice(len(patterns), p=weights))]
            concept = spec.concept or concept_ids[int(rng.integers(len(concept_ids)))]
            forms = surfaces[concept]
            surface = forms[int(rng.integers(len(forms)))]
            first_word = last_word = -1
            for tok in spec.template:
                if tok == MENTION_SLOT:
                    first_word = len(words)
                    words.extend(surface.split())
                    last_word = len(words) - 1
                elif tok == JITTER_SLOT:
                    pool: Sequence[str] = spec.vocabulary_jitter
                    if config.jitter_overlap > 0 and rng.random() < config.jitter_overlap:
                        pool = union_jitter
                    words.append(pool[int(rng.integers(len(pool)))])
                else:
                    words.append(tok)
            mention_id = f"m{mention_counter:06d}"
            mention_counter += 1
            pending.append((mention_id, first_word, last_word, spec, concept))

        offsets = []
        cursor = 0
        for w in words:
            offsets.append(cursor)
            cursor += len(w) + 1
        doc_id = f"d{d:05d}"
        documents.append(Document(id=doc_id, text=" ".join(words)))
        for mention_id, first_word, last_word, spec, concept in pending:
            annotations.append(
                MentionAnnotation(
                    mention_id=mention_id,
                    doc_id=doc_id,
                    start=offsets[first_word],
                    end=offsets[last_word] + len(words[last_word]),
                    concept=concept,
                    context=spec.context,
                    gold_correct=spec.correct,
                )
            )
            pattern_ids[mention_id] = spec.pattern_id
    return SynthOutput(
        config=config,
        documents=tuple(documents),
        annotations=tuple(annotations),
        pattern_ids=pattern_ids,
    )


def split(
    output: SynthOutput, fraction: float, seed: int
) -> tuple[SynthSplit, SynthSplit]:
    """Split documents into disjoint source (training) and target (new task) sets.

    Documents containing any novel-pattern mention always land in the target
    split, so novel patterns never leak into training while familiar patterns
    appear on both sides.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    novel = {p.pattern_id for p in output.config.novel_patterns}
    doc_order = {doc.id: i for i, doc in enumerate(output.documents)}
    has_novel: set[str] = {
        ann.doc_id
        for ann in output.annotations
        if output.pattern_ids[ann.mention_id] in novel
    }
    eligible = [doc.id for doc in output.documents if doc.id not in has_novel]
    n_source = min(len(eligible), round(fraction * len(output.documents)))
    rng = np.random.default_rng(seed)
    shuffled = list(rng.permutation(eligible))
    source_ids = set(shuffled[:n_source])

    def part(ids: set[str]) -> SynthSplit:
        docs = tuple(
            sorted((d for d in output.documents if d.id in ids), key=lambda d: doc_order[d.id])
        )
        anns = tuple(a for a in output.annotations if a.doc_id in ids)
        return SynthSplit(documents=docs, annotations=anns)

    target_ids = {doc.id for doc in output.documents} - source_ids
    return part(source_ids), part(target_ids)


def save_pattern_ids(pattern_ids: Mapping[str, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mention_id in sorted(pattern_ids):
            fh.write(
                json.dumps({"mention_id": mention_id, "pattern_id": pattern_ids[mention_id]})
                + "\n"
            )


def load_pattern_ids(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                out[obj["mention_id"]] = obj["pattern_id"]
    return out


def config_to_dict(config: SynthConfig) -> dict:
    def pattern_dict(p: PatternSpec) -> dict:
        return {
            "pattern_id": p.pattern_id,
            "template": list(p.template),
            "context": p.context.value,
            "correct": p.correct,
            "vocabulary_jitter": list(p.vocabulary_jitter),
            "weight": p.weight,
            "concept": p.concept,
        }

    return {
        "phenotypes": [[c, list(forms)] for c, forms in config.phenotypes],
        "familiar_patterns": [pattern_dict(p) for p in config.familiar_patterns],
        "novel_patterns": [pattern_dict(p) for p in config.novel_patterns],
        "n_documents": config.n_documents,
        "mentions_per_doc": list(config.mentions_per_doc),
        "incorrect_fraction": config.incorrect_fraction,
        "jitter_overlap": config.jitter_overlap,
        "seed": config.seed,
    }


def config_from_dict(obj: Mapping) -> SynthConfig:
    def pattern(p: Mapping) -> PatternSpec:
        return PatternSpec(
            pattern_id=p["pattern_id"],
            template=tuple(p["template"]),
            context=Context(p["context"]),
            correct=bool(p["correct"]),
            vocabulary_jitter=tuple(p.get("vocabulary_jitter", ())),
            weight=float(p.get("weight", 1.0)),
            concept=p.get("concept"),
        )

    config = SynthConfig(
        phenotypes=tuple((c, tuple(forms)) for c, forms in obj["phenotypes"]),
        familiar_patterns=tuple(pattern(p) for p in obj["familiar_patterns"]),
        novel_patterns=tuple(pattern(p) for p in obj.get("novel_patterns", [])),
        n_documents=int(obj["n_documents"]),
        mentions_per_doc=tuple(obj.get("mentions_per_doc", (1, 2))),  # type: ignore[arg-type]
        incorrect_fraction=obj.get("incorrect_fraction"),
        jitter_overlap=float(obj.get("jitter_overlap", 0.0)),
        seed=int(obj.get("seed", 1)),
    )
    config.validate()
    return config


def save_config(config: SynthConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> SynthConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


@dataclass(frozen=True)
class Scenario:
    """A reproducible end-to-end setup: corpus config plus pipeline knobs."""

    name: str
    config: SynthConfig
    task_concept: str
    train: TrainConfig
    k: int = 5
    eps: float = 0.6
    min_pts: int = 3
    threshold: float = 0.01
    e: int = 3
    split_fraction: float = 0.5
    eps_grid: tuple[float, ...] = ()
    reference_candidates: tuple[str, ...] = ()


def _pattern(
    pid: str,
    context: Context,
    correct: bool,
    template: str,
    jitter: tuple[str, ...],
    weight: float,
    concept: str | None = None,
) -> PatternSpec:
    return PatternSpec(
        pattern_id=pid,
        template=tuple(template.split()),
        context=context,
        correct=correct,
        vocabulary_jitter=jitter,
        weight=weight,
        concept=concept,
    )


def scenario_four_patterns(seed: int, n_documents: int = 250) -> Scenario:
    """Single-phenotype corpus with four planted patterns, 15% incorrect.

    Pattern vocabularies are disjoint, so clusters should recover patterns and
    separate the incorrect (NOT-context) mentions cleanly.
    """
    # Mentions sit early in some templates and late in others, so context
    # windows straddle sentence boundaries and pick up tokens from whichever
    # pattern precedes or follows; that spread is what the eps sweep trades
    # against cluster purity.
    config = SynthConfig(
        phenotypes=(("C0011849", ("diabetes", "diabetes mellitus")),),
        familiar_patterns=(
            _pattern(
                "pos_managed", Context.POS, True,
                f"notes {JITTER_SLOT} ongoing {MENTION_SLOT} managed with "
                f"{JITTER_SLOT} medication plan {JITTER_SLOT}",
                ("specialist", "routine", "annual", "weekly", "urgent",
                 "booked", "virtual", "morning"), 1.0,
            ),
            _pattern(
                "neg_screening", Context.NEG, True,
                f"examination finds {JITTER_SLOT} no evidence of {MENTION_SLOT} "
                f"screening results {JITTER_SLOT} remain {JITTER_SLOT} negative",
                ("again", "currently", "broadly", "entirely", "completely",
                 "clearly", "reassuringly", "otherwise"), 1.0,
            ),
            _pattern(
                "his_recorded", Context.HIS, True,
                f"history {JITTER_SLOT} includes {MENTION_SLOT} first recorded "
                f"{JITTER_SLOT} years ago {JITTER_SLOT}",
                ("five", "seven", "ten", "twelve", "fifteen", "twenty",
                 "childhood", "teenage"), 1.0,
            ),
            _pattern(
                "not_leaflets", Context.NOT, False,
                f"patient {JITTER_SLOT} requested information {JITTER_SLOT} "
                f"leaflets about {MENTION_SLOT} support {JITTER_SLOT}",
                ("main", "front", "ward", "entrance", "lobby", "helpdesk",
                 "kiosk", "community"), 1.0,
            ),
        ),
        novel_patterns=(),
        n_documents=n_documents,
        mentions_per_doc=(2, 2),
        incorrect_fraction=0.15,
        jitter_overlap=0.15,
        seed=seed,
    )
    return Scenario(
        name="four-patterns",
        config=config,
        task_concept="C0011849",
        train=TrainConfig(
            dim=40, window=5, epochs=8, negative_samples=5, learning_rate=0.025,
            min_count=2, subsample_threshold=1.0, seed=seed,
        ),
        eps=0.3,
        eps_grid=(0.02, 0.05, 0.08, 0.12, 0.16, 0.2, 0.28, 0.36, 0.48, 0.6),
    )


def scenario_model_reuse(seed: int, n_documents: int = 320) -> Scenario:
    """70% familiar / 30% novel patterns for one task phenotype.

    Novel patterns use fully disjoint vocabulary, never appear in the source
    split, and carry the incorrect mentions; familiar mentions should be
    routed to p-known.
    """
    config = SynthConfig(
        phenotypes=(("C0038454", ("stroke", "cerebrovascular accident")),),
        familiar_patterns=(
            _pattern(
                "fam_pos_acute", Context.POS, True,
                f"ward round notes {JITTER_SLOT} acute {MENTION_SLOT} symptoms "
                f"treated with {JITTER_SLOT} therapy {JITTER_SLOT}",
                ("thrombolysis", "aspirin", "urgent", "supportive", "overnight",
                 "immediate", "standard", "today"), 0.7 / 3,
                concept="C0038454",
            ),
            _pattern(
                "fam_neg_imaging", Context.NEG, True,
                f"imaging shows {JITTER_SLOT} no sign of {MENTION_SLOT} scan "
                f"appears {JITTER_SLOT} normal {JITTER_SLOT}",
                ("basically", "entirely", "largely", "throughout", "bilaterally",
                 "overall", "elsewhere", "repeatedly"), 0.7 / 3,
                concept="C0038454",
            ),
            _pattern(
                "fam_his_admission", Context.HIS, True,
                f"previous {JITTER_SLOT} admission for {MENTION_SLOT} documented "
                f"in {JITTER_SLOT} discharge summary {JITTER_SLOT}",
                ("earlier", "archived", "original", "prior", "winter",
                 "spring", "autumn", "summer"), 0.7 / 3,
                concept="C0038454",
            ),
        ),
        novel_patterns=(
            _pattern(
                "nov_hyp_risk", Context.HYP, True,
                f"family worried patient might develop {MENTION_SLOT} risk "
                f"factors being {JITTER_SLOT} assessed",
                ("soon", "again", "closely"), 0.2,
                concept="C0038454",
            ),
            _pattern(
                "nov_not_charity", Context.NOT, False,
                f"spouse collected awareness campaign brochures mentioning "
                f"{MENTION_SLOT} charity event next {JITTER_SLOT} month",
                ("coming", "following"), 0.1,
                concept="C0038454",
            ),
        ),
        n_documents=n_documents,
        mentions_per_doc=(1, 2),
        incorrect_fraction=0.1,
        seed=seed,
    )
    return Scenario(
        name="model-reuse",
        config=config,
        task_concept="C0038454",
        train=TrainConfig(
            dim=40, window=5, epochs=8, negative_samples=5, learning_rate=0.025,
            min_count=2, subsample_threshold=1.0, seed=seed,
        ),
        eps=0.6,
    )


def scenario_reference_choice(seed: int, n_documents: int = 320) -> Scenario:
    """New-phenotype task whose language reuses a nearby phenotype's patterns.

    Training data covers heart attack and fatigue; the new task is stroke,
    whose templates share most vocabulary with the heart-attack patterns. The
    concept-tree-nearer reference (heart attack) should therefore recognise
    more of the new task as familiar than the farther one (fatigue).
    """
    ha_jitter = ("coronary", "cardiac", "intensive")
    config = SynthConfig(
        phenotypes=(
            ("C0027051", ("heart attack", "myocardial infarction")),
            ("C0015672", ("fatigue", "tiredness")),
            ("C0038454", ("stroke", "cerebrovascular accident")),
        ),
        familiar_patterns=(
            _pattern(
                "ha_pos", Context.POS, True,
                f"admitted overnight following {MENTION_SLOT} chest pain managed with {JITTER_SLOT} care",
                ha_jitter, 0.245, concept="C0027051",
            ),
            _pattern(
                "ha_his", Context.HIS, True,
                f"cardiology letter documents prior {MENTION_SLOT} treated on coronary unit {JITTER_SLOT}",
                ("recently", "previously"), 0.105, concept="C0027051",
            ),
            _pattern(
                "fat_pos", Context.POS, True,
                f"community visit reports persistent {MENTION_SLOT} affecting sleep and {JITTER_SLOT} routine",
                ("morning", "evening", "household"), 0.245, concept="C0015672",
            ),
            _pattern(
                "fat_his", Context.HIS, True,
                f"earlier letters describe longstanding {MENTION_SLOT} improving after rest and {JITTER_SLOT}",
                ("exercise", "pacing"), 0.105, concept="C0015672",
            ),
        ),
        novel_patterns=(
            _pattern(
                "st_pos", Context.POS, True,
                f"admitted overnight following {MENTION_SLOT} sudden weakness managed with {JITTER_SLOT} care",
                ha_jitter, 0.2, concept="C0038454",
            ),
            _pattern(
                "st_his", Context.HIS, True,
                f"cardiology letter documents prior {MENTION_SLOT} treated on specialist unit {JITTER_SLOT}",
                ("recently", "previously"), 0.1, concept="C0038454",
            ),
        ),
        n_documents=n_documents,
        mentions_per_doc=(1, 2),
        seed=seed,
    )
    return Scenario(
        name="reference-choice",
        config=config,
        task_concept="C0038454",
        train=TrainConfig(
            dim=40, window=5, epochs=8, negative_samples=5, learning_rate=0.025,
            min_count=2, subsample_threshold=1.0, seed=seed,
        ),
        eps=0.6,
        reference_candidates=("C0027051", "C0015672"),
    )


SCENARIOS = {
    "four-patterns": scenario_four_patterns,
    "model-reuse": scenario_model_reuse,
    "reference-choice": scenario_reference_choice,
}
