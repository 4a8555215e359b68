"""Documents, mention annotations, tokenization, and mark-up injection.

The training side of the pipeline replaces every annotated mention span with a
single synthetic mark-up token (``<concept>_<context>``, e.g. ``C0038454_POS``)
so that a contextualised phenotype mention becomes one vocabulary item for the
embedding learner. Injection always returns a new token sequence; the original
corpus is never mutated.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .errors import CorpusFormatError, OverlappingSpansError, SpanAlignmentError


class Context(str, Enum):
    """Context of a phenotype mention."""

    POS = "POS"  # positive mention
    NEG = "NEG"  # negated mention
    HYP = "HYP"  # hypothetical mention
    HIS = "HIS"  # history mention
    OTH = "OTH"  # mention about another person
    NOT = "NOT"  # not a phenotype mention


CONTEXT_CODES = frozenset(c.value for c in Context)


class Token(NamedTuple):
    surface: str
    start: int
    end: int


@dataclass(frozen=True)
class Document:
    id: str
    text: str


@dataclass(frozen=True)
class TokenSequence:
    """Ordered tokens of one document with character offsets."""

    doc_id: str
    tokens: tuple[Token, ...]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def validate(self) -> None:
        prev_end = -1
        for tok in self.tokens:
            if tok.start >= tok.end:
                raise ValueError(f"empty token span {tok} in {self.doc_id!r}")
            if tok.start < prev_end:
                raise ValueError(f"overlapping token {tok} in {self.doc_id!r}")
            prev_end = tok.end


@dataclass(frozen=True)
class MentionAnnotation:
    """One phenotype mention located by character span."""

    mention_id: str
    doc_id: str
    start: int
    end: int
    concept: str
    context: Context
    gold_correct: bool | None = None

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(
                f"mention {self.mention_id!r}: start must be < end "
                f"({self.start} >= {self.end})"
            )


_MARKUP_RE = re.compile(r"^(.+)_(POS|NEG|HYP|HIS|OTH|NOT)$")


@dataclass(frozen=True)
class MarkupToken:
    """Synthetic token standing in for a contextualised phenotype mention."""

    concept: str
    context: Context

    @property
    def rendered(self) -> str:
        return f"{self.concept}_{self.context.value}"


def render_markup(concept: str, context: Context) -> str:
    """Render the mark-up string for a concept/context pair."""
    if not concept or concept != concept.strip():
        raise ValueError(f"invalid concept id: {concept!r}")
    return MarkupToken(concept, Context(context)).rendered


def parse_markup(rendered: str) -> MarkupToken:
    """Parse a rendered mark-up string back into its parts."""
    m = _MARKUP_RE.match(rendered)
    if m is None:
        raise ValueError(f"not a mark-up token: {rendered!r}")
    return MarkupToken(m.group(1), Context(m.group(2)))


def is_markup_token(surface: str) -> bool:
    return _MARKUP_RE.match(surface) is not None


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str, doc_id: str = "") -> TokenSequence:
    """Split text into lowercased word and punctuation tokens.

    Deterministic: words are maximal ``\\w+`` runs, every other non-space
    character becomes its own token. Offsets index the original text.
    """
    tokens = tuple(
        Token(m.group().lower(), m.start(), m.end())
        for m in _TOKEN_RE.finditer(text)
    )
    return TokenSequence(doc_id=doc_id, tokens=tokens)


def inject_markups(
    doc: Document,
    seq: TokenSequence,
    annotations: Sequence[MentionAnnotation],
) -> TokenSequence:
    """Replace each annotated span's tokens with a single mark-up token.

    Spans must align with token boundaries and must not overlap; both
    violations are ingest errors, never silently repaired.
    """
    for ann in annotations:
        if ann.doc_id != doc.id:
            raise ValueError(
                f"annotation {ann.mention_id!r} belongs to {ann.doc_id!r}, "
                f"not {doc.id!r}"
            )
    ordered = sorted(annotations, key=lambda a: (a.start, a.end))
    conflicts = []
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            conflicts.extend([prev.mention_id, cur.mention_id])
    if conflicts:
        raise OverlappingSpansError(sorted(set(conflicts)))

    starts = {t.start: i for i, t in enumerate(seq.tokens)}
    ends = {t.end: i for i, t in enumerate(seq.tokens)}
    replacements = {}
    for ann in ordered:
        if ann.start not in starts or ann.end not in ends:
            raise SpanAlignmentError(
                f"mention {ann.mention_id!r} span [{ann.start},{ann.end}) does "
                f"not align with token boundaries in {doc.id!r}"
            )
        replacements[starts[ann.start]] = (ends[ann.end], ann)

    out: list[Token] = []
    i = 0
    while i < len(seq.tokens):
        if i in replacements:
            last, ann = replacements[i]
            out.append(Token(render_markup(ann.concept, ann.context), ann.start, ann.end))
            i = last + 1
        else:
            out.append(seq.tokens[i])
            i += 1
    return TokenSequence(doc_id=seq.doc_id, tokens=tuple(out))


def build_training_sequences(
    documents: Sequence[Document],
    annotations: Iterable[MentionAnnotation],
) -> list[TokenSequence]:
    """Tokenize documents and inject mark-ups for their annotations."""
    by_doc: dict[str, list[MentionAnnotation]] = {}
    known = {d.id for d in documents}
    for ann in annotations:
        if ann.doc_id not in known:
            raise CorpusFormatError(
                f"annotation {ann.mention_id!r} references unknown document "
                f"{ann.doc_id!r}"
            )
        by_doc.setdefault(ann.doc_id, []).append(ann)
    return [
        inject_markups(doc, tokenize(doc.text, doc.id), by_doc.get(doc.id, []))
        for doc in documents
    ]


def _read_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise CorpusFormatError(f"{path}:{lineno}: expected an object")
            yield lineno, obj


def _require(obj: dict, field: str, kind, path, lineno):
    if field not in obj:
        raise CorpusFormatError(f"{path}:{lineno}: missing field {field!r}")
    value = obj[field]
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise CorpusFormatError(
            f"{path}:{lineno}: field {field!r} must be {kind.__name__}, "
            f"got {type(value).__name__}"
        )
    return value


def load_corpus(path: str | Path) -> list[Document]:
    """Load documents from JSON Lines ({"id", "text"})."""
    docs = []
    seen = set()
    for lineno, obj in _read_jsonl(path):
        doc_id = _require(obj, "id", str, path, lineno)
        text = _require(obj, "text", str, path, lineno)
        if doc_id in seen:
            raise CorpusFormatError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        docs.append(Document(id=doc_id, text=text))
    return docs


def load_annotations(path: str | Path) -> list[MentionAnnotation]:
    """Load mention annotations from JSON Lines.

    Fields: mention_id, doc_id, start, end, concept, context, and optional
    gold_correct. Offsets are character offsets into the document text.
    """
    anns = []
    seen = set()
    for lineno, obj in _read_jsonl(path):
        mention_id = _require(obj, "mention_id", str, path, lineno)
        doc_id = _require(obj, "doc_id", str, path, lineno)
        start = _require(obj, "start", int, path, lineno)
        end = _require(obj, "end", int, path, lineno)
        concept = _require(obj, "concept", str, path, lineno)
        code = _require(obj, "context", str, path, lineno)
        if code not in CONTEXT_CODES:
            raise CorpusFormatError(
                f"{path}:{lineno}: field 'context': unknown code {code!r}"
            )
        gold = obj.get("gold_correct")
        if gold is not None and not isinstance(gold, bool):
            raise CorpusFormatError(
                f"{path}:{lineno}: field 'gold_correct' must be boolean or null"
            )
        if mention_id in seen:
            raise CorpusFormatError(
                f"{path}:{lineno}: duplicate mention id {mention_id!r}"
            )
        if start >= end or start < 0:
            raise CorpusFormatError(
                f"{path}:{lineno}: invalid span [{start},{end})"
            )
        seen.add(mention_id)
        anns.append(
            MentionAnnotation(
                mention_id=mention_id,
                doc_id=doc_id,
                start=start,
                end=end,
                concept=concept,
                context=Context(code),
                gold_correct=gold,
            )
        )
    return anns


def save_corpus(documents: Sequence[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(json.dumps({"id": doc.id, "text": doc.text}) + "\n")


def save_annotations(annotations: Sequence[MentionAnnotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            record = {
                "mention_id": ann.mention_id,
                "doc_id": ann.doc_id,
                "start": ann.start,
                "end": ann.end,
                "concept": ann.concept,
                "context": ann.context.value,
            }
            if ann.gold_correct is not None:
                record["gold_correct"] = ann.gold_correct
            fh.write(json.dumps(record) + "\n")
