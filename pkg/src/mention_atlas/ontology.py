"""Concept tree with synonyms, hop distances, and reference-concept choice.

The tree is generic: any hierarchy loads from a TSV edge list, so licensed
vocabularies stay out of the repository. A hand-built toy medical tree ships
with the package for tests and demos.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import CorpusFormatError, UnknownConceptError, UnreachableConceptError


@dataclass(frozen=True)
class ConceptTree:
    """Immutable forest of concepts: child -> single parent."""

    labels: dict[str, str]
    parent: dict[str, str]
    synonyms: dict[str, tuple[str, ...]]
    _surface_index: dict[str, str] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        index: dict[str, str] = {}
        for cid, name in self.labels.items():
            index.setdefault(name.lower(), cid)
        for cid, names in self.synonyms.items():
            for name in names:
                index.setdefault(name.lower(), cid)
        object.__setattr__(self, "_surface_index", index)

    def __contains__(self, concept: str) -> bool:
        return concept in self.labels

    def roots(self) -> list[str]:
        return sorted(c for c in self.labels if c not in self.parent)


def _ancestry(tree: ConceptTree, concept: str) -> list[str]:
    """Path from ``concept`` up to its root, inclusive."""
    chain = [concept]
    seen = {concept}
    node = concept
    while node in tree.parent:
        node = tree.parent[node]
        if node in seen:
            raise CorpusFormatError(f"cycle in concept tree at {node!r}")
        seen.add(node)
        chain.append(node)
    return chain


def tree_distance(tree: ConceptTree, a: str, b: str) -> int:
    """Number of edges on the unique tree path between two concepts."""
    for c in (a, b):
        if c not in tree:
            raise UnknownConceptError(f"unknown concept: {c!r}")
    up_a = {c: i for i, c in enumerate(_ancestry(tree, a))}
    for steps_b, c in enumerate(_ancestry(tree, b)):
        if c in up_a:
            return up_a[c] + steps_b
    raise UnreachableConceptError(f"{a!r} and {b!r} are in different trees")


def choose_reference_phenotype(
    tree: ConceptTree, c_p: str, candidates: Iterable[str]
) -> str:
    """Pick the candidate concept nearest to ``c_p`` by hop distance.

    Candidates unreachable from ``c_p`` are excluded; ties break by
    lexicographic concept id so the result does not depend on iteration order.
    """
    pool = sorted(set(candidates))
    if not pool:
        raise ValueError("candidate set is empty")
    if c_p not in tree:
        raise UnknownConceptError(f"unknown concept: {c_p!r}")
    best: tuple[int, str] | None = None
    for c in pool:
        if c not in tree:
            raise UnknownConceptError(f"unknown concept: {c!r}")
        try:
            d = tree_distance(tree, c, c_p)
        except UnreachableConceptError:
            continue
        if best is None or (d, c) < best:
            best = (d, c)
    if best is None:
        raise UnreachableConceptError(
            f"no candidate is reachable from {c_p!r}"
        )
    return best[1]


def synonym_concept(tree: ConceptTree, surface: str) -> str | None:
    """Case-insensitive lookup of a surface form; None when unknown."""
    return tree._surface_index.get(surface.strip().lower())


def load_concept_tree(path: str | Path) -> ConceptTree:
    """Load a tree from TSV records: NODE/EDGE/SYN lines.

    NODE<TAB>id<TAB>preferred_name declares a concept, EDGE<TAB>child<TAB>parent
    attaches it, SYN<TAB>id<TAB>synonym adds a surface form.
    """
    labels: dict[str, str] = {}
    parent: dict[str, str] = {}
    synonyms: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as fh:
        rows = [(n, line.rstrip("\n")) for n, line in enumerate(fh, start=1)]
    for lineno, line in rows:
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise CorpusFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
        kind, a, b = parts
        if kind == "NODE":
            if a in labels:
                raise CorpusFormatError(f"{path}:{lineno}: duplicate node {a!r}")
            labels[a] = b
        elif kind == "EDGE":
            if a in parent:
                raise CorpusFormatError(f"{path}:{lineno}: node {a!r} has two parents")
            parent[a] = b
        elif kind == "SYN":
            synonyms.setdefault(a, []).append(b)
        else:
            raise CorpusFormatError(f"{path}:{lineno}: unknown record kind {kind!r}")
    for lineno, line in rows:
        if line.startswith("EDGE") or line.startswith("SYN"):
            _, a, b = line.split("\t")
            ids = (a, b) if line.startswith("EDGE") else (a,)
            for cid in ids:
                if cid not in labels:
                    raise CorpusFormatError(
                        f"{path}:{lineno}: undeclared concept {cid!r}"
                    )
    tree = ConceptTree(
        labels=labels,
        parent=parent,
        synonyms={k: tuple(v) for k, v in synonyms.items()},
    )
    for concept in labels:
        _ancestry(tree, concept)  # raises on cycles
    return tree


def toy_tree() -> ConceptTree:
    """The packaged toy medical concept tree."""
    with resources.as_file(
        resources.files("mention_atlas").joinpath("data/toy_ontology.tsv")
    ) as p:
        return load_concept_tree(p)
