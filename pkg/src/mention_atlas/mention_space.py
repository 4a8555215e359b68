"""Mention vectorization and density-based clustering of the mention space.

A mention's vector is the arithmetic mean of the embeddings of the tokens in
its context window (k tokens each side plus the mention tokens, truncated at
document boundaries). Clustering is DBSCAN on Euclidean distance with a
deterministic scan order: points are processed in mention-id order so border
points always attach to the first cluster that claims them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import MentionAnnotation, TokenSequence
from .embedding import EmbeddingModel
from .errors import SpanAlignmentError, UnrepresentableMentionError


@dataclass(frozen=True)
class MentionVector:
    mention_id: str
    vector: np.ndarray
    oov_fraction: float


@dataclass(frozen=True)
class Cluster:
    id: int
    members: tuple[str, ...]
    centroid: np.ndarray


@dataclass(frozen=True)
class ClusterSet:
    """DBSCAN output: disjoint clusters plus noise singletons."""

    clusters: tuple[Cluster, ...]
    noise: tuple[str, ...]
    eps: float
    min_pts: int

    def clustered_count(self) -> int:
        return sum(len(c.members) for c in self.clusters)

    def total(self) -> int:
        return self.clustered_count() + len(self.noise)

    def validate(self) -> None:
        seen: set[str] = set()
        for group in [c.members for c in self.clusters] + [self.noise]:
            for m in group:
                if m in seen:
                    raise ValueError(f"mention {m!r} appears twice in the cluster set")
                seen.add(m)


def vectorize_mention(
    model: EmbeddingModel,
    seq: TokenSequence,
    mention: MentionAnnotation,
    k: int = 5,
) -> MentionVector:
    """Mean embedding of the mention tokens and k surrounding tokens per side.

    Out-of-vocabulary window tokens are skipped from the mean (zero-filling
    would drag vectors toward the origin) and reported via ``oov_fraction``.
    Raises UnrepresentableMentionError when nothing in the window has a vector.
    """
    if k < 0:
        raise ValueError("window half-size k must be >= 0")
    starts = {t.start: i for i, t in enumerate(seq.tokens)}
    ends = {t.end: i for i, t in enumerate(seq.tokens)}
    if mention.start not in starts or mention.end not in ends:
        raise SpanAlignmentError(
            f"mention {mention.mention_id!r} span [{mention.start},{mention.end}) "
            f"does not align with token boundaries in {seq.doc_id!r}"
        )
    first, last = starts[mention.start], ends[mention.end]
    lo = 0 if first < k else first - k
    window = seq.tokens[lo : last + 1 + k]
    found = [
        v for t in window if (v := model.vector_of(t.surface)) is not None
    ]
    if not found:
        raise UnrepresentableMentionError(mention.mention_id)
    vector = np.mean(np.stack(found), axis=0)
    return MentionVector(
        mention_id=mention.mention_id,
        vector=vector,
        oov_fraction=1.0 - len(found) / len(window),
    )


def vectorize_mentions(
    model: EmbeddingModel,
    sequences: Sequence[TokenSequence],
    mentions: Sequence[MentionAnnotation],
    k: int = 5,
) -> tuple[list[MentionVector], list[str]]:
    """Vectorize many mentions; unrepresentable ones are returned separately."""
    by_doc = {seq.doc_id: seq for seq in sequences}
    vectors: list[MentionVector] = []
    unrepresentable: list[str] = []
    for mention in mentions:
        if mention.doc_id not in by_doc:
            raise ValueError(
                f"mention {mention.mention_id!r} references unknown document "
                f"{mention.doc_id!r}"
            )
        try:
            vectors.append(vectorize_mention(model, by_doc[mention.doc_id], mention, k))
        except UnrepresentableMentionError:
            unrepresentable.append(mention.mention_id)
    return vectors, unrepresentable


def centroid(members: Sequence[MentionVector]) -> np.ndarray:
    """Componentwise mean of the member vectors."""
    if not members:
        raise ValueError("centroid of an empty member list is undefined")
    return np.mean(np.stack([m.vector for m in members]), axis=0)


def cluster_mentions(
    vectors: Sequence[MentionVector], eps: float, min_pts: int = 3
) -> ClusterSet:
    """DBSCAN on Euclidean distance.

    A point is core when its closed eps-ball holds at least ``min_pts`` points
    (itself included). Scan order and neighbour expansion follow mention-id
    order, so the assignment of border points is reproducible.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    ordered = sorted(vectors, key=lambda v: v.mention_id)
    ids = [v.mention_id for v in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate mention ids in clustering input")
    if not ordered:
        return ClusterSet(clusters=(), noise=(), eps=eps, min_pts=min_pts)
    dims = {v.vector.shape for v in ordered}
    if len(dims) != 1:
        raise ValueError(f"mention vectors disagree on dimension: {sorted(dims)}")

    x = np.stack([v.vector for v in ordered])
    sq_norms = np.einsum("ij,ij->i", x, x)
    sq_dist = np.maximum(sq_norms[:, None] + sq_norms[None, :] - 2.0 * (x @ x.T), 0.0)
    within = sq_dist <= eps * eps

    n = len(ordered)
    neighbours = [np.flatnonzero(within[i]) for i in range(n)]
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    labels = np.full(n, -1, dtype=np.int64)
    cluster_id = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = cluster_id
        queue = [i]
        while queue:
            p = queue.pop(0)
            for q in neighbours[p]:
                if labels[q] == -1:
                    labels[q] = cluster_id
                    if core[q]:
                        queue.append(q)
        cluster_id += 1

    clusters = []
    for cid in range(cluster_id):
        member_idx = np.flatnonzero(labels == cid)
        clusters.append(
            Cluster(
                id=cid,
                members=tuple(ids[j] for j in member_idx),
                centroid=x[member_idx].mean(axis=0),
            )
        )
    noise = tuple(ids[j] for j in np.flatnonzero(labels == -1))
    result = ClusterSet(
        clusters=tuple(clusters), noise=noise, eps=eps, min_pts=min_pts
    )
    result.validate()
    return result


def clustered_percentage(cs: ClusterSet) -> float:
    """Share of mentions assigned to some cluster; 0 for empty input."""
    total = cs.total()
    if total == 0:
        return 0.0
    return cs.clustered_count() / total


def save_mention_vectors(vectors: Iterable[MentionVector], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in sorted(vectors, key=lambda m: m.mention_id):
            fh.write(
                json.dumps(
                    {
                        "mention_id": v.mention_id,
                        "vector": [float(x) for x in v.vector],
                        "oov_fraction": v.oov_fraction,
                    }
                )
                + "\n"
            )


def load_mention_vectors(path: str | Path) -> list[MentionVector]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                MentionVector(
                    mention_id=obj["mention_id"],
                    vector=np.array(obj["vector"], dtype=np.float64),
                    oov_fraction=float(obj["oov_fraction"]),
                )
            )
    return out


def clusterset_to_dict(cs: ClusterSet) -> dict:
    return {
        "eps": cs.eps,
        "min_pts": cs.min_pts,
        "clusters": [
            {
                "id": c.id,
                "members": list(c.members),
                "centroid": [float(x) for x in c.centroid],
            }
            for c in cs.clusters
        ],
        "noise": list(cs.noise),
    }


def save_clusterset(cs: ClusterSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(clusterset_to_dict(cs), indent=2, sort_keys=True) + "\n")


def load_clusterset(path: str | Path) -> ClusterSet:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    clusters = tuple(
        Cluster(
            id=int(c["id"]),
            members=tuple(c["members"]),
            centroid=np.array(c["centroid"], dtype=np.float64),
        )
        for c in obj["clusters"]
    )
    cs = ClusterSet(
        clusters=clusters,
        noise=tuple(obj["noise"]),
        eps=float(obj["eps"]),
        min_pts=int(obj["min_pts"]),
    )
    cs.validate()
    return cs
