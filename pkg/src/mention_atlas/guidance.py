"""Partition mentions into p-known and p-unknown against a reference vector.

The reference is a trained phenotype's mark-up embedding (or the embedding of
the nearest trained phenotype by concept-tree distance when the task phenotype
itself was never trained). Clusters whose centroid has cosine similarity at or
above the threshold are p-known wholesale; noise mentions are judged one by
one. Every p-unknown cluster gets a small set of representatives to validate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Context, MentionAnnotation, render_markup
from .embedding import EmbeddingModel
from .mention_space import ClusterSet, MentionVector, clustered_percentage
from .metrics import separate_power
from .ontology import ConceptTree, choose_reference_phenotype

log = logging.getLogger(__name__)


class ReferenceStrategy(Enum):
    """How to turn a reference concept's mark-up vectors into one vector."""

    AVERAGE_CONTEXTS = "average_contexts"
    POSITIVE_ONLY = "positive_only"


def reference_vector(
    model: EmbeddingModel,
    tree: ConceptTree,
    c_p: str,
    strategy: ReferenceStrategy = ReferenceStrategy.AVERAGE_CONTEXTS,
) -> tuple[str, np.ndarray]:
    """Choose the reference concept for a task phenotype and build its vector.

    A task phenotype the model was trained for is its own reference; otherwise
    the nearest trained phenotype by tree distance stands in. The vector is
    the mean over the concept's available context mark-up vectors, or just the
    POS vector under POSITIVE_ONLY.
    """
    if not model.trained_phenotypes:
        raise ValueError("model has no trained phenotypes")
    if c_p in model.trained_phenotypes:
        concept = c_p
    else:
        concept = choose_reference_phenotype(tree, c_p, model.trained_phenotypes)
    if strategy is ReferenceStrategy.POSITIVE_ONLY:
        contexts = [Context.POS]
    else:
        contexts = list(Context)
    available = [
        v
        for ctx in contexts
        if (v := model.vector_of(render_markup(concept, ctx))) is not None
    ]
    if not available:
        raise ValueError(
            f"no mark-up vectors for reference concept {concept!r} "
            f"under strategy {strategy.value}"
        )
    return concept, np.mean(np.stack(available), axis=0)


def cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    """Cosine similarity, or None when either vector has zero norm."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class PartitionCluster:
    id: int
    members: tuple[str, ...]
    representatives: tuple[str, ...] = ()


@dataclass(frozen=True)
class GuidancePartition:
    """Full split of a mention set S into known and unknown parts.

    The p-known cluster members, the p-unknown cluster members, and the
    singletons cover S exactly once. ``p_known`` is the flattened view of the
    p-known clusters.
    """

    task_concept: str
    reference_concept: str
    reference_vector: np.ndarray
    similarity_threshold: float
    e: int
    p_known_clusters: tuple[PartitionCluster, ...]
    p_unknown: tuple[PartitionCluster, ...]
    singles_known: tuple[str, ...]
    singles_unknown: tuple[str, ...]
    cluster_similarity: dict[int, float | None] = field(default_factory=dict)
    single_similarity: dict[str, float | None] = field(default_factory=dict)

    @property
    def p_known(self) -> frozenset[str]:
        return frozenset(m for c in self.p_known_clusters for m in c.members)

    @property
    def known_mention_ids(self) -> frozenset[str]:
        return self.p_known | frozenset(self.singles_known)

    @property
    def all_mention_ids(self) -> frozenset[str]:
        return (
            self.p_known
            | frozenset(m for c in self.p_unknown for m in c.members)
            | frozenset(self.singles_known)
            | frozenset(self.singles_unknown)
        )

    def validate(self) -> None:
        parts = (
            [list(c.members) for c in self.p_known_clusters]
            + [list(c.members) for c in self.p_unknown]
            + [list(self.singles_known), list(self.singles_unknown)]
        )
        flat = [m for part in parts for m in part]
        if len(flat) != len(set(flat)):
            raise ValueError("partition parts are not pairwise disjoint")
        for c in self.p_unknown:
            if len(c.representatives) != min(len(c.members), self.e):
                raise ValueError(
                    f"cluster {c.id}: expected {min(len(c.members), self.e)} "
                    f"representatives, got {len(c.representatives)}"
                )
            if not set(c.representatives) <= set(c.members):
                raise ValueError(f"cluster {c.id}: representatives not members")
        if len(self.p_unknown) > len(flat) - len(self.p_known):
            raise ValueError("more p-unknown groups than unknown mentions")


def classify(
    cs: ClusterSet,
    noise_vectors: Sequence[MentionVector],
    ref: np.ndarray,
    threshold: float,
    e: int,
    *,
    task_concept: str = "",
    reference_concept: str = "",
    unrepresentable: Iterable[str] = (),
    representative_seed: int | None = None,
) -> GuidancePartition:
    """Split clusters and noise singletons at the similarity threshold.

    A cluster is p-known iff cosine(centroid, ref) >= threshold; noise
    mentions are classified individually. Items whose cosine is undefined
    (zero-norm vector) are forced p-unknown with a logged diagnostic, as are
    ``unrepresentable`` mention ids (no vector at all). Representatives are
    the first min(|cluster|, e) members in mention-id order, or a seeded
    random sample when ``representative_seed`` is given.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"similarity threshold must be in [-1, 1], got {threshold}")
    if e < 1:
        raise ValueError("e must be >= 1")
    if cosine(ref, ref) is None:
        raise ValueError("reference vector has zero norm")

    rng = (
        np.random.default_rng(representative_seed)
        if representative_seed is not None
        else None
    )

    def pick_representatives(members: tuple[str, ...]) -> tuple[str, ...]:
        r = min(len(members), e)
        if rng is None:
            return tuple(sorted(members)[:r])
        chosen = rng.choice(len(members), size=r, replace=False)
        return tuple(sorted(members[i] for i in chosen))

    known_clusters: list[PartitionCluster] = []
    unknown_clusters: list[PartitionCluster] = []
    cluster_similarity: dict[int, float | None] = {}
    for cluster in cs.clusters:
        sim = cosine(cluster.centroid, ref)
        cluster_similarity[cluster.id] = sim
        if sim is None:
            log.warning(
                "cluster %s: zero-norm centroid, forced p-unknown", cluster.id
            )
        if sim is not None and sim >= threshold:
            known_clusters.append(PartitionCluster(cluster.id, cluster.members))
        else:
            unknown_clusters.append(
                PartitionCluster(
                    cluster.id, cluster.members, pick_representatives(cluster.members)
                )
            )

    singles_known: list[str] = []
    singles_unknown: list[str] = []
    single_similarity: dict[str, float | None] = {}
    noise_ids = set(cs.noise)
    for mv in sorted(noise_vectors, key=lambda v: v.mention_id):
        if mv.mention_id not in noise_ids:
            raise ValueError(
                f"vector for {mv.mention_id!r} does not match a noise mention"
            )
        sim = cosine(mv.vector, ref)
        single_similarity[mv.mention_id] = sim
        if sim is None:
            log.warning(
                "mention %s: zero-norm vector, forced p-unknown", mv.mention_id
            )
        if sim is not None and sim >= threshold:
            singles_known.append(mv.mention_id)
        else:
            singles_unknown.append(mv.mention_id)
    for mention_id in sorted(unrepresentable):
        single_similarity[mention_id] = None
        singles_unknown.append(mention_id)

    partition = GuidancePartition(
        task_concept=task_concept,
        reference_concept=reference_concept,
        reference_vector=np.asarray(ref, dtype=np.float64),
        similarity_threshold=threshold,
        e=e,
        p_known_clusters=tuple(known_clusters),
        p_unknown=tuple(unknown_clusters),
        singles_known=tuple(singles_known),
        singles_unknown=tuple(sorted(singles_unknown)),
        cluster_similarity=cluster_similarity,
        single_similarity=single_similarity,
    )
    partition.validate()
    return partition


@dataclass(frozen=True)
class AssumptionReport:
    """Structural checks behind the guidance approach.

    one_pattern_per_mention: each mention sits in exactly one cluster or in
    noise. clustered_percentage: how widely patterns are shared. sp: how well
    clusters separate incorrect mentions (None without usable gold labels).
    """

    one_pattern_per_mention: bool
    clustered_percentage: float
    sp: float | None

    def to_dict(self) -> dict:
        return {
            "one_pattern_per_mention": self.one_pattern_per_mention,
            "clustered_percentage": self.clustered_percentage,
            "sp": self.sp,
        }


def assumption_report(
    cs: ClusterSet, annotations: Sequence[MentionAnnotation]
) -> AssumptionReport:
    gold = {
        a.mention_id: a.gold_correct
        for a in annotations
        if a.gold_correct is not None
    }
    try:
        cs.validate()
        one_pattern = True
    except ValueError:
        one_pattern = False
    groups = [list(c.members) for c in cs.clusters]
    clustered = [m for g in groups for m in g]
    sp: float | None = None
    if clustered and all(m in gold for m in clustered):
        labels = {m: gold[m] for m in clustered}
        if any(not v for v in labels.values()):
            sp = separate_power(groups, labels, target=False)
        else:
            log.info("no incorrect mentions among clustered items; sp omitted")
    else:
        log.info("gold labels missing for clustered mentions; sp omitted")
    return AssumptionReport(
        one_pattern_per_mention=one_pattern,
        clustered_percentage=clustered_percentage(cs),
        sp=sp,
    )


def partition_to_dict(partition: GuidancePartition) -> dict:
    return {
        "task_concept": partition.task_concept,
        "reference_concept": partition.reference_concept,
        "reference_vector": [float(x) for x in partition.reference_vector],
        "similarity_threshold": partition.similarity_threshold,
        "e": partition.e,
        "p_known": sorted(partition.p_known),
        "p_known_clusters": [
            {"cluster_id": c.id, "members": list(c.members)}
            for c in partition.p_known_clusters
        ],
        "p_unknown": [
            {
                "cluster_id": c.id,
                "members": list(c.members),
                "representatives": list(c.representatives),
            }
            for c in partition.p_unknown
        ],
        "singles_known": list(partition.singles_known),
        "singles_unknown": list(partition.singles_unknown),
        "cluster_similarity": {
            str(cid): sim for cid, sim in sorted(partition.cluster_similarity.items())
        },
        "single_similarity": dict(sorted(partition.single_similarity.items())),
    }


def save_partition(partition: GuidancePartition, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(partition_to_dict(partition), indent=2, sort_keys=True) + "\n")


def _fmt_similarity(sim: float | None) -> str:
    return "nan" if sim is None else repr(float(sim))


def write_triage_tsv(partition: GuidancePartition, path: str | Path) -> None:
    """Human-readable per-mention triage list, sorted by mention id."""
    rows: list[tuple[str, str, str, str, str]] = []
    for c in partition.p_known_clusters:
        sim = _fmt_similarity(partition.cluster_similarity.get(c.id))
        rows.extend((m, "KNOWN", str(c.id), sim, "0") for m in c.members)
    for c in partition.p_unknown:
        sim = _fmt_similarity(partition.cluster_similarity.get(c.id))
        reps = set(c.representatives)
        rows.extend(
            (m, "UNKNOWN", str(c.id), sim, "1" if m in reps else "0")
            for m in c.members
        )
    for m in partition.singles_known:
        rows.append((m, "KNOWN", "", _fmt_similarity(partition.single_similarity.get(m)), "0"))
    for m in partition.singles_unknown:
        rows.append((m, "UNKNOWN", "", _fmt_similarity(partition.single_similarity.get(m)), "0"))
    rows.sort(key=lambda r: r[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("mention_id\tverdict\tcluster_id\tsimilarity\trepresentative\n")
        for row in rows:
            fh.write("\t".join(row) + "\n")
