"""Guidance-effectiveness metrics: separate power, waste, and accuracy.

Separate power scores how well a grouping isolates the incorrect ("f") items
into their own groups. Duplicate waste is the share of mentions that need no
re-validation. The sampling count models how many blind random draws it takes
to see a minimum number of items from every group, which is dominated by the
rarest group; the difference between that and targeted per-group sampling is
the avoidable imbalance waste.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .guidance import GuidancePartition

SINGLES_CLUSTER_KEY = "singles"


def separate_power(
    groups: Sequence[Sequence[str]],
    labels: Mapping[str, bool],
    target: bool = False,
) -> float:
    """Power of a grouping to separate the ``target``-labelled items.

    For groups C_1..C_k covering the labelled items, returns
    ``sum_i(n_i^2 / |C_i|) / N_t`` where n_i counts target items in C_i and
    N_t counts them overall. 1.0 means every group holding a target item holds
    nothing else.
    """
    flat: list[str] = []
    for g in groups:
        if len(g) == 0:
            raise ValueError("empty group")
        flat.extend(g)
    if len(flat) != len(set(flat)):
        raise ValueError("groups are not disjoint")
    if set(flat) != set(labels):
        raise ValueError("groups must cover exactly the labelled items")
    n_target = sum(1 for v in labels.values() if v == target)
    if n_target == 0:
        raise ValueError("no item carries the target label")
    total = 0.0
    for g in groups:
        n = sum(1 for item in g if labels[item] == target)
        total += (n * n) / len(g)
    return total / n_target


def random_baseline_sp(
    group_sizes: Sequence[int],
    labels: Mapping[str, bool],
    target: bool = False,
    trials: int = 1000,
    seed: int = 0,
) -> float:
    """Mean separate power of random assignments into the given group sizes."""
    sizes = list(group_sizes)
    if any(s <= 0 for s in sizes):
        raise ValueError("group sizes must be positive")
    if sum(sizes) != len(labels):
        raise ValueError("group sizes must sum to the item count")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    is_target = np.array(
        [labels[k] == target for k in sorted(labels)], dtype=np.float64
    )
    n_target = float(is_target.sum())
    if n_target == 0:
        raise ValueError("no item carries the target label")
    bounds = np.cumsum([0] + sizes)
    starts, ends = bounds[:-1], bounds[1:]
    sizes_arr = np.array(sizes, dtype=np.float64)
    rng = np.random.default_rng(seed)
    acc = 0.0
    for _ in range(trials):
        shuffled = is_target[rng.permutation(len(is_target))]
        csum = np.concatenate(([0.0], np.cumsum(shuffled)))
        per_group = csum[ends] - csum[starts]
        acc += float(((per_group**2) / sizes_arr).sum()) / n_target
    return acc / trials


def duplicate_waste(partition: "GuidancePartition", total: int) -> float:
    """Share of mentions needing no validation before model reuse."""
    if total <= 0:
        raise ValueError("total mention count must be positive")
    return (len(partition.p_known) + len(partition.singles_known)) / total


def conv_sampling(cluster_sizes: Sequence[int], e: int) -> float:
    """Blind random draws needed to see ``e`` items of every group.

    ``max_i (S / |C_i|) * min(|C_i|, e)`` with S the total over the groups;
    the rarest group dominates. Kept real-valued (expectation semantics).
    """
    sizes = list(cluster_sizes)
    if e < 1:
        raise ValueError("e must be >= 1")
    if not sizes:
        raise ValueError("cluster sizes must be non-empty")
    if any(s <= 0 for s in sizes):
        raise ValueError("cluster sizes must be positive")
    total = sum(sizes)
    return max((total / c) * min(c, e) for c in sizes)


def imbalance_waste_saved(cluster_sizes: Sequence[int], e: int) -> tuple[float, int]:
    """(saved, guided): blind-sampling effort avoided by per-group sampling.

    guided = sum_i min(|C_i|, e); saved = conv_sampling - guided, provably
    non-negative.
    """
    conv = conv_sampling(cluster_sizes, e)
    guided = sum(min(c, e) for c in cluster_sizes)
    return conv - guided, guided


@dataclass(frozen=True)
class WasteReport:
    duplicate_waste: float
    conv_sampling: float
    guided_samples: int
    imbalance_waste_saved: float
    saved_fraction: float
    e: int

    def to_dict(self) -> dict:
        return {
            "duplicate_waste": self.duplicate_waste,
            "conv_sampling": self.conv_sampling,
            "guided_samples": self.guided_samples,
            "imbalance_waste_saved": self.imbalance_waste_saved,
            "saved_fraction": self.saved_fraction,
            "e": self.e,
        }


def build_waste_report(partition: "GuidancePartition", total: int, e: int) -> WasteReport:
    """Waste metrics for one guidance partition.

    Imbalance figures are computed over the p-unknown clusters (the groups
    that still need validation); unknown singletons are excluded because they
    are unassigned noise, not identified groups. No p-unknown clusters means
    nothing left to sample, so all imbalance figures are zero.
    """
    sizes = [len(c.members) for c in partition.p_unknown]
    if sizes:
        saved, guided = imbalance_waste_saved(sizes, e)
        conv = conv_sampling(sizes, e)
    else:
        saved, guided, conv = 0.0, 0, 0.0
    return WasteReport(
        duplicate_waste=duplicate_waste(partition, total),
        conv_sampling=conv,
        guided_samples=guided,
        imbalance_waste_saved=saved,
        saved_fraction=saved / conv if conv > 0 else 0.0,
        e=e,
    )


@dataclass(frozen=True)
class AccuracyReport:
    macro: float
    micro: float
    per_cluster: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "macro": self.macro,
            "micro": self.micro,
            "per_cluster": dict(sorted(self.per_cluster.items())),
        }


def accuracy(
    partition: "GuidancePartition",
    gold: Mapping[str, bool],
    singles_as_individual: bool = False,
) -> AccuracyReport:
    """Accuracy over the p-known population (cluster members plus singles).

    Micro is the overall fraction correct; macro is the unweighted mean of
    per-cluster accuracies, with the known singles pooled as one
    pseudo-cluster (or, with ``singles_as_individual``, one pseudo-cluster
    per single).
    """
    groups: list[tuple[str, Sequence[str]]] = [
        (str(c.id), c.members) for c in partition.p_known_clusters
    ]
    singles = sorted(partition.singles_known)
    if singles:
        if singles_as_individual:
            groups.extend((f"{SINGLES_CLUSTER_KEY}:{m}", (m,)) for m in singles)
        else:
            groups.append((SINGLES_CLUSTER_KEY, singles))
    counted = [m for _, members in groups for m in members]
    missing = sorted(m for m in counted if m not in gold)
    if missing:
        raise ValueError(
            "gold labels missing for counted mentions: " + ", ".join(missing)
        )
    if not counted:
        raise ValueError("no mentions are within the similarity threshold")
    per_cluster = {
        key: sum(1 for m in members if gold[m]) / len(members)
        for key, members in groups
    }
    micro = sum(1 for m in counted if gold[m]) / len(counted)
    macro = sum(per_cluster.values()) / len(per_cluster)
    return AccuracyReport(macro=macro, micro=micro, per_cluster=per_cluster)


def write_report_json(report: WasteReport | AccuracyReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
