"""Graph-based merging of fragmented proposals.

Selected proposals become nodes of an undirected graph; an edge joins two
proposals when both their box overlap and their region-feature similarity
clear fixed thresholds. Each multi-node connected component is collapsed
into one envelope box, which is admitted only if its entropy does not
exceed the worst entropy already present in the image's selected set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geometry import envelope, pairwise_iou
from .selection import ScoredProposal, ScoringContext

__all__ = [
    "ProposalGraph",
    "MergeConfig",
    "build_graph",
    "connected_components",
    "merged_initial_score",
    "merge_components",
    "merge_image",
]


@dataclass(frozen=True)
class ProposalGraph:
    """Symmetric adjacency over proposal indices, no self-edges."""

    num_nodes: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.num_nodes, self.num_nodes):
            raise ValidationError(
                f"adjacency shape {adj.shape} does not match {self.num_nodes} nodes"
            )
        if adj.size and np.any(np.diag(adj)):
            raise ValidationError("self-edges are not allowed")
        if not np.array_equal(adj, adj.T):
            raise ValidationError("adjacency must be symmetric")
        object.__setattr__(self, "adjacency", adj)

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(ii.tolist(), jj.tolist()))


@dataclass(frozen=True)
class MergeConfig:
    """Edge thresholds for the proposal graph.

    ``feature_threshold`` may exceed 1 (up to 2) to disable feature-based
    edges entirely; cosine similarity never reaches such values.
    """

    iou_threshold: float = 0.5
    feature_threshold: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.iou_threshold < 1.0:
            raise ValidationError(
                f"iou_threshold must lie in (0, 1), got {self.iou_threshold}"
            )
        if not 0.0 < self.feature_threshold < 2.0:
            raise ValidationError(
                f"feature_threshold must lie in (0, 2), got {self.feature_threshold}"
            )


def build_graph(
    selected: Sequence[ScoredProposal], config: MergeConfig
) -> ProposalGraph:
    """Edge iff pairwise IoU and embedding cosine both reach their thresholds."""
    n = len(selected)
    for index, proposal in enumerate(selected):
        if proposal.embedding is None:
            raise ValidationError(
                f"proposal {index} (box {proposal.box.as_tuple()}) carries no embedding"
            )
    if n == 0:
        return ProposalGraph(0, np.zeros((0, 0), dtype=bool))

    ious = pairwise_iou([p.box for p in selected])
    vectors = np.stack([np.asarray(p.embedding, dtype=np.float64) for p in selected])
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm embedding in selected set")
    unit = vectors / norms[:, None]
    cosines = np.clip(unit @ unit.T, -1.0, 1.0)

    adjacency = (ious >= config.iou_threshold) & (cosines >= config.feature_threshold)
    np.fill_diagonal(adjacency, False)
    adjacency &= adjacency.T
    return ProposalGraph(n, adjacency)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Anchor to the smaller index so component ids are stable.
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def connected_components(graph: ProposalGraph) -> list[list[int]]:
    """Maximal connected node groups, ordered by smallest member index."""
    uf = _UnionFind(graph.num_nodes)
    ii, jj = np.nonzero(np.triu(graph.adjacency, k=1))
    for a, b in zip(ii.tolist(), jj.tolist()):
        uf.union(a, b)
    groups: dict[int, list[int]] = {}
    for node in range(graph.num_nodes):
        groups.setdefault(uf.find(node), []).append(node)
    return [sorted(groups[root]) for root in sorted(groups)]


def merged_initial_score(members: Sequence[ScoredProposal]) -> float:
    """Initial score assigned to a merged proposal: max over members."""
    if not members:
        raise ValidationError("merged_initial_score needs a non-empty component")
    return max(p.initial_score for p in members)


def merge_components(
    components: Sequence[Sequence[int]],
    selected: Sequence[ScoredProposal],
    context: ScoringContext,
) -> list[ScoredProposal]:
    """Collapse multi-node components into admitted envelope proposals.

    Singleton components produce nothing. Each candidate envelope is
    re-embedded and re-scored through ``context``; candidates whose entropy
    exceeds the maximum entropy among the image's selected proposals are
    discarded.
    """
    if not selected:
        return []
    max_entropy = max(p.entropy for p in selected)
    merged: list[ScoredProposal] = []
    for component in components:
        if len(component) < 2:
            continue
        members = [selected[i] for i in component]
        candidate_box = envelope([p.box for p in members])
        candidate = context.score_box(
            candidate_box, merged_initial_score(members), provenance="merged"
        )
        if candidate.entropy > max_entropy:
            continue
        merged.append(candidate)
    return merged


def merge_image(
    selected: Sequence[ScoredProposal],
    context: ScoringContext,
    config: MergeConfig,
) -> tuple[list[ScoredProposal], list[ScoredProposal]]:
    """Full merge pass over one image's selected proposals.

    Returns (combined, merged): the selected set with admitted merged
    proposals appended and re-sorted descending by combined score, plus the
    merged proposals alone.
    """
    graph = build_graph(selected, config)
    components = connected_components(graph)
    merged = merge_components(components, selected, context)
    combined = list(selected) + merged
    order = sorted(
        range(len(combined)),
        key=lambda i: (
            -(combined[i].objectness if combined[i].objectness is not None else -math.inf),
            combined[i].entropy,
            i,
        ),
    )
    return [combined[i] for i in order], merged
