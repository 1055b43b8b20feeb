"""Persistent semantic-affordance scene graph.

Observations stream in one at a time. Each localized observation is matched
against existing entities within the spatial gate d; if the best
alias-similarity exceeds tau the observation fuses into that entity
(alias union, affordance union, running-mean position), otherwise it founds
a new entity. Unlocalized observations live in provisional entities keyed by
exact label.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IoError, SchemaVersionError
from .providers.embedding import SimilarityCache

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_TAU = 0.45
DEFAULT_DISTANCE = 0.1


@dataclass
class Observation:
    object_label: str
    affordance_labels: set[str]
    position: Optional[np.ndarray]  # None = unlocalized
    source_frame: int
    robot_id: str = ""
    trial_id: int = 1

    def __post_init__(self):
        if not self.object_label:
            raise ValueError("object_label must be non-empty")
        if self.position is not None:
            self.position = np.asarray(self.position, dtype=float).reshape(3)


@dataclass
class SceneEntity:
    entity_id: int
    canonical_label: str
    alias_counts: Counter
    affordances: set[str]
    position: Optional[np.ndarray]
    observation_count: int
    localized_count: int
    last_seen_frame: int

    @property
    def aliases(self) -> set[str]:
        return set(self.alias_counts)


@dataclass(frozen=True)
class AssociationDecision:
    matched: bool
    entity_id: int
    similarity: Optional[float] = None


class SpatialHashGrid:
    """Uniform grid with cell size = the distance gate; exact L2 check on top."""

    def __init__(self, cell_size: float):
        if cell_size <= 0:
            raise ValueError("cell_size must be > 0")
        self.cell_size = cell_size
        self._cells: dict[tuple[int, int, int], set[int]] = {}
        self._positions: dict[int, np.ndarray] = {}

    def _cell(self, point: np.ndarray) -> tuple[int, int, int]:
        return tuple(int(math.floor(c / self.cell_size)) for c in point)

    def insert(self, entity_id: int, point: np.ndarray) -> None:
        self.remove(entity_id)
        cell = self._cell(point)
        self._cells.setdefault(cell, set()).add(entity_id)
        self._positions[entity_id] = np.asarray(point, dtype=float)

    def remove(self, entity_id: int) -> None:
        old = self._positions.pop(entity_id, None)
        if old is not None:
            cell = self._cell(old)
            bucket = self._cells.get(cell)
            if bucket is not None:
                bucket.discard(entity_id)
                if not bucket:
                    del self._cells[cell]

    def query(self, point: np.ndarray, radius: float) -> list[tuple[float, int]]:
        """(distance, entity_id) pairs with distance < radius, ascending."""
        point = np.asarray(point, dtype=float)
        reach = int(math.ceil(radius / self.cell_size))
        cx, cy, cz = self._cell(point)
        hits = []
        for dx in range(-reach, reach + 1):
            for dy in range(-reach, reach + 1):
                for dz in range(-reach, reach + 1):
                    for entity_id in self._cells.get((cx + dx, cy + dy, cz + dz), ()):
                        dist = float(np.linalg.norm(self._positions[entity_id] - point))
                        if dist < radius:
                            hits.append((dist, entity_id))
        hits.sort()
        return hits


class SceneGraph:
    def __init__(self, tau: float = DEFAULT_TAU, distance_gate: float = DEFAULT_DISTANCE):
        if not (0.0 < tau < 1.0):
            raise ValueError("tau must be in (0, 1)")
        if distance_gate <= 0:
            raise ValueError("distance gate must be > 0")
        self.tau = tau
        self.distance_gate = distance_gate
        self.entities: dict[int, SceneEntity] = {}
        self._index = SpatialHashGrid(distance_gate)
        self._next_id = 0
        self.merge_count = 0

    # --- association ---

    def associate(self, obs: Observation, embed_provider) -> AssociationDecision:
        """Decide whether obs fuses into an existing entity or founds a new one."""
        sims = SimilarityCache(embed_provider) if not isinstance(
            embed_provider, SimilarityCache) else embed_provider
        if obs.position is None:
            # provisional path: exact label keying only
            for entity_id in sorted(self.entities):
                entity = self.entities[entity_id]
                if entity.position is None and obs.object_label in entity.alias_counts:
                    return AssociationDecision(True, entity_id, 1.0)
            return AssociationDecision(False, self._next_id)
        best: Optional[tuple[float, int]] = None
        for _, entity_id in self._index.query(obs.position, self.distance_gate):
            entity = self.entities[entity_id]
            sim = max(sims.similarity(obs.object_label, alias)
                      for alias in entity.alias_counts)
            if sim > self.tau:
                if best is None or sim > best[0] or (sim == best[0] and entity_id < best[1]):
                    best = (sim, entity_id)
        if best is None:
            return AssociationDecision(False, self._next_id)
        return AssociationDecision(True, best[1], best[0])

    def fuse(self, decision: AssociationDecision, obs: Observation) -> SceneEntity:
        if decision.matched:
            entity = self.entities[decision.entity_id]
            entity.alias_counts[obs.object_label] += 1
            entity.affordances |= set(obs.affordance_labels)
            entity.observation_count += 1
            entity.last_seen_frame = max(entity.last_seen_frame, obs.source_frame)
            if obs.position is not None:
                if entity.position is None:
                    entity.position = obs.position.copy()
                    entity.localized_count = 1
                else:
                    n = entity.localized_count
                    entity.position = (entity.position * n + obs.position) / (n + 1)
                    entity.localized_count = n + 1
                self._index.insert(entity.entity_id, entity.position)
            entity.canonical_label = self._canonical(entity.alias_counts)
            self.merge_count += 1
            return entity
        entity = SceneEntity(
            entity_id=decision.entity_id,
            canonical_label=obs.object_label,
            alias_counts=Counter({obs.object_label: 1}),
            affordances=set(obs.affordance_labels),
            position=None if obs.position is None else obs.position.copy(),
            observation_count=1,
            localized_count=0 if obs.position is None else 1,
            last_seen_frame=obs.source_frame,
        )
        self.entities[entity.entity_id] = entity
        self._next_id = max(self._next_id, entity.entity_id) + 1
        if entity.position is not None:
            self._index.insert(entity.entity_id, entity.position)
        return entity

    def insert(self, obs: Observation, embed_provider) -> AssociationDecision:
        decision = self.associate(obs, embed_provider)
        self.fuse(decision, obs)
        return decision

    @staticmethod
    def _canonical(alias_counts: Counter) -> str:
        # most frequent alias; ties break to the lexicographically smallest
        return min(alias_counts, key=lambda a: (-alias_counts[a], a))

    # --- queries ---

    def query_radius(self, point, radius: float) -> list[SceneEntity]:
        if radius <= 0:
            raise ValueError("radius must be > 0")
        return [self.entities[eid] for _, eid in self._index.query(np.asarray(point), radius)]

    def consolidated_affordances(self, entity: SceneEntity, embed_provider
                                 ) -> list[set[str]]:
        """Reporting view: affordance labels grouped by similarity > tau.

        Stored affordances stay a lossless union; grouping happens only here.
        """
        sims = SimilarityCache(embed_provider)
        labels = sorted(entity.affordances)
        parent = list(range(len(labels)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                if sims.similarity(labels[i], labels[j]) > self.tau:
                    parent[find(i)] = find(j)
        groups: dict[int, set[str]] = {}
        for i, label in enumerate(labels):
            groups.setdefault(find(i), set()).add(label)
        return sorted(groups.values(), key=lambda g: min(g))


def save_graph(graph: SceneGraph, path) -> None:
    """Deterministic JSON serialization; positions as repr strings so floats
    round-trip exactly."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": {"tau": graph.tau, "d": graph.distance_gate},
        "entities": [{
            "id": e.entity_id,
            "canonical": e.canonical_label,
            "aliases": sorted(e.alias_counts),
            "alias_counts": {a: e.alias_counts[a] for a in sorted(e.alias_counts)},
            "affordances": sorted(e.affordances),
            "position": None if e.position is None else [repr(float(x)) for x in e.position],
            "count": e.observation_count,
            "localized_count": e.localized_count,
            "last_seen": e.last_seen_frame,
        } for _, e in sorted(graph.entities.items())],
    }
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write graph to {path}: {exc}") from exc


def load_graph(path) -> SceneGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise IoError(f"cannot read graph from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IoError(f"malformed graph file {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(f"unknown schema_version {doc.get('schema_version')!r}")
    graph = SceneGraph(tau=doc["config"]["tau"], distance_gate=doc["config"]["d"])
    for item in doc["entities"]:
        position = None if item["position"] is None else \
            np.array([float(x) for x in item["position"]])
        entity = SceneEntity(
            entity_id=item["id"],
            canonical_label=item["canonical"],
            alias_counts=Counter(item.get("alias_counts") or {a: 1 for a in item["aliases"]}),
            affordances=set(item["affordances"]),
            position=position,
            observation_count=item["count"],
            localized_count=item.get("localized_count", item["count"]),
            last_seen_frame=item["last_seen"],
        )
        graph.entities[entity.entity_id] = entity
        graph._next_id = max(graph._next_id, entity.entity_id + 1)
        if position is not None:
            graph._index.insert(entity.entity_id, position)
    return graph
