"""Semantic-matching confusion accounting and F1 aggregation.

Per frame: ground-truth affordance labels are matched one-to-one against
predicted labels by embedding similarity (strict > tau, greedy
highest-similarity-first). Conditional on each affordance match, objects are
matched the same way; matched object pairs are TPs, unmatched ground-truth
positives are FNs. Predictions under affordances outside the robot's
vocabulary are logged out-of-scope and excluded from FP counting. Remaining
in-scope predicted claims are FPs; labelled-negative pairs with no matching
claim are TNs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import AnnotationSet, ObjectCatalog, RobotProfile
from .providers.embedding import SimilarityCache

UNMATCHED_CLUSTER = "unmatched"


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tp, self.fp, self.tn, self.fn)


def f1(counts: ConfusionCounts) -> tuple[float, bool]:
    """(score, vacuous). tp=fp=fn=0 means nothing to find and nothing claimed;
    scored 1.0 with the vacuous flag so aggregates can exclude it."""
    if counts.tp == 0 and counts.fp == 0 and counts.fn == 0:
        return 1.0, True
    return 2.0 * counts.tp / (2.0 * counts.tp + counts.fp + counts.fn), False


def similarity_matrix(gt_labels: list[str], pred_labels: list[str], sims
                      ) -> np.ndarray:
    """|GT| x |pred| pairwise label similarities, floored at 0."""
    if not isinstance(sims, SimilarityCache):
        sims = SimilarityCache(sims)
    matrix = np.zeros((len(gt_labels), len(pred_labels)))
    for i, g in enumerate(gt_labels):
        for j, p in enumerate(pred_labels):
            matrix[i, j] = max(0.0, sims.similarity(g, p))
    return matrix


def match(sim_matrix: np.ndarray, tau: float) -> set[tuple[int, int]]:
    """Greedy one-to-one matching: repeatedly take the highest-similarity
    unmatched pair with sim > tau; ties break on (lower row, lower column)."""
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must be in (0, 1)")
    rows, cols = sim_matrix.shape
    candidates = sorted(
        ((float(sim_matrix[i, j]), i, j)
         for i in range(rows) for j in range(cols)
         if sim_matrix[i, j] > tau),
        key=lambda t: (-t[0], t[1], t[2]))
    used_rows: set[int] = set()
    used_cols: set[int] = set()
    pairs: set[tuple[int, int]] = set()
    for _, i, j in candidates:
        if i not in used_rows and j not in used_cols:
            pairs.add((i, j))
            used_rows.add(i)
            used_cols.add(j)
    return pairs


@dataclass
class FrameScore:
    counts: ConfusionCounts
    cells: dict[tuple[str, str], ConfusionCounts]  # (affordance, cluster) -> counts
    out_of_scope: list[tuple[str, list[str]]]
    positive_pair_count: int


def _cluster_of(label: str, catalog: Optional[ObjectCatalog]) -> str:
    if catalog is None:
        return UNMATCHED_CLUSTER
    cluster = catalog.cluster_of_label(label)
    return cluster if cluster is not None else UNMATCHED_CLUSTER


def score_frame(gt: AnnotationSet, negatives: list[tuple[str, str]],
                pred: AnnotationSet, robot: RobotProfile, tau: float,
                embed_provider, catalog: Optional[ObjectCatalog] = None
                ) -> FrameScore:
    """Confusion counts for one (frame, robot), plus the out-of-scope log."""
    sims = SimilarityCache(embed_provider) if not isinstance(
        embed_provider, SimilarityCache) else embed_provider
    cells: dict[tuple[str, str], ConfusionCounts] = {}

    def cell(affordance: str, cluster: str) -> ConfusionCounts:
        return cells.setdefault((affordance, cluster), ConfusionCounts())

    # (1) vocabulary gate on predicted affordances
    out_of_scope: list[tuple[str, list[str]]] = []
    in_scope: list[str] = []
    for pa in pred.entries:
        if any(sims.similarity(pa, v) > tau for v in robot.affordances):
            in_scope.append(pa)
        else:
            out_of_scope.append((pa, sorted(pred.entries[pa])))

    gt_affs = list(gt.entries)
    aff_pairs = match(similarity_matrix(gt_affs, in_scope, sims), tau) if gt_affs and in_scope else set()
    matched_gt = {i: j for i, j in aff_pairs}
    matched_pred_aff = {in_scope[j]: gt_affs[i] for i, j in aff_pairs}

    counts = ConfusionCounts()
    positive_pairs = sum(len(objs) for objs in gt.entries.values())
    consumed: set[tuple[str, str]] = set()

    # (2) object matching conditional on affordance matching
    for i, gt_aff in enumerate(gt_affs):
        gt_objs = sorted(gt.entries[gt_aff])
        if i in matched_gt:
            pred_aff = in_scope[matched_gt[i]]
            pred_objs = sorted(pred.entries[pred_aff])
            obj_pairs = match(similarity_matrix(gt_objs, pred_objs, sims), tau)
            matched_gt_objs = {k for k, _ in obj_pairs}
            for k, l in obj_pairs:
                counts.tp += 1
                cell(gt_aff, _cluster_of(gt_objs[k], catalog)).tp += 1
                consumed.add((pred_aff, pred_objs[l]))
            for k, obj in enumerate(gt_objs):
                if k not in matched_gt_objs:
                    counts.fn += 1
                    cell(gt_aff, _cluster_of(obj, catalog)).fn += 1
        else:
            # (3) entirely unmatched ground-truth affordance: all positives FN
            for obj in gt_objs:
                counts.fn += 1
                cell(gt_aff, _cluster_of(obj, catalog)).fn += 1

    # residual in-scope claims are false positives
    residual = [(pa, po) for pa in in_scope for po in sorted(pred.entries[pa])
                if (pa, po) not in consumed]

    # (4) labelled negatives: TN unless some residual claim matches them
    matched_negatives: set[int] = set()
    for idx, (neg_aff, neg_obj) in enumerate(negatives):
        if any(sims.similarity(neg_aff, pa) > tau and sims.similarity(neg_obj, po) > tau
               for pa, po in residual):
            matched_negatives.add(idx)
        else:
            counts.tn += 1
            cell(neg_aff, _cluster_of(neg_obj, catalog)).tn += 1

    labelled_objects = sorted({o for objs in gt.entries.values() for o in objs}
                              | {o for _, o in negatives})
    for pa, po in residual:
        counts.fp += 1
        # cluster via the best-matching labelled object, else "unmatched"
        best_obj = None
        best_sim = tau
        for obj in labelled_objects:
            s = sims.similarity(po, obj)
            if s > best_sim:
                best_obj, best_sim = obj, s
        cluster = _cluster_of(best_obj, catalog) if best_obj else UNMATCHED_CLUSTER
        # affordance cell: matched GT affordance, else best vocabulary label
        if pa in matched_pred_aff:
            aff_cell = matched_pred_aff[pa]
        else:
            aff_cell = max(robot.affordances, key=lambda v: (sims.similarity(pa, v), v))
        cell(aff_cell, cluster).fp += 1

    return FrameScore(counts=counts, cells=cells, out_of_scope=out_of_scope,
                      positive_pair_count=positive_pairs)


# --- aggregation across frames, trials, robots ---

@dataclass
class CellScore:
    counts: ConfusionCounts
    f1: float
    vacuous: bool


@dataclass
class CellAggregate:
    f1_mean: Optional[float]
    f1_std: Optional[float]
    n_trials: int  # non-vacuous trials contributing to the mean


@dataclass
class EvalReport:
    trial_cells: dict[tuple[str, str, str, int], CellScore]
    aggregates: dict[tuple[str, str, str], CellAggregate]
    out_of_scope: list[dict]

    def to_dict(self) -> dict:
        return {
            "trials": [{
                "robot_id": r, "affordance": a, "cluster": c, "trial": t,
                "tp": s.counts.tp, "fp": s.counts.fp, "tn": s.counts.tn,
                "fn": s.counts.fn, "f1": s.f1, "vacuous": s.vacuous,
            } for (r, a, c, t), s in sorted(self.trial_cells.items())],
            "aggregates": [{
                "robot_id": r, "affordance": a, "cluster": c,
                "f1_mean": g.f1_mean, "f1_std": g.f1_std, "n_trials": g.n_trials,
            } for (r, a, c), g in sorted(self.aggregates.items())],
            "out_of_scope": self.out_of_scope,
        }


def aggregate(frame_scores: dict[tuple[str, int], list[FrameScore]]) -> EvalReport:
    """Fold per-frame scores into per-(robot, affordance, cluster) cells.

    frame_scores maps (robot_id, trial) to that run's per-frame results.
    Counts are summed within a trial; F1 mean and sample std are taken across
    trials, excluding vacuous cells.
    """
    if not frame_scores:
        raise ValueError("no frame scores to aggregate")
    trial_cells: dict[tuple[str, str, str, int], CellScore] = {}
    out_of_scope: list[dict] = []
    sums: dict[tuple[str, str, str, int], ConfusionCounts] = {}
    for (robot_id, trial), scores in frame_scores.items():
        for score in scores:
            for (affordance, cluster), counts in score.cells.items():
                key = (robot_id, affordance, cluster, trial)
                sums[key] = sums.get(key, ConfusionCounts()) + counts
            for pred_aff, objs in score.out_of_scope:
                out_of_scope.append({"robot_id": robot_id, "trial": trial,
                                     "affordance": pred_aff, "objects": objs})
    # every cell appears in every trial of its robot, so absent trials count
    # as empty (vacuous) rather than dropping out of the std
    all_trials: dict[str, set[int]] = {}
    for robot_id, trial in frame_scores:
        all_trials.setdefault(robot_id, set()).add(trial)
    cell_keys = {(r, a, c) for (r, a, c, _) in sums}
    for r, a, c in cell_keys:
        for trial in all_trials[r]:
            counts = sums.get((r, a, c, trial), ConfusionCounts())
            value, vacuous = f1(counts)
            trial_cells[(r, a, c, trial)] = CellScore(counts, value, vacuous)

    aggregates: dict[tuple[str, str, str], CellAggregate] = {}
    for r, a, c in cell_keys:
        values = [s.f1 for (rr, aa, cc, _), s in trial_cells.items()
                  if (rr, aa, cc) == (r, a, c) and not s.vacuous]
        if not values:
            aggregates[(r, a, c)] = CellAggregate(None, None, 0)
            continue
        mean = sum(values) / len(values)
        std = (math.sqrt(sum((v - mean) ** 2 for v in values) / (len(values) - 1))
               if len(values) >= 2 else None)
        aggregates[(r, a, c)] = CellAggregate(mean, std, len(values))
    return EvalReport(trial_cells=trial_cells, aggregates=aggregates,
                      out_of_scope=out_of_scope)


# --- emission ---

def write_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def write_trial_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["robot_id", "affordance", "cluster", "trial",
                         "tp", "fp", "tn", "fn", "f1", "vacuous"])
        for (r, a, c, t), s in sorted(report.trial_cells.items()):
            writer.writerow([r, a, c, t, s.counts.tp, s.counts.fp, s.counts.tn,
                             s.counts.fn, f"{s.f1:.6f}", str(s.vacuous).lower()])


def write_aggregate_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["robot_id", "affordance", "cluster",
                         "f1_mean", "f1_std", "n_trials"])
        for (r, a, c), g in sorted(report.aggregates.items()):
            writer.writerow([
                r, a, c,
                "" if g.f1_mean is None else f"{g.f1_mean:.6f}",
                "" if g.f1_std is None else f"{g.f1_std:.6f}",
                g.n_trials,
            ])
