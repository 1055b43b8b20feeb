"""Command-line pipeline: infer -> build-graph -> evaluate -> report.

Every stage reads and writes files, so stages can be rerun and recombined
(e.g. re-evaluating old inference logs with a different tau). All writes are
atomic (temp file + rename). Exit codes: 0 ok, 1 configuration/input error,
2 completed with warnings.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import evaluation, inference
from .config import RunConfig, apply_overrides, load_config
from .dataset import DatasetManifest, ground_truth_for, load_manifest
from .errors import AffmapError, DegenerateGeometry, TooFewRays
from .geometry import localize_observation, select_support_frames
from .providers import (
    HttpDetectionProvider,
    HttpEmbeddingProvider,
    HttpVlmProvider,
    MockDetectionProvider,
    MockVlmProvider,
    ScriptedEmbeddingProvider,
    TestEmbeddingProvider,
)
from .providers.types import DetectionQuery
from .scenegraph import Observation, SceneGraph, save_graph


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load_manifest_or_fail(config: RunConfig) -> DatasetManifest:
    if not config.manifest_path:
        _fail("no manifest path given (use --manifest or a config file)")
    path = Path(config.manifest_path)
    if not path.exists():
        _fail(f"manifest not found: {path}")
    try:
        return load_manifest(path)
    except AffmapError as exc:
        _fail(f"invalid manifest {path}: {exc}")


def _select_robots(manifest: DatasetManifest, config: RunConfig):
    if not config.robot_ids:
        return list(manifest.robots)
    by_id = {r.robot_id: r for r in manifest.robots}
    missing = [rid for rid in config.robot_ids if rid not in by_id]
    if missing:
        _fail(f"robots not in manifest: {missing}")
    return [by_id[rid] for rid in config.robot_ids]


def _embed_provider(config: RunConfig):
    if config.embed == "test":
        return TestEmbeddingProvider()
    if config.embed == "service":
        return HttpEmbeddingProvider()
    path = Path(config.embed)
    if not path.exists():
        _fail(f"embedding provider {config.embed!r}: not 'test', 'service', "
              f"or an existing scripted-embedding file")
    return ScriptedEmbeddingProvider.from_file(path)


def _vlm_provider(config: RunConfig):
    if config.mock_vlm:
        path = Path(config.mock_vlm)
        if not path.exists():
            _fail(f"mock VLM script not found: {path}")
        return MockVlmProvider.from_file(path)
    return HttpVlmProvider(model_id=config.vlm_model)


def _detect_provider(config: RunConfig, calibration):
    if config.mock_detect:
        path = Path(config.mock_detect)
        if not path.exists():
            _fail(f"mock detection script not found: {path}")
        return MockDetectionProvider.from_file(
            path, calibration.image_width, calibration.image_height)
    return HttpDetectionProvider(image_width=calibration.image_width,
                                 image_height=calibration.image_height)


_CONFIG_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="JSON config file; flags override its values."),
    click.option("--manifest", "manifest_path", type=click.Path(), default=None),
    click.option("--output", "output_dir", type=click.Path(), default=None),
    click.option("--robot", "robot_ids", multiple=True,
                 help="Restrict to these robot ids (repeatable)."),
    click.option("--mock-vlm", type=click.Path(), default=None),
    click.option("--mock-detect", type=click.Path(), default=None),
    click.option("--embed", default=None,
                 help="'service', 'test', or a scripted-embedding JSON path."),
    click.option("--tau", type=float, default=None),
    click.option("--distance-d", "distance_d", type=float, default=None),
    click.option("--sample-rate", "sample_rate_n", type=int, default=None),
    click.option("--support-k", "support_k", type=int, default=None),
    click.option("--trials", type=int, default=None),
    click.option("--seed", type=int, default=None),
]


def _with_config(fn):
    for option in reversed(_CONFIG_OPTIONS):
        fn = option(fn)
    return fn


def _build_config(config_path, **overrides) -> RunConfig:
    try:
        base = load_config(config_path) if config_path else RunConfig()
        if not overrides.get("robot_ids"):
            overrides["robot_ids"] = None
        return apply_overrides(base, **overrides)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        _fail(f"bad configuration: {exc}")


@click.group()
def main():
    """Semantic-affordance mapping pipeline."""


@main.command("validate-manifest")
@click.argument("manifest_path", type=click.Path())
def cmd_validate_manifest(manifest_path):
    """Load a manifest and report its contents."""
    config = RunConfig(manifest_path=manifest_path)
    manifest = _load_manifest_or_fail(config)
    n_frames = sum(len(s.frames) for s in manifest.sequences)
    click.echo(f"ok: {len(manifest.sequences)} sequence(s), {n_frames} frame(s), "
               f"{len(manifest.catalog.objects)} object(s), {len(manifest.robots)} "
               f"robot(s), {len(manifest.ground_truth)} ground-truth label(s)")


@main.command("infer")
@_with_config
def cmd_infer(config_path, **overrides):
    """Run the VLM over sampled frames; write JSONL logs per (robot, trial)."""
    config = _build_config(config_path, **overrides)
    manifest = _load_manifest_or_fail(config)
    robots = _select_robots(manifest, config)
    vlm = _vlm_provider(config)
    out_dir = Path(config.output_dir) / "infer"
    warnings = 0
    for robot in robots:
        for trial in range(1, config.trials + 1):
            for sequence in manifest.sequences:
                try:
                    records = inference.run_inference(
                        manifest, sequence, robot, vlm,
                        config.sample_rate_n, trial_id=trial)
                except AffmapError as exc:
                    _fail(f"inference failed for {robot.robot_id}: {exc}")
                warnings += sum(1 for r in records if r.error)
                log_path = out_dir / f"{robot.robot_id}_trial{trial}.jsonl"
                out_dir.mkdir(parents=True, exist_ok=True)
                tmp = log_path.with_name(log_path.name + ".tmp")
                inference.write_records(records, tmp)
                tmp.replace(log_path)
                click.echo(f"wrote {log_path} ({len(records)} records)")
    if warnings:
        click.echo(f"completed with {warnings} failed frame(s)", err=True)
        sys.exit(2)


@main.command("build-graph")
@_with_config
def cmd_build_graph(config_path, **overrides):
    """Fuse logged inferences into a scene-graph file via detection and
    triangulation."""
    config = _build_config(config_path, **overrides)
    manifest = _load_manifest_or_fail(config)
    sequence = manifest.sequences[0]
    detect = _detect_provider(config, sequence.calibration)
    embed = _embed_provider(config)
    log_dir = Path(config.output_dir) / "infer"
    log_files = sorted(log_dir.glob("*.jsonl"))
    if not log_files:
        _fail(f"no inference logs under {log_dir}")
    graph = SceneGraph(tau=config.tau, distance_gate=config.distance_d)
    k = config.support_k_for(sequence.frame_rate)
    poses = {f.frame_index: f for f in sequence.frames}
    unlocalized = 0
    for log_file in log_files:
        try:
            records = inference.read_records(log_file)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            _fail(f"unreadable inference log {log_file}: {exc}")
        for record in records:
            by_object: dict[str, set[str]] = {}
            for affordance, objects in sorted(record.parsed.entries.items()):
                for obj in objects:
                    by_object.setdefault(obj, set()).add(affordance)
            support = select_support_frames(record.frame_index, k, sequence)
            for obj in sorted(by_object):
                detections = {}
                for frame_index in support:
                    frame = sequence.frame(frame_index)
                    hits = detect.detect(DetectionQuery(
                        image=inference._load_image(manifest, frame.image_ref),
                        labels=(obj,), image_ref=frame.image_ref))
                    if hits:
                        detections[frame_index] = hits[0]
                position = None
                try:
                    result = localize_observation(detections, sequence.calibration, poses)
                    position = result.position
                except (TooFewRays, DegenerateGeometry):
                    unlocalized += 1
                graph.insert(Observation(
                    object_label=obj, affordance_labels=by_object[obj],
                    position=position, source_frame=record.frame_index,
                    robot_id=record.robot_id, trial_id=record.trial_id), embed)
    graph_path = Path(config.output_dir) / "graph.json"
    graph_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = graph_path.with_name(graph_path.name + ".tmp")
    save_graph(graph, tmp)
    tmp.replace(graph_path)
    click.echo(f"wrote {graph_path}: {len(graph.entities)} entities, "
               f"{graph.merge_count} merges")
    if unlocalized:
        click.echo(f"warning: {unlocalized} unlocalized observation(s)", err=True)


@main.command("evaluate")
@_with_config
def cmd_evaluate(config_path, **overrides):
    """Score logged inferences against manifest ground truth."""
    config = _build_config(config_path, **overrides)
    manifest = _load_manifest_or_fail(config)
    robots = _select_robots(manifest, config)
    embed = _embed_provider(config)
    log_dir = Path(config.output_dir) / "infer"
    frame_scores: dict[tuple[str, int], list[evaluation.FrameScore]] = {}
    for robot in robots:
        if not any(g.robot_id == robot.robot_id for g in manifest.ground_truth):
            _fail(f"no ground truth in manifest for robot {robot.robot_id!r}")
        log_files = sorted(log_dir.glob(f"{robot.robot_id}_trial*.jsonl"))
        if not log_files:
            _fail(f"no inference logs for robot {robot.robot_id!r} under {log_dir}")
        for log_file in log_files:
            records = inference.read_records(log_file)
            for record in records:
                gt, negatives = ground_truth_for(manifest, record.frame_index,
                                                 robot.robot_id)
                score = evaluation.score_frame(gt, negatives, record.parsed, robot,
                                               config.tau, embed,
                                               catalog=manifest.catalog)
                frame_scores.setdefault((robot.robot_id, record.trial_id),
                                        []).append(score)
    report = evaluation.aggregate(frame_scores)
    eval_dir = Path(config.output_dir) / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_json(report, eval_dir / "report.json.tmp")
    (eval_dir / "report.json.tmp").replace(eval_dir / "report.json")
    evaluation.write_trial_csv(report, eval_dir / "trials.csv.tmp")
    (eval_dir / "trials.csv.tmp").replace(eval_dir / "trials.csv")
    evaluation.write_aggregate_csv(report, eval_dir / "aggregate.csv.tmp")
    (eval_dir / "aggregate.csv.tmp").replace(eval_dir / "aggregate.csv")
    click.echo(f"wrote {eval_dir}/report.json, trials.csv, aggregate.csv "
               f"({len(report.aggregates)} cells)")


@main.command("report")
@click.option("--output", "output_dir", type=click.Path(), default="out")
def cmd_report(output_dir):
    """Reshape evaluation outputs into plot-ready CSV bundles."""
    eval_dir = Path(output_dir) / "eval"
    report_path = eval_dir / "report.json"
    if not report_path.exists():
        _fail(f"no evaluation output at {report_path}")
    try:
        doc = json.loads(report_path.read_text())
        aggregates = doc["aggregates"]
        trials = doc["trials"]
    except (json.JSONDecodeError, KeyError) as exc:
        _fail(f"evaluation output schema mismatch: {exc}")
    report_dir = Path(output_dir) / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    # grouped-bar data: one row per (robot, affordance, cluster)
    bar_lines = ["robot_id,affordance,cluster,f1_mean,f1_std,n_trials"]
    for row in aggregates:
        mean = "" if row["f1_mean"] is None else f"{row['f1_mean']:.6f}"
        std = "" if row["f1_std"] is None else f"{row['f1_std']:.6f}"
        bar_lines.append(f"{row['robot_id']},{row['affordance']},{row['cluster']},"
                         f"{mean},{std},{row['n_trials']}")
    _atomic_write(report_dir / "grouped_bar.csv", "\n".join(bar_lines) + "\n")

    # confusion weights: counts summed over trials, normalized per cell
    sums: dict[tuple[str, str, str], list[int]] = {}
    for row in trials:
        key = (row["robot_id"], row["affordance"], row["cluster"])
        cell = sums.setdefault(key, [0, 0, 0, 0])
        for i, field in enumerate(("tp", "fp", "tn", "fn")):
            cell[i] += row[field]
    conf_lines = ["robot_id,affordance,cluster,tp,fp,tn,fn,tp_w,fp_w,tn_w,fn_w"]
    for (r, a, c), (tp, fp, tn, fn) in sorted(sums.items()):
        total = tp + fp + tn + fn
        weights = [x / total if total else 0.0 for x in (tp, fp, tn, fn)]
        conf_lines.append(f"{r},{a},{c},{tp},{fp},{tn},{fn}," +
                          ",".join(f"{w:.6f}" for w in weights))
    _atomic_write(report_dir / "confusion.csv", "\n".join(conf_lines) + "\n")
    click.echo(f"wrote {report_dir}/grouped_bar.csv, confusion.csv")


if __name__ == "__main__":
    main()
