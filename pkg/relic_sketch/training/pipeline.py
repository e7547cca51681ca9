"""
Relic Sketch - Pipeline
Target preparation, the two-stage training protocol, extraction, directory
evaluation and the ablation harnesses
"""

import copy
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from relic_sketch.config import TrainConfig
from relic_sketch.errors import DataError, ParameterError, TrainingDivergedError
from relic_sketch.evaluation.metrics import (
    MetricReport, average_precision, evaluate_pair, recall, rmse, ssim, summarize,
)
from relic_sketch.fdog.flow import FdogParams
from relic_sketch.fdog.lines import extract_fdog
from relic_sketch.models.checkpoint import load_checkpoint, save_checkpoint
from relic_sketch.models.coarse_net import CoarseNet, build_coarse_net, coarse_predict
from relic_sketch.models.fine_net import FineNet, build_fine_net, fine_predict
from relic_sketch.models.layers import Network
from relic_sketch.parsers.image_parser import GrayImage, load_gray, save_gray
from relic_sketch.parsers.manifest_parser import DatasetManifest, ManifestRecord, save_manifest
from relic_sketch.training.trainer import (
    TrainingHistory, coarse_samples_from_manifest, fine_samples_from_manifest, train_coarse, train_fine,
)
from relic_sketch.utils.artifacts import write_json
from relic_sketch.utils.batch_runner import BatchRunner

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ALPHA_BETA_GRID: List[Tuple[float, float]] = [(0.0, 1.0), (0.05, 0.95), (0.1, 0.9), (0.2, 0.8)]
FUSE_LEVELS_GRID: List[List[int]] = [[5], [5, 4], [5, 4, 3], [5, 4, 3, 2], [5, 4, 3, 2, 1]]
ABLATION_AXES = ("alpha_beta", "fuse_levels")


# ---------------------------------------------------------------- targets

def _fdog_job(params: FdogParams, destination: Path):
    def job(entry: Tuple[int, ManifestRecord]) -> Path:
        # manifest position keeps targets apart when two images share a stem
        index, record = entry
        target = destination / f"{index:04d}_{record.name}.png"
        save_gray(extract_fdog(load_gray(record.image_path), params), target)
        return target
    return job


async def prepare_targets(manifest: DatasetManifest, params: FdogParams, out_dir: Optional[PathLike] = None,
                          manifest_path: Optional[PathLike] = None,
                          runner: Optional[BatchRunner] = None) -> DatasetManifest:
    """
    Fill every missing fdog_target_path by running the FDoG extractor; records that
    already have a target are left alone, so a second run changes nothing.
    """
    params.validate()
    pending = [(i, r) for i, r in enumerate(manifest.records) if r.fdog_target_path is None]
    if not pending:
        logger.info("✅ All records already have FDoG targets")
        if manifest_path is not None:
            await save_manifest(manifest, manifest_path)
        return manifest

    destination = Path(out_dir) if out_dir is not None else manifest.root / "fdog"
    destination.mkdir(parents=True, exist_ok=True)
    runner = runner or BatchRunner()
    targets = await runner.run_all(pending, _fdog_job(params, destination), [r.name for _, r in pending])

    filled = dict(zip((i for i, _ in pending), targets))
    records = [replace(r, fdog_target_path=filled[i]) if i in filled else r for i, r in enumerate(manifest.records)]
    updated = DatasetManifest(manifest.root, records)
    logger.info(f"✅ Prepared {len(pending)} FDoG targets in {destination}")
    if manifest_path is not None:
        await save_manifest(updated, manifest_path)
    return updated


# ---------------------------------------------------------------- training

def _guarded(train, net: Network, out_dir: Path, stage: str, config: TrainConfig):
    """Run a training call; on divergence persist the last finite parameters before re-raising"""
    try:
        return train()
    except TrainingDivergedError as e:
        if e.last_parameters is not None:
            net.load_state(e.last_parameters)
            path = out_dir / f"{net.kind}_{stage}_diverged.rskc"
            save_checkpoint(path, net, e.step, f"{stage}-diverged", config.to_dict())
            logger.error(f"❌ Training diverged at step {e.step}; last finite state saved to {path}")
        raise


def run_train_coarse(manifest: DatasetManifest, config: TrainConfig, out_path: PathLike,
                     init: Optional[PathLike] = None, label_field: Optional[str] = None) -> TrainingHistory:
    """
    Train (or, from an init checkpoint, fine-tune) the coarse net. Fine-tuning
    swaps Y_edge for the expert sketch labels unless label_field says otherwise.
    """
    out_path = Path(out_path)
    if init is not None:
        net, _ = load_checkpoint(init, expected_kind="coarse")
        stage = "finetune"
    else:
        net = build_coarse_net(config.coarse_net, config.seed)
        stage = "pretrain"
    label_field = label_field or ("sketch_label_path" if init is not None else "edge_label_path")
    samples = coarse_samples_from_manifest(manifest, label_field)
    _, history = _guarded(lambda: train_coarse(net, samples, config, stage=stage),
                          net, out_path.parent, stage, config)
    save_checkpoint(out_path, net, len(history.losses), stage, config.to_dict())
    return history


def run_train_fine(manifest: DatasetManifest, coarse_checkpoint: PathLike, config: TrainConfig,
                   out_path: PathLike, label_field: str = "sketch_label_path") -> TrainingHistory:
    """Train the refiner on predictions of a frozen coarse net"""
    out_path = Path(out_path)
    coarse_net, _ = load_checkpoint(coarse_checkpoint, expected_kind="coarse")
    samples = fine_samples_from_manifest(manifest, coarse_net, label_field)
    net = build_fine_net(config.fine_net, config.seed)
    _, history = _guarded(lambda: train_fine(net, samples, config, stage="fine"),
                          net, out_path.parent, "fine", config)
    save_checkpoint(out_path, net, len(history.losses), "fine", config.to_dict())
    return history


@dataclass
class PretrainFinetuneResult:
    pretrain_checkpoint: Path
    finetune_checkpoint: Path
    pretrain_history: TrainingHistory
    finetune_history: TrainingHistory


def run_pretrain_finetune(natural: DatasetManifest, relic: DatasetManifest, config: TrainConfig,
                          out_dir: PathLike) -> PretrainFinetuneResult:
    """
    Stage 1 trains on natural images with (Y_FDoG, Y_edge); stage 2 resumes from
    the stage-1 checkpoint on relic images with (Y_FDoG, expert sketch).
    """
    config.validate()
    out_dir = Path(out_dir)
    natural_samples = coarse_samples_from_manifest(natural, "edge_label_path")
    relic_samples = coarse_samples_from_manifest(relic, "sketch_label_path")

    net = build_coarse_net(config.coarse_net, config.seed)
    _, pretrain_history = _guarded(lambda: train_coarse(net, natural_samples, config, stage="pretrain"),
                                   net, out_dir, "pretrain", config)
    pretrain_path = out_dir / "coarse_pretrain.rskc"
    save_checkpoint(pretrain_path, net, len(pretrain_history.losses), "pretrain", config.to_dict())

    net, _ = load_checkpoint(pretrain_path, expected_kind="coarse")
    _, finetune_history = _guarded(
        lambda: train_coarse(net, relic_samples, config, steps=config.stage2_steps, stage="finetune"),
        net, out_dir, "finetune", config)
    finetune_path = out_dir / "coarse_finetune.rskc"
    save_checkpoint(finetune_path, net, len(finetune_history.losses), "finetune", config.to_dict())
    logger.info(f"✅ Pretrain/fine-tune finished: {pretrain_path.name} -> {finetune_path.name}")
    return PretrainFinetuneResult(pretrain_path, finetune_path, pretrain_history, finetune_history)


# ---------------------------------------------------------------- extraction

def extract_image(image: GrayImage, coarse_net: CoarseNet, fine_net: Optional[FineNet] = None) -> GrayImage:
    """Coarse fused map, refined by the fine net when one is given"""
    coarse = coarse_predict(coarse_net, image)
    if fine_net is None:
        return coarse
    return fine_predict(fine_net, coarse)


def extract(image: GrayImage, coarse_checkpoint: PathLike, fine_checkpoint: Optional[PathLike],
            out_path: PathLike) -> GrayImage:
    """
    Run the two-stage extractor (coarse only when fine_checkpoint is None) and
    write a black-on-white PNG plus the raw probability map as .npy next to it
    """
    coarse_net, _ = load_checkpoint(coarse_checkpoint, expected_kind="coarse")
    fine_net = None
    if fine_checkpoint is not None:
        fine_net, _ = load_checkpoint(fine_checkpoint, expected_kind="fine")
    sketch = extract_image(image, coarse_net, fine_net)

    out_path = Path(out_path)
    save_gray(sketch, out_path, display_invert=True)
    raw_path = out_path.with_suffix(".npy")
    try:
        np.save(raw_path, sketch.pixels)
    except OSError as e:
        raise DataError(f"Failed to write {raw_path}: {e}") from e
    logger.info(f"✅ Sketch written to {out_path} (raw map {raw_path.name})")
    return sketch


# ---------------------------------------------------------------- evaluation

def _pair_files(pred_dir: Path, gt_dir: Path) -> List[Tuple[str, Path, Path]]:
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        raise DataError(f"prediction and ground-truth directories must exist: {pred_dir}, {gt_dir}")
    suffixes = {".png", ".pgm"}
    preds = {p.stem: p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in suffixes}
    gts = {p.stem: p for p in sorted(gt_dir.iterdir()) if p.suffix.lower() in suffixes}
    names = sorted(set(preds) & set(gts))
    if not names:
        raise DataError(f"no matching file names between {pred_dir} and {gt_dir}")
    unmatched = sorted(set(preds) ^ set(gts))
    if unmatched:
        logger.warning(f"⚠️ {len(unmatched)} files have no counterpart and are skipped: {unmatched[:5]}")
    return [(name, preds[name], gts[name]) for name in names]


async def evaluate_dirs(pred_dir: PathLike, gt_dir: PathLike, d_max: Optional[float] = None,
                        threshold: float = 0.5, pred_invert: bool = True, gt_invert: bool = False,
                        runner: Optional[BatchRunner] = None) -> MetricReport:
    """Pairs files by name and averages rmse/ssim/ap/recall over the pairs"""
    pairs = _pair_files(Path(pred_dir), Path(gt_dir))

    def job(pair):
        name, pred_path, gt_path = pair
        row = evaluate_pair(load_gray(pred_path, pred_invert), load_gray(gt_path, gt_invert), d_max, threshold)
        return {"name": name, **row}

    runner = runner or BatchRunner()
    rows = await runner.run_all(pairs, job, [p[0] for p in pairs])
    report = summarize(rows)
    logger.info(f"📊 Evaluated {len(rows)} images: RMSE={report.rmse:.4f} SSIM={report.ssim:.4f} "
                f"AP={report.ap:.4f} recall={report.recall:.4f}")
    return report


# ---------------------------------------------------------------- ablation

def _evaluation_records(manifest: DatasetManifest, label_field: str) -> List[ManifestRecord]:
    records = [r for r in manifest.split("test") if getattr(r, label_field) is not None]
    if not records:
        logger.warning("⚠️ No labelled test records; evaluating on the training split")
        records = manifest.require(label_field, "train")
    return records


def _label_field(manifest: DatasetManifest) -> str:
    train = manifest.split("train")
    if train and all(r.sketch_label_path is not None for r in train):
        return "sketch_label_path"
    return "edge_label_path"


async def _score(records: Sequence[ManifestRecord], label_field: str, predict, metrics: Dict,
                 runner: BatchRunner) -> Dict[str, float]:
    def job(record: ManifestRecord):
        prediction = predict(load_gray(record.image_path))
        truth = load_gray(getattr(record, label_field))
        return {key: fn(prediction, truth) for key, fn in metrics.items()}

    rows = await runner.run_all(list(records), job, [r.name for r in records])
    return {key: float(np.mean([row[key] for row in rows])) for key in metrics}


async def ablate(config: TrainConfig, manifest: DatasetManifest, axis: str,
                 grid: Optional[Sequence] = None, out_path: Optional[PathLike] = None,
                 runner: Optional[BatchRunner] = None) -> Dict:
    """
    alpha_beta: train one coarse net per (alpha, beta) point and report recall/RMSE.
    fuse_levels: train one coarse net, then one refiner per level set, reporting RMSE/SSIM/AP
    next to the coarse net scored alone under "coarse_only".
    """
    if axis not in ABLATION_AXES:
        raise ParameterError(f"axis must be one of {ABLATION_AXES}, got {axis!r}")
    config.validate()
    runner = runner or BatchRunner()
    label_field = _label_field(manifest)
    coarse_samples = coarse_samples_from_manifest(manifest, label_field)
    evaluation = _evaluation_records(manifest, label_field)
    rows = []

    if axis == "alpha_beta":
        for alpha, beta in (grid or ALPHA_BETA_GRID):
            point = copy.deepcopy(config)
            point.alpha, point.beta = float(alpha), float(beta)
            point.validate()
            net, _ = train_coarse(build_coarse_net(point.coarse_net, point.seed), coarse_samples, point,
                                  stage=f"ablate-{alpha}/{beta}")
            scores = await _score(evaluation, label_field, lambda image, net=net: coarse_predict(net, image),
                                  {"recall": recall, "rmse": rmse}, runner)
            rows.append({"alpha": point.alpha, "beta": point.beta, **scores})
            logger.info(f"📊 alpha={alpha} beta={beta}: recall={scores['recall']:.4f} rmse={scores['rmse']:.4f}")
    else:
        coarse_net, _ = train_coarse(build_coarse_net(config.coarse_net, config.seed), coarse_samples, config,
                                     stage="ablate-coarse")
        baseline = await _score(evaluation, label_field, lambda image: coarse_predict(coarse_net, image),
                                {"rmse": rmse, "ssim": ssim, "ap": average_precision}, runner)
        logger.info(f"📊 coarse only: rmse={baseline['rmse']:.4f} ssim={baseline['ssim']:.4f} ap={baseline['ap']:.4f}")
        fine_samples = fine_samples_from_manifest(manifest, coarse_net, label_field)
        for levels in (grid or FUSE_LEVELS_GRID):
            point = copy.deepcopy(config)
            point.fine_net.fuse_levels = sorted(int(level) for level in levels)
            point.validate()
            fine_net, _ = train_fine(build_fine_net(point.fine_net, point.seed), fine_samples, point,
                                     stage=f"ablate-{'-'.join(map(str, levels))}")

            def predict(image, fine_net=fine_net):
                return extract_image(image, coarse_net, fine_net)

            scores = await _score(evaluation, label_field, predict,
                                  {"rmse": rmse, "ssim": ssim, "ap": average_precision}, runner)
            rows.append({"fuse_levels": sorted(levels, reverse=True), **scores})
            logger.info(f"📊 fuse_levels={sorted(levels, reverse=True)}: rmse={scores['rmse']:.4f} "
                        f"ssim={scores['ssim']:.4f} ap={scores['ap']:.4f}")

    report = {"axis": axis, "label_field": label_field, "rows": rows}
    if axis == "fuse_levels":
        report["coarse_only"] = baseline
    if out_path is not None:
        await write_json(out_path, report)
    return report
