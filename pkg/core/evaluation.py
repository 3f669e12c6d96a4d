"""Metric evaluation over a corpus manifest and the four-variant ablation runner."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from config import settings
from core.checkpoint import load_checkpoint
from core.errors import ConfigError, CorpusError
from core.trainer import Trainer, load_dataset
from analysis.metrics import MetricReport, format_psnr, psnr, ssim
from network.relight import ModelBundle, count_parameters, full_forward, model_shapes
from synth.corpus import ManifestRow, missing_files, read_manifest
from utils.config import TrainConfig
from utils.image_io import downscale, from_tensor, read_pixels, to_tensor
from utils.io import safe_write_json, safe_write_text
from utils.logging import get_logger

logger = get_logger("evaluation")

BASELINES = ("identity", "target")
INFERENCE_BATCH = 4

# Smallest variant first: label, ablation flag, variant slug
ABLATION_VARIANTS = (
    ("Without cal and MS", "cal+ms", "no_cal_no_ms"),
    ("Without cal", "cal", "no_cal"),
    ("Without MS", "ms", "no_ms"),
    ("Full model", None, "full"),
)


# ----------------------------------------
# LPIPS side input
# ----------------------------------------

def read_lpips_file(path: Path, variant: Optional[str] = None) -> dict[str, float]:
    """Per-pair LPIPS values keyed by manifest input_path.

    Lines are ``input_path<TAB>value`` or ``variant<TAB>input_path<TAB>value``;
    three-column lines are kept only when they match ``variant``.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read LPIPS file {path}: {exc.strerror or exc}") from exc
    values: dict[str, float] = {}
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) == 3:
            if variant is None or fields[0] != variant:
                continue
            fields = fields[1:]
        if len(fields) != 2:
            raise ConfigError(f"{path}:{number}: expected 'input_path<TAB>value'")
        try:
            value = float(fields[1])
        except ValueError:
            raise ConfigError(f"{path}:{number}: bad LPIPS value {fields[1]!r}") from None
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{path}:{number}: LPIPS value {value} outside [0, 1]")
        values[fields[0]] = value
    return values


def _mean_lpips(rows: list[ManifestRow], values: dict[str, float], source: Path) -> float:
    missing = [row.input_path for row in rows if row.input_path not in values]
    if missing:
        raise ConfigError(f"{source}: no LPIPS value for {len(missing)} pairs "
                          f"(first: {missing[0]})")
    return float(np.mean([values[row.input_path] for row in rows]))


# ----------------------------------------
# Evaluation
# ----------------------------------------

def _predict(bundle: ModelBundle, images: list[np.ndarray]) -> list[np.ndarray]:
    predictions = []
    for start in range(0, len(images), INFERENCE_BATCH):
        chunk = to_tensor(images[start:start + INFERENCE_BATCH])
        predictions.extend(from_tensor(full_forward(chunk, bundle).y_hat))
    return predictions


def _load(root: Path, rel: str, factor: int) -> np.ndarray:
    return downscale(read_pixels(root / rel), factor).astype(np.float64) / 255.0


def evaluate(data_dir: Path, checkpoint: Optional[Path] = None, baseline: Optional[str] = None,
             lpips_file: Optional[Path] = None, bundle: Optional[ModelBundle] = None,
             variant: Optional[str] = None, resolution: Optional[int] = None) -> MetricReport:
    """Mean PSNR / SSIM (and LPIPS / MPS when supplied) over every manifest pair.

    Images are compared at the model resolution for a checkpoint, else at
    ``resolution`` when given, else at the corpus's native size.
    """
    if sum(x is not None for x in (checkpoint, baseline, bundle)) != 1:
        raise ConfigError("evaluate needs exactly one of a checkpoint or a baseline")
    if baseline is not None and baseline not in BASELINES:
        raise ConfigError(f"baseline must be one of {', '.join(BASELINES)}, got {baseline!r}")

    root = Path(data_dir)
    rows = read_manifest(root)
    missing = missing_files(root, rows)
    if missing:
        raise CorpusError(f"{len(missing)} pair files missing: "
                          + ", ".join(str(p) for p in missing))

    if checkpoint is not None:
        bundle = load_checkpoint(checkpoint).bundle
    if bundle is not None:
        resolution = bundle.arch.resolution
    factor = 1
    if resolution is not None:
        native = read_pixels(root / rows[0].target_path).shape[0]
        if resolution < 1 or native % resolution:
            raise CorpusError(f"corpus resolution {native} is not a multiple of {resolution}")
        factor = native // resolution

    psnr_values, ssim_values = [], []
    targets = [_load(root, row.target_path, factor) for row in rows]
    if bundle is not None:
        predictions = _predict(bundle, [_load(root, row.input_path, factor) for row in rows])
    elif baseline == "identity":
        predictions = [_load(root, row.input_path, factor) for row in rows]
    else:
        predictions = targets
    for prediction, target in zip(predictions, targets):
        psnr_values.append(psnr(prediction, target))
        ssim_values.append(ssim(prediction, target))

    finite = [v for v in psnr_values if not math.isinf(v)]
    if len(finite) < len(psnr_values):
        logger.debug(f"{len(psnr_values) - len(finite)} pairs are identical to their target")
    # Identical pairs are left out of the mean; all-identical reports the sentinel
    mean_psnr = float(np.mean(finite)) if finite else math.inf
    lpips = None
    if lpips_file is not None:
        lpips = _mean_lpips(rows, read_lpips_file(lpips_file, variant), Path(lpips_file))
    report = MetricReport.build(mean_psnr, float(np.mean(ssim_values)), lpips, pairs=len(rows))
    logger.info(f"📊 {len(rows)} pairs: PSNR {format_psnr(report.psnr)}, SSIM {report.ssim:.4f}"
                + (f", LPIPS {report.lpips:.4f}, MPS {report.mps:.4f}" if lpips is not None else ""))
    return report


def write_report(report: MetricReport, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    safe_write_text(out_dir / settings.METRICS_TEXT_NAME, report.to_text())
    safe_write_json(out_dir / settings.METRICS_JSON_NAME, report.to_dict())


# ----------------------------------------
# Ablation
# ----------------------------------------

@dataclass
class AblationRow:
    label: str
    variant: str
    parameters: int
    report: MetricReport


def format_ablation_table(rows: list[AblationRow]) -> str:
    with_lpips = any(row.report.lpips is not None for row in rows)
    header = f"{'Method':<24}{'PSNR':>10}{'SSIM':>10}" + (f"{'LPIPS':>10}" if with_lpips else "")
    lines = [header]
    for row in rows:
        value = format_psnr(row.report.psnr)
        cell = f"{value:>10}" if isinstance(value, str) else f"{value:>10.4f}"
        line = f"{row.label:<24}{cell}{row.report.ssim:>10.4f}"
        if with_lpips:
            line += f"{row.report.lpips:>10.4f}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def run_ablation(config: TrainConfig, data_dir: Path, out_dir: Path,
                 val_dir: Optional[Path] = None,
                 lpips_file: Optional[Path] = None) -> list[AblationRow]:
    """Train and evaluate the four calibration / multi-scale variants with one seed and budget."""
    out_dir = Path(out_dir)
    base = config.arch()
    dataset = load_dataset(data_dir, base.resolution, config.downscale)
    rows = []
    for label, ablation, slug in ABLATION_VARIANTS:
        arch = base.ablate(ablation)
        logger.info(f"🔬 Ablation variant: {label}")
        trainer = Trainer(config, dataset, out_dir / slug, arch=arch)
        trainer.run()
        report = evaluate(val_dir or data_dir, bundle=trainer.bundle, lpips_file=lpips_file,
                          variant=slug)
        rows.append(AblationRow(label, slug, count_parameters(model_shapes(arch)), report))

    safe_write_text(out_dir / settings.ABLATION_TEXT_NAME, format_ablation_table(rows))
    safe_write_json(out_dir / settings.ABLATION_JSON_NAME, [
        {"method": row.label, "variant": row.variant, "parameters": row.parameters,
         **row.report.to_dict()}
        for row in rows
    ])
    return rows
