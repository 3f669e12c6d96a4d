"""Training orchestration: dataset loading, the alternating GAN schedule, logging, checkpoints."""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from config import settings
from core.checkpoint import load_checkpoint, save_checkpoint
from core.errors import CheckpointError, CorpusError, TrainingDivergedError
from core.models import ArchConfig, RunSummary, SceneSample
from core.optim import AdamState, adam_step
from core.params import ParamStore
from core.tensor import Tape, Tensor, add, backward
from analysis.losses import discriminator_losses, generator_losses
from network.relight import ModelBundle, count_parameters, full_forward, model_shapes
from synth.corpus import ManifestRow, missing_files, read_manifest
from utils.config import TrainConfig
from utils.image_io import downscale, read_pixels, to_tensor
from utils.logging import get_logger, run_log

logger = get_logger("trainer")

LOSS_ORDER = ("l1_scene", "l1_shadow", "l1_final", "l1_total",
              "g_adv_scene", "g_adv_shadow", "d_scene", "d_shadow", "total")


# ----------------------------------------
# Dataset
# ----------------------------------------

@dataclass
class PairDataset:
    """All manifest pairs held in memory as (H, W, 3) float32 images in [0, 1]."""
    rows: list[ManifestRow]
    images: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.rows)

    def sample(self, index: int) -> SceneSample:
        row = self.rows[index]
        return SceneSample(self.images[row.input_path], self.images[row.target_path],
                           self.images[row.shadow_free_path], row.source,
                           scene_seed=row.scene_seed)

    def batch(self, indices) -> tuple[Tensor, Tensor, Tensor]:
        samples = [self.sample(int(i)) for i in indices]
        return (to_tensor([s.input_image for s in samples]),
                to_tensor([s.target_image for s in samples]),
                to_tensor([s.shadow_free for s in samples]))


def load_dataset(root: Path, resolution: int, factor: int = 1,
                 limit: Optional[int] = None) -> PairDataset:
    """Read every image the manifest names, reduced by ``factor`` to ``resolution``."""
    root = Path(root)
    rows = read_manifest(root)
    if limit is not None:
        rows = rows[:limit]
    missing = missing_files(root, rows)
    if missing:
        raise CorpusError(f"{len(missing)} corpus files missing: "
                          + ", ".join(str(p) for p in missing))

    images: dict[str, np.ndarray] = {}
    for row in rows:
        for rel in (row.input_path, row.target_path, row.shadow_free_path):
            if rel in images:
                continue
            pixels = downscale(read_pixels(root / rel), factor)
            if pixels.shape[0] != resolution:
                raise CorpusError(f"{root / rel}: reduced size {pixels.shape[0]} does not match "
                                  f"model resolution {resolution} (downscale factor {factor})")
            images[rel] = pixels.astype(np.float32) / 255.0
    logger.info(f"📂 Loaded {len(rows)} pairs ({len(images)} images) from {root}")
    return PairDataset(rows, images)


def batch_indices(seed: int, step: int, size: int, count: int) -> np.ndarray:
    """Indices for ``step``; a pure function of (seed, step) so resumed runs match."""
    return np.random.default_rng([seed, step]).integers(0, count, size=size)


@contextmanager
def frozen(params: ParamStore):
    """Stop weight gradients for ``params`` while still propagating through them."""
    tensors = params.tensors()
    for tensor in tensors:
        tensor.requires_grad = False
    try:
        yield
    finally:
        for tensor in tensors:
            tensor.requires_grad = True


def format_loss_line(step: int, losses: dict[str, float]) -> str:
    parts = [f"{name}={losses[name]:.9g}" for name in LOSS_ORDER if name in losses]
    return "\t".join([str(step)] + parts)


def _adam(config: TrainConfig, state: Optional[AdamState] = None) -> AdamState:
    state = state or AdamState()
    state.learning_rate = config.learning_rate
    state.beta1 = config.beta1
    state.beta2 = config.beta2
    state.epsilon = config.epsilon
    return state


# ----------------------------------------
# Training run
# ----------------------------------------

class Trainer:
    """One training run writing its loss log and checkpoints into ``out_dir``."""

    def __init__(self, config: TrainConfig, dataset: PairDataset, out_dir: Path,
                 arch: Optional[ArchConfig] = None, resume: Optional[Path] = None):
        self.config = config
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.arch = arch or config.arch()
        self.weights = config.loss_weights()
        self.adversarial = config.adversarial and self.weights.adversarial
        self.start_step = 0

        if resume is not None:
            state = load_checkpoint(resume)
            if state.bundle.arch != self.arch:
                raise CheckpointError(f"{resume}: checkpoint architecture ({state.bundle.arch.variant}, "
                                      f"C0={state.bundle.arch.base_channels}) differs from the run's")
            if "generator" not in state.optimizers:
                raise CheckpointError(f"{resume}: not a training checkpoint (no optimizer state)")
            self.bundle = state.bundle
            self.gen_state = _adam(config, state.optimizers["generator"])
            self.disc_state = _adam(config, state.optimizers.get("discriminator"))
            self.start_step = state.step
        else:
            self.bundle = ModelBundle.initialize(self.arch, config.seed)
            self.gen_state = _adam(config)
            self.disc_state = _adam(config)

        self.gen_params = self.bundle.generator_params()
        self.disc_params = self.bundle.discriminator_params()

    def log_header(self) -> None:
        logger.info(f"🚀 Training variant {self.arch.variant}: "
                    f"C0={self.arch.base_channels}, resolution {self.arch.resolution}, "
                    f"batch {self.config.batch_size}, "
                    f"{'adversarial' if self.adversarial else 'reconstruction only'}")
        logger.info(f"   generator parameters: {self.gen_params.num_parameters():,}")
        logger.info(f"   discriminator parameters: {self.disc_params.num_parameters():,}")
        logger.info(f"   {self.arch.variant} total parameters: "
                    f"{count_parameters(model_shapes(self.arch)):,}")
        if self.start_step:
            logger.info(f"   resuming after step {self.start_step}")

    def step(self, t: int) -> dict[str, float]:
        indices = batch_indices(self.config.seed, t, self.config.batch_size, len(self.dataset))
        x, target, shadow_free = self.dataset.batch(indices)
        values: dict[str, float] = {}

        self.gen_params.zero_grad()
        with Tape() as tape:
            outputs = full_forward(x, self.bundle)

            if self.adversarial:
                self.disc_params.zero_grad()
                with Tape() as disc_tape:
                    d_terms = discriminator_losses(self.bundle, outputs, target, shadow_free,
                                                   self.weights)
                    d_total = add(d_terms["d_scene"], d_terms["d_shadow"])
                backward(disc_tape, d_total, leaves=self.disc_params.tensors())
                adam_step(self.disc_params, self.disc_state)
                values.update({name: term.item() for name, term in d_terms.items()})

            with frozen(self.disc_params):
                terms = generator_losses(self.bundle, outputs, target, shadow_free,
                                         self.weights, adversarial=self.adversarial)
        values.update({name: term.item() for name, term in terms.items()})
        for name in LOSS_ORDER:
            if name in values and not math.isfinite(values[name]):
                raise TrainingDivergedError(t, name, values[name])

        backward(tape, terms["total"], leaves=self.gen_params.tensors())
        adam_step(self.gen_params, self.gen_state)
        return values

    def checkpoint(self, path: Path) -> None:
        save_checkpoint(path, self.bundle, {"generator": self.gen_state,
                                            "discriminator": self.disc_state})
        logger.info(f"💾 Wrote checkpoint {path}")

    def run(self) -> RunSummary:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with run_log(self.out_dir / settings.RUN_LOG_NAME):
                return self._run()
        except OSError as exc:
            raise CorpusError(f"cannot write run output in {self.out_dir}: "
                              f"{exc.strerror or exc}") from exc

    def _run(self) -> RunSummary:
        self.log_header()
        log_path = self.out_dir / settings.LOSS_LOG_NAME
        mode = "a" if self.start_step else "w"
        values: dict[str, float] = {}

        with open(log_path, mode, encoding="utf-8") as log:
            for t in range(self.start_step + 1, self.config.steps + 1):
                values = self.step(t)
                line = format_loss_line(t, values)
                log.write(line + "\n")
                log.flush()
                logger.debug(line)
                if t % self.config.log_every == 0 or t == self.config.steps:
                    logger.info(f"step {t}/{self.config.steps}: total={values['total']:.5f} "
                                f"l1_total={values['l1_total']:.5f}")
                if t % self.config.checkpoint_interval == 0:
                    self.checkpoint(self.out_dir / settings.CHECKPOINT_PATTERN.format(step=t))

        final = self.out_dir / settings.FINAL_CHECKPOINT_NAME
        self.checkpoint(final)
        return RunSummary(
            variant=self.arch.variant,
            steps=self.config.steps,
            generator_parameters=self.gen_params.num_parameters(),
            discriminator_parameters=self.disc_params.num_parameters(),
            final_checkpoint=str(final),
            losses=values,
        )


def train(config: TrainConfig, data_dir: Path, out_dir: Path, ablate: Optional[str] = None,
          resume: Optional[Path] = None) -> RunSummary:
    arch = config.arch().ablate(ablate)
    dataset = load_dataset(data_dir, arch.resolution, config.downscale)
    return Trainer(config, dataset, out_dir, arch=arch, resume=resume).run()
