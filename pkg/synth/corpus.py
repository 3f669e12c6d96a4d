"""Corpus builder and manifest reader.

Layout under the corpus root::

    <scene_seed>/<DIR>_<K>.png     40 lit renders (8 directions x 5 temperatures)
    <scene_seed>/shadow_free.png   ambient-only supervision target
    manifest.tsv                   one row per (source setting -> target setting) pair

The manifest is written last, so a corpus with a manifest is complete.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from config import settings
from core.errors import ConfigError, CorpusError
from core.models import LightSetting
from synth.render import check_resolution, render_scene, render_shadow_free, scene_from_seed
from utils.image_io import write_image
from utils.io import safe_write_text
from utils.logging import get_logger

logger = get_logger("corpus")

MANIFEST_COLUMNS = ("scene_seed", "input_path", "target_path", "shadow_free_path",
                    "src_direction", "src_kelvin")
MANIFEST_HEADER = "\t".join(MANIFEST_COLUMNS)


@dataclass(frozen=True)
class ManifestRow:
    scene_seed: int
    input_path: str
    target_path: str
    shadow_free_path: str
    src_direction: str
    src_kelvin: int

    @property
    def source(self) -> LightSetting:
        return LightSetting(self.src_direction, self.src_kelvin)

    def to_line(self) -> str:
        return "\t".join(str(getattr(self, column)) for column in MANIFEST_COLUMNS)


@dataclass
class CorpusSummary:
    root: Path
    split: str
    scenes: int
    lit_images: int
    shadow_free_images: int
    pairs: int


def scene_seeds(n_scenes: int, seed: int, split: str) -> list[int]:
    """Scene seeds for a run; train, val and test ranges never overlap."""
    if split not in settings.SPLIT_SEED_BASES:
        raise ConfigError(f"split must be one of {', '.join(settings.SPLIT_SEED_BASES)}, got {split!r}")
    if n_scenes < 1:
        raise ConfigError(f"need at least one scene, got {n_scenes}")
    if n_scenes > settings.SEEDS_PER_RUN:
        raise ConfigError(f"at most {settings.SEEDS_PER_RUN} scenes per run, got {n_scenes}")
    if not 0 <= seed <= settings.MAX_RUN_SEED:
        raise ConfigError(f"seed must lie in [0, {settings.MAX_RUN_SEED}], got {seed}")
    base = settings.SPLIT_SEED_BASES[split] + seed * settings.SEEDS_PER_RUN
    return [base + index for index in range(n_scenes)]


def scene_rows(scene_seed: int) -> list[ManifestRow]:
    """Pairs of one scene toward the fixed target, identity pair excluded."""
    target = LightSetting.target()
    target_path = f"{scene_seed}/{target.slug}.png"
    shadow_free_path = f"{scene_seed}/{settings.SHADOW_FREE_NAME}"
    return [
        ManifestRow(scene_seed, f"{scene_seed}/{light.slug}.png", target_path,
                    shadow_free_path, light.direction, light.temperature)
        for light in LightSetting.grid() if light != target
    ]


def format_manifest(rows: list[ManifestRow]) -> str:
    return "".join(line + "\n" for line in [MANIFEST_HEADER] + [row.to_line() for row in rows])


def build_corpus(root: Path, n_scenes: int, resolution: int, seed: int,
                 split: str = "train") -> CorpusSummary:
    root = Path(root)
    check_resolution(resolution)
    seeds = scene_seeds(n_scenes, seed, split)
    if root.exists() and not root.is_dir():
        raise CorpusError(f"output path {root} exists and is not a directory")

    rows: list[ManifestRow] = []
    for i, scene_seed in enumerate(seeds, start=1):
        spec = scene_from_seed(scene_seed, resolution)
        scene_dir = root / str(scene_seed)
        for light in LightSetting.grid():
            write_image(scene_dir / f"{light.slug}.png", render_scene(spec, light))
        write_image(scene_dir / settings.SHADOW_FREE_NAME, render_shadow_free(spec))
        rows.extend(scene_rows(scene_seed))
        logger.debug(f"Rendered scene {i}/{len(seeds)} (seed {scene_seed}, "
                     f"{len(spec.objects)} objects)")

    safe_write_text(root / settings.MANIFEST_NAME, format_manifest(rows))
    summary = CorpusSummary(root, split, len(seeds), len(seeds) * len(LightSetting.grid()),
                            len(seeds), len(rows))
    logger.info(f"🖼️ {split} corpus: {summary.scenes} scenes, {summary.lit_images} lit images, "
                f"{summary.pairs} pairs -> {root}")
    return summary


def read_manifest(root: Path) -> list[ManifestRow]:
    path = Path(root) / settings.MANIFEST_NAME
    if not path.is_file():
        raise CorpusError(f"manifest not found: {path}")
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read manifest {path}: {exc}") from exc
    if not lines or lines[0] != MANIFEST_HEADER:
        raise CorpusError(f"{path}: missing or malformed header")

    rows = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != len(MANIFEST_COLUMNS):
            raise CorpusError(f"{path}:{number}: expected {len(MANIFEST_COLUMNS)} columns, "
                              f"got {len(fields)}")
        try:
            row = ManifestRow(int(fields[0]), fields[1], fields[2], fields[3], fields[4],
                              int(fields[5]))
            row.source
        except (ValueError, ConfigError) as exc:
            raise CorpusError(f"{path}:{number}: {exc}") from exc
        rows.append(row)
    if not rows:
        raise CorpusError(f"{path}: manifest lists no pairs")
    return rows


def missing_files(root: Path, rows: list[ManifestRow]) -> list[Path]:
    root = Path(root)
    seen, missing = set(), []
    for row in rows:
        for rel in (row.input_path, row.target_path, row.shadow_free_path):
            if rel in seen:
                continue
            seen.add(rel)
            if not (root / rel).is_file():
                missing.append(root / rel)
    return missing
