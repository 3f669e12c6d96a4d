"""Binary checkpoint container.

Little-endian layout::

    b"MCNW" | u32 version | u32 n + n bytes ArchConfig text | u32 tensor count
    per tensor: u32 n + n bytes UTF-8 name | 4 x u32 dims | float32 data
    u32 CRC32 of every preceding byte

Training checkpoints add Adam state as ordinary tensor records:
``<param>.adam_m`` / ``<param>.adam_v`` and a (1, 1, 1, 1) float32 step counter per
optimizer (``optim.generator.step``, ``optim.discriminator.step``).
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from config import settings
from core.errors import CheckpointError, ConfigError, ShapeError
from core.models import ArchConfig
from core.optim import AdamState
from core.params import ParamStore
from network.relight import GENERATOR_PREFIXES, ModelBundle, model_shapes
from utils.io import safe_write_bytes

MOMENT_SUFFIXES = (".adam_m", ".adam_v")
OPTIMIZER_NAMES = ("generator", "discriminator")

_U32 = struct.Struct("<I")


def _step_name(optimizer: str) -> str:
    return f"optim.{optimizer}.step"


@dataclass
class TrainingState:
    bundle: ModelBundle
    optimizers: dict[str, AdamState] = field(default_factory=dict)

    @property
    def step(self) -> int:
        return self.optimizers["generator"].step if "generator" in self.optimizers else 0


# ----------------------------------------
# Encoding
# ----------------------------------------

def encode_tensors(arch: ArchConfig, tensors: list[tuple[str, np.ndarray]]) -> bytes:
    chunks = [settings.CHECKPOINT_MAGIC, _U32.pack(settings.CHECKPOINT_VERSION)]
    arch_text = arch.to_text().encode("utf-8")
    chunks += [_U32.pack(len(arch_text)), arch_text, _U32.pack(len(tensors))]
    for name, array in tensors:
        if array.ndim != 4:
            raise CheckpointError(f"tensor {name} must be rank 4, got shape {array.shape}")
        encoded = name.encode("utf-8")
        chunks += [_U32.pack(len(encoded)), encoded, struct.pack("<4I", *array.shape),
                   np.ascontiguousarray(array, dtype="<f4").tobytes()]
    body = b"".join(chunks)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def _owner(name: str) -> str:
    return "generator" if name.startswith(GENERATOR_PREFIXES) else "discriminator"


def state_tensors(state: TrainingState) -> list[tuple[str, np.ndarray]]:
    params = state.bundle.params
    records = [(name, tensor.data) for name, tensor in params.items()]
    for optimizer in OPTIMIZER_NAMES:
        adam = state.optimizers.get(optimizer)
        if adam is None:
            continue
        if adam.step > settings.MAX_STEPS:
            raise CheckpointError(f"{optimizer} step {adam.step} exceeds the largest storable "
                                  f"step {settings.MAX_STEPS}")
        records.append((_step_name(optimizer), np.full((1, 1, 1, 1), adam.step, dtype=np.float32)))
        for name in params:
            if _owner(name) == optimizer and name in adam.m:
                records.append((name + ".adam_m", adam.m[name]))
                records.append((name + ".adam_v", adam.v[name]))
    return records


def save_checkpoint(path: Path, bundle: ModelBundle,
                    optimizers: Optional[dict[str, AdamState]] = None) -> None:
    state = TrainingState(bundle, dict(optimizers or {}))
    safe_write_bytes(Path(path), encode_tensors(bundle.arch, state_tensors(state)))


# ----------------------------------------
# Decoding
# ----------------------------------------

class _Reader:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.payload):
            raise CheckpointError(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_tensors(payload: bytes, source: str = "<checkpoint>"
                   ) -> tuple[ArchConfig, list[tuple[str, np.ndarray]]]:
    if len(payload) < 16:
        raise CheckpointError(f"{source}: file too short to be a checkpoint")
    body, trailer = payload[:-4], payload[-4:]
    if zlib.crc32(body) & 0xFFFFFFFF != _U32.unpack(trailer)[0]:
        raise CheckpointError(f"{source}: CRC mismatch (file corrupt or truncated)")

    reader = _Reader(body, source)
    if reader.take(4) != settings.CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source}: bad magic, not a checkpoint")
    version = reader.u32()
    if version != settings.CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    try:
        arch = ArchConfig.from_text(reader.take(reader.u32()).decode("utf-8"))
    except (ConfigError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: bad architecture record: {exc}") from exc

    tensors = []
    for _ in range(reader.u32()):
        try:
            name = reader.take(reader.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{source}: tensor name is not UTF-8") from exc
        dims = struct.unpack("<4I", reader.take(16))
        if min(dims) < 1:
            raise CheckpointError(f"{source}: tensor {name} has an empty dimension {dims}")
        count = int(np.prod(dims))
        data = np.frombuffer(reader.take(4 * count), dtype="<f4").astype(np.float32)
        tensors.append((name, data.reshape(dims)))
    if reader.offset != len(body):
        raise CheckpointError(f"{source}: {len(body) - reader.offset} trailing bytes")
    return arch, tensors


def _restore(arch: ArchConfig, tensors: list[tuple[str, np.ndarray]], source: str
             ) -> TrainingState:
    records: dict[str, np.ndarray] = {}
    for name, array in tensors:
        if name in records:
            raise CheckpointError(f"{source}: duplicate tensor {name}")
        records[name] = array

    expected = model_shapes(arch)
    arrays = {}
    for name, shape in expected:
        if name not in records:
            raise CheckpointError(f"{source}: missing parameter {name}")
        array = records.pop(name)
        if array.shape != tuple(shape):
            raise CheckpointError(f"{source}: parameter {name} has shape {array.shape}, "
                                  f"expected {tuple(shape)}")
        arrays[name] = array
    try:
        bundle = ModelBundle(arch, ParamStore.from_arrays(arrays))
    except ShapeError as exc:
        raise CheckpointError(f"{source}: {exc}") from exc

    optimizers: dict[str, AdamState] = {}
    for optimizer in OPTIMIZER_NAMES:
        step = records.pop(_step_name(optimizer), None)
        if step is not None:
            optimizers[optimizer] = AdamState(step=int(step.reshape(-1)[0]))
    for name in list(records):
        base, suffix = name[:-7], name[-7:]
        if suffix not in MOMENT_SUFFIXES or base not in arrays:
            raise CheckpointError(f"{source}: unexpected tensor {name}")
        state = optimizers.get(_owner(base))
        if state is None:
            raise CheckpointError(f"{source}: moment {name} without an optimizer step record")
        moment = records.pop(name)
        if moment.shape != arrays[base].shape:
            raise CheckpointError(f"{source}: moment {name} shape {moment.shape} != "
                                  f"parameter shape {arrays[base].shape}")
        (state.m if suffix == ".adam_m" else state.v)[base] = moment
    for optimizer, state in optimizers.items():
        if set(state.m) != set(state.v):
            raise CheckpointError(f"{source}: incomplete Adam moments for {optimizer}")
    return TrainingState(bundle, optimizers)


def load_checkpoint(path: Path) -> TrainingState:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror or exc}") from exc
    arch, tensors = decode_tensors(payload, str(path))
    return _restore(arch, tensors, str(path))
