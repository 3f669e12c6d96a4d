"""Tests for the binary checkpoint container."""
import struct

import numpy as np
import pytest

from config import settings
from core.checkpoint import decode_tensors, encode_tensors, load_checkpoint, save_checkpoint
from core.errors import CheckpointError
from core.models import ArchConfig
from core.optim import AdamState, adam_step
from network.relight import ModelBundle


@pytest.fixture
def bundle(tiny_arch):
    return ModelBundle.initialize(tiny_arch, seed=5)


def _trained_optimizer(store, rng):
    state = AdamState()
    for _ in range(2):
        for tensor in store.tensors():
            tensor.grad = rng.standard_normal(tensor.shape).astype(tensor.dtype)
        adam_step(store, state)
    return state


class TestSaveLoad:
    def test_weights_round_trip(self, tmp_path, bundle):
        path = tmp_path / "model.mcnw"
        save_checkpoint(path, bundle)
        state = load_checkpoint(path)
        assert state.bundle.arch == bundle.arch
        assert state.step == 0
        assert state.bundle.params.names() == bundle.params.names()
        for name, tensor in bundle.params.items():
            np.testing.assert_array_equal(state.bundle.params[name].data, tensor.data)

    def test_save_is_byte_stable(self, tmp_path, bundle):
        first, second = tmp_path / "a.mcnw", tmp_path / "b.mcnw"
        save_checkpoint(first, bundle)
        save_checkpoint(second, load_checkpoint(first).bundle)
        assert first.read_bytes() == second.read_bytes()

    def test_adam_state_round_trip(self, tmp_path, bundle, rng):
        optimizers = {
            "generator": _trained_optimizer(bundle.generator_params(), rng),
            "discriminator": _trained_optimizer(bundle.discriminator_params(), rng),
        }
        path = tmp_path / "train.mcnw"
        save_checkpoint(path, bundle, optimizers)
        state = load_checkpoint(path)
        assert state.step == 2
        restored = state.optimizers["generator"]
        original = optimizers["generator"]
        assert set(restored.m) == set(original.m)
        name = next(iter(original.m))
        np.testing.assert_array_equal(restored.m[name], original.m[name])
        np.testing.assert_array_equal(restored.v[name], original.v[name])
        assert state.optimizers["discriminator"].step == 2


    def test_step_counter_beyond_float32_range(self, tmp_path, bundle):
        optimizers = {"generator": AdamState(step=settings.MAX_STEPS + 1)}
        with pytest.raises(CheckpointError, match="largest storable step"):
            save_checkpoint(tmp_path / "late.mcnw", bundle, optimizers)
        assert not (tmp_path / "late.mcnw").exists()

    def test_largest_step_counter_is_exact(self, tmp_path, bundle):
        path = tmp_path / "edge.mcnw"
        save_checkpoint(path, bundle, {"generator": AdamState(step=settings.MAX_STEPS)})
        assert load_checkpoint(path).optimizers["generator"].step == settings.MAX_STEPS

class TestCorruption:
    def test_truncated(self, tmp_path, bundle):
        path = tmp_path / "model.mcnw"
        save_checkpoint(path, bundle)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(CheckpointError, match="CRC"):
            load_checkpoint(path)

    def test_flipped_byte(self, tmp_path, bundle):
        path = tmp_path / "model.mcnw"
        save_checkpoint(path, bundle)
        payload = bytearray(path.read_bytes())
        payload[len(payload) // 2] ^= 0xFF
        path.write_bytes(bytes(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "absent.mcnw")

    def _resealed(self, payload):
        import zlib
        body = payload[:-4]
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def test_bad_magic(self, tiny_arch):
        payload = b"XXXX" + encode_tensors(tiny_arch, [])[4:]
        with pytest.raises(CheckpointError, match="magic"):
            decode_tensors(self._resealed(payload))

    def test_bad_version(self, tiny_arch):
        payload = encode_tensors(tiny_arch, [])
        payload = payload[:4] + struct.pack("<I", settings.CHECKPOINT_VERSION + 1) + payload[8:]
        with pytest.raises(CheckpointError, match="version"):
            decode_tensors(self._resealed(payload))


class TestConsistency:
    def _write(self, tmp_path, arch, records):
        path = tmp_path / "custom.mcnw"
        path.write_bytes(encode_tensors(arch, records))
        return path

    def test_missing_parameter(self, tmp_path, bundle):
        records = [(name, t.data) for name, t in bundle.params.items()][1:]
        with pytest.raises(CheckpointError, match="missing parameter"):
            load_checkpoint(self._write(tmp_path, bundle.arch, records))

    def test_duplicate_tensor(self, tmp_path, bundle):
        records = [(name, t.data) for name, t in bundle.params.items()]
        with pytest.raises(CheckpointError, match="duplicate"):
            load_checkpoint(self._write(tmp_path, bundle.arch, records + records[:1]))

    def test_unexpected_tensor(self, tmp_path, bundle):
        records = [(name, t.data) for name, t in bundle.params.items()]
        records.append(("stray", np.zeros((1, 1, 1, 1), dtype=np.float32)))
        with pytest.raises(CheckpointError, match="unexpected"):
            load_checkpoint(self._write(tmp_path, bundle.arch, records))

    def test_architecture_mismatch(self, tmp_path, bundle):
        other = ArchConfig(base_channels=8, resolution=32, ms_channels=8, disc_channels=8)
        records = [(name, t.data) for name, t in bundle.params.items()]
        with pytest.raises(CheckpointError):
            load_checkpoint(self._write(tmp_path, other, records))

    def test_rank_checked_on_encode(self, tiny_arch):
        with pytest.raises(CheckpointError, match="rank 4"):
            encode_tensors(tiny_arch, [("flat", np.zeros(3, dtype=np.float32))])
