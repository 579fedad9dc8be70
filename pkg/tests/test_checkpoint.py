import numpy as np
import pytest

from gesturesynth.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from gesturesynth.errors import CheckpointFormatError
from gesturesynth.networks import DiscriminatorConfig, GeneratorConfig, init_params

GEN = GeneratorConfig(
    mel_bins=6,
    audio_frames=16,
    pose_frames=8,
    out_dims=6,
    audio_channels=(4,),
    enc_channels=(5,),
    dec_channels=(5,),
    depth=1,
)
DISC = DiscriminatorConfig(in_dims=6, channels=(4,), strides=(2,))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(GEN, DISC, seed=9)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert loaded.names == params.names
        assert loaded.gen_config == GEN
        assert loaded.disc_config == DISC
        assert loaded.init_seed == 9
        for name in params.names:
            np.testing.assert_array_equal(loaded[name].values, params[name].values)

    def test_save_is_byte_deterministic(self, tmp_path):
        params = init_params(GEN, DISC, seed=1)
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(params, a)
        save_checkpoint(params, b)
        assert a.read_bytes() == b.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(path)

    def test_bad_version_rejected(self, tmp_path):
        params = init_params(GEN, DISC, seed=0)
        path = tmp_path / "v9.ckpt"
        save_checkpoint(params, path)
        blob = bytearray(path.read_bytes())
        blob[len(MAGIC)] = 9
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(path)

    def test_truncated_rejected(self, tmp_path):
        params = init_params(GEN, DISC, seed=0)
        path = tmp_path / "cut.ckpt"
        save_checkpoint(params, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(CheckpointFormatError, match="truncated"):
            load_checkpoint(path)

    def test_loaded_params_train(self, tmp_path):
        params = init_params(GEN, DISC, seed=0)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, path)
        loaded = load_checkpoint(path)
        assert all(t.requires_grad for t in loaded.tensors.values())
