import numpy as np
import pytest

from qbesearch.checkpoint import load_checkpoint, params_digest, save_checkpoint
from qbesearch.corpus import FeatureNorm
from qbesearch.errors import FormatError
from qbesearch.network import forward, init_params

from conftest import TINY_NET


@pytest.fixture
def f32_params():
    return init_params(TINY_NET, seed=21, dtype=np.float32)


class TestRoundTrip:
    def test_params_round_trip_bit_exact(self, f32_params, tmp_path):
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path)
        loaded, norm = load_checkpoint(path)
        assert norm is None
        assert loaded.config == f32_params.config
        for (na, a), (nb, b) in zip(f32_params.tensors(), loaded.tensors()):
            assert na == nb
            assert a.dtype == b.dtype == np.float32
            assert np.array_equal(a, b)

    def test_norm_round_trip(self, f32_params, tmp_path):
        norm = FeatureNorm(np.arange(3, dtype=np.float32), np.ones(3, dtype=np.float32) * 0.5)
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path, norm)
        _, loaded = load_checkpoint(path)
        assert np.array_equal(loaded.mean, norm.mean)
        assert np.array_equal(loaded.std, norm.std)

    def test_forward_agrees_after_round_trip(self, f32_params, tmp_path):
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path)
        loaded, _ = load_checkpoint(path)
        seg = np.random.default_rng(0).normal(size=(8, 3)).astype(np.float32)
        assert np.array_equal(forward(f32_params, seg), forward(loaded, seg))

    def test_save_load_save_is_byte_identical(self, f32_params, tmp_path):
        p1, p2 = tmp_path / "a.qbem", tmp_path / "b.qbem"
        save_checkpoint(f32_params, p1)
        loaded, _ = load_checkpoint(p1)
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.qbem"
        path.write_bytes(b"NOPE" + b"\x00" * 8)
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_bad_version(self, f32_params, tmp_path):
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 77
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(path)

    def test_truncation(self, f32_params, tmp_path):
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 7])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(path)

    def test_missing_tensor(self, f32_params, tmp_path):
        import qbesearch.checkpoint as cp

        path = tmp_path / "m.qbem"
        table = cp._tensor_table(f32_params)
        table = [t for t in table if t[0] != "fc2.b"]
        path.write_bytes(cp._serialize(table))
        with pytest.raises(FormatError, match="fc2.b"):
            load_checkpoint(path)

    def test_unexpected_tensor(self, f32_params, tmp_path):
        import qbesearch.checkpoint as cp

        path = tmp_path / "m.qbem"
        table = cp._tensor_table(f32_params) + [("extra", np.zeros(2, dtype=np.float32))]
        path.write_bytes(cp._serialize(table))
        with pytest.raises(FormatError, match="extra"):
            load_checkpoint(path)


class TestDigest:
    def test_digest_is_stable_and_sensitive(self, f32_params):
        d1 = params_digest(f32_params)
        d2 = params_digest(f32_params.copy())
        assert len(d1) == 32
        assert d1 == d2
        mutated = f32_params.copy()
        mutated.fc1_b[0] += 1.0
        assert params_digest(mutated) != d1

    def test_digest_matches_loaded_checkpoint(self, f32_params, tmp_path):
        norm = FeatureNorm(np.zeros(3, dtype=np.float32), np.ones(3, dtype=np.float32))
        path = tmp_path / "m.qbem"
        save_checkpoint(f32_params, path, norm)
        params, loaded_norm = load_checkpoint(path)
        assert params_digest(params, loaded_norm) == params_digest(f32_params, norm)
