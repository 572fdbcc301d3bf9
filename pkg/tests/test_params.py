import numpy as np
import pytest

from vsir.errors import (
    ConfigError,
    DimensionMismatchError,
    GradientError,
    MagicMismatchError,
    TruncatedFileError,
)
from vsir.params import (
    AdamState,
    ModelParams,
    TrainConfig,
    adam_step,
    glorot_init,
    load_model,
    save_model,
)


class TestGlorotInit:
    def test_2x4_bound_is_one(self):
        m = glorot_init(2, 4, np.random.default_rng(0))
        assert np.all(m >= -1.0) and np.all(m <= 1.0)
        assert m.shape == (2, 4)

    def test_1x5_bound_is_one(self):
        m = glorot_init(1, 5, np.random.default_rng(0))
        assert np.all(np.abs(m) <= 1.0)

    def test_large_draw_statistics(self):
        # bound sqrt(6/2000), sample mean of a symmetric uniform near 0
        m = glorot_init(1000, 1000, np.random.default_rng(123))
        bound = np.sqrt(6.0 / 2000.0)
        assert m.min() >= -bound and m.max() <= bound
        assert abs(float(m.mean())) < 0.01

    def test_rejects_degenerate_shape(self):
        with pytest.raises(ConfigError):
            glorot_init(0, 3, np.random.default_rng(0))


class TestAdamStep:
    def _scalar_state(self, theta=0.0):
        tensors = {"w": np.array([theta], dtype=np.float64)}
        state = AdamState.for_tensors(tensors)
        return tensors, state

    def test_first_step_hand_value(self):
        # t=1, g=1: m_hat = 1, v_hat = 1 -> theta' = -alpha / (1 + eps)
        tensors, state = self._scalar_state()
        adam_step(tensors, {"w": np.array([1.0])}, state)
        expected = -0.001 * (1.0 / (1.0 + 1e-8))
        np.testing.assert_allclose(tensors["w"][0], expected, rtol=1e-12)
        assert state.step == 1

    def test_zero_gradient_leaves_params(self):
        tensors, state = self._scalar_state(theta=0.25)
        adam_step(tensors, {"w": np.array([0.0])}, state)
        assert tensors["w"][0] == 0.25

    def test_constant_gradient_monotone_descent(self):
        # five steps against g=+2: theta decreases every step
        tensors, state = self._scalar_state()
        history = [tensors["w"][0]]
        for _ in range(5):
            adam_step(tensors, {"w": np.array([2.0])}, state)
            history.append(tensors["w"][0])
        assert all(b < a for a, b in zip(history, history[1:]))

    def test_matches_scalar_reference_recurrence(self):
        rng = np.random.default_rng(5)
        tensors, state = self._scalar_state(theta=0.5)
        theta = 0.5
        m = v = 0.0
        for t in range(1, 8):
            g = float(rng.normal())
            adam_step(tensors, {"w": np.array([g])}, state)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            m_hat = m / (1 - 0.9**t)
            v_hat = v / (1 - 0.999**t)
            theta -= 0.001 * m_hat / (np.sqrt(v_hat) + 1e-8)
            np.testing.assert_allclose(tensors["w"][0], theta, rtol=1e-12)

    def test_deterministic_and_shape_preserving(self):
        rng = np.random.default_rng(9)
        grads = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5)}
        runs = []
        for _ in range(2):
            tensors = {"a": np.ones((3, 4)), "b": np.zeros(5)}
            state = AdamState.for_tensors(tensors)
            adam_step(tensors, {k: g.copy() for k, g in grads.items()}, state)
            runs.append(tensors)
        for k in grads:
            assert runs[0][k].shape == grads[k].shape
            np.testing.assert_array_equal(runs[0][k], runs[1][k])

    def test_nonfinite_gradient_names_tensor(self):
        tensors = {"word_emb": np.zeros(3), "beta": np.zeros(2)}
        state = AdamState.for_tensors(tensors)
        bad = {"word_emb": np.zeros(3), "beta": np.array([1.0, np.nan])}
        with pytest.raises(GradientError, match="beta"):
            adam_step(tensors, bad, state)


class TestTrainConfig:
    def test_valid(self):
        cfg = TrainConfig(window=3, batch_size=32, num_negatives=5,
                          weight_decay=0.01, epochs=2, seed=0)
        assert cfg.stride == 1

    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(window=3, batch_size=32, num_negatives=5,
                        weight_decay=0.01, epochs=0, seed=0)

    def test_non_overlapping_stride(self):
        cfg = TrainConfig(window=4, batch_size=8, num_negatives=2,
                          weight_decay=0.0, epochs=1, seed=0, non_overlapping=True)
        assert cfg.stride == 4


def _make_model(seed=0):
    rng = np.random.default_rng(seed)
    tensors = {
        "word_emb": glorot_init(6, 4, rng),
        "doc_emb": glorot_init(3, 2, rng),
        "transform": glorot_init(2, 4, rng),
        "beta": np.zeros(2, dtype=np.float32),
    }
    return ModelParams(
        kind="nvsm",
        tensors=tensors,
        hyperparams={"window": 2, "word_dim": 4, "object_dim": 2},
        vocab_hash="abc123",
        object_ids=("d0", "d1", "d2"),
    )


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        model = _make_model()
        path = tmp_path / "model.bin"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == model.kind
        assert loaded.vocab_hash == model.vocab_hash
        assert loaded.object_ids == model.object_ids
        assert loaded.hyperparams == model.hyperparams
        for name, tensor in model.tensors.items():
            assert loaded.tensors[name].dtype == np.float32
            np.testing.assert_array_equal(loaded.tensors[name], tensor)

    def test_save_is_deterministic(self, tmp_path):
        model = _make_model()
        p1, p2 = tmp_path / "m1.bin", tmp_path / "m2.bin"
        save_model(model, p1)
        save_model(model, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(_make_model(), path)
        blob = bytearray(path.read_bytes())
        blob[:8] = b"NOTMAGIC"
        path.write_bytes(bytes(blob))
        with pytest.raises(MagicMismatchError):
            load_model(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(_make_model(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-5])
        with pytest.raises(TruncatedFileError):
            load_model(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "model.bin"
        save_model(_make_model(), path)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(DimensionMismatchError):
            load_model(path)

    def test_inconsistent_dims_rejected(self):
        rng = np.random.default_rng(0)
        tensors = {
            "word_emb": glorot_init(6, 4, rng),
            "doc_emb": glorot_init(3, 2, rng),
            "transform": glorot_init(2, 5, rng),  # word dim should be 4
            "beta": np.zeros(2, dtype=np.float32),
        }
        with pytest.raises(DimensionMismatchError):
            ModelParams("nvsm", tensors, {}, "", ("d0", "d1", "d2"))

    def test_object_id_count_checked(self):
        rng = np.random.default_rng(0)
        tensors = {
            "word_emb": glorot_init(6, 4, rng),
            "doc_emb": glorot_init(3, 2, rng),
            "transform": glorot_init(2, 4, rng),
            "beta": np.zeros(2, dtype=np.float32),
        }
        with pytest.raises(DimensionMismatchError):
            ModelParams("nvsm", tensors, {}, "", ("d0",))
