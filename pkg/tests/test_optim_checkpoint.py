from pathlib import Path

import numpy as np
import pytest

from app.engine.checkpoint import (
    MAGIC,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from app.engine.optim import AdamState, adam_step
from app.engine.tensor import EngineError, Tensor


class TestAdam:
    def test_first_step_moves_by_learning_rate(self) -> None:
        w = Tensor(np.array([1.0, -1.0, 2.0]))
        w.grad = np.array([0.5, -3.0, 1e-2])
        state = AdamState(lr=0.01)

        adam_step({"w": w}, state)

        np.testing.assert_allclose(w.data, [0.99, -0.99, 1.99], rtol=1e-6)
        assert state.step == 1

    def test_missing_gradient_leaves_parameter(self) -> None:
        w = Tensor(np.array([1.0, 2.0]))

        adam_step({"w": w}, AdamState())

        np.testing.assert_array_equal(w.data, [1.0, 2.0])

    def test_explicit_gradients_override(self) -> None:
        w = Tensor(np.zeros(2))
        w.grad = np.array([1.0, 1.0])

        adam_step({"w": w}, AdamState(lr=0.1), grads={"w": np.array([-1.0, 0.0])})

        np.testing.assert_allclose(w.data, [0.1, 0.0], atol=1e-6)

    def test_converges_on_a_quadratic(self) -> None:
        w = Tensor(np.array([3.0, -2.0]))
        state = AdamState(lr=0.05)

        for _ in range(500):
            w.grad = 2.0 * w.data
            adam_step({"w": w}, state)

        np.testing.assert_allclose(w.data, 0.0, atol=5e-2)

    def test_gradient_shape_mismatch(self) -> None:
        w = Tensor(np.zeros(3))
        w.grad = np.zeros(2)

        with pytest.raises(EngineError, match="shape"):
            adam_step({"w": w}, AdamState())


class TestCheckpoint:
    def test_roundtrip_preserves_arrays_and_metadata(self, tmp_path: Path) -> None:
        rng = np.random.default_rng(0)
        arrays = {"conv/w": rng.normal(size=(3, 3, 2, 4)), "bias": np.array([1.5])}
        path = tmp_path / "nested" / "HS.ckpt"

        save_checkpoint(path, arrays, {"part": "HS", "classes": ["a", "b"]})
        loaded, metadata = load_checkpoint(path)

        assert path.read_bytes()[: len(MAGIC)] == MAGIC
        assert set(loaded) == set(arrays)
        assert np.array_equal(loaded["conv/w"], arrays["conv/w"])
        assert loaded["bias"].tolist() == [1.5]
        assert metadata == {"part": "HS", "classes": ["a", "b"]}

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_bad_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOTACKPT" + bytes(32))

        with pytest.raises(CheckpointError, match="bad magic"):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path: Path) -> None:
        path = tmp_path / "v.ckpt"
        save_checkpoint(path, {"w": np.zeros(2)})
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC)] = 9
        path.write_bytes(bytes(raw))

        with pytest.raises(CheckpointError, match="version 9"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path: Path) -> None:
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, {"w": np.zeros(16)})
        path.write_bytes(path.read_bytes()[:-8])

        with pytest.raises(CheckpointError, match="truncated payload for w"):
            load_checkpoint(path)
