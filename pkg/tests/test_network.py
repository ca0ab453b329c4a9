from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest

from app.engine.recurrent import lstm_forward
from app.engine.tensor import Tensor
from app.models.cass import CassImage
from app.models.network import ArchitectureConfig, LstmState, StcfConfig
from app.network.riac import (
    ModelError,
    RiacNetModel,
    adrb_forward,
    attention_map,
    lstm_layer,
    model_forward,
    sequence_former,
    stcf_forward,
)


def narrow_config(image_size: int = 16, n_classes: int = 3) -> ArchitectureConfig:
    return ArchitectureConfig(
        image_size=image_size, n_classes=n_classes, stcf=StcfConfig.uniform(2), hidden_size=4
    )


def random_image(size: int, seed: int = 0, sequence_id: str = "s") -> CassImage:
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    return CassImage(pixels=pixels, part="HS", sequence_id=sequence_id)


class TestLstm:
    def test_hand_computed_two_steps(self) -> None:
        weights = Tensor(np.zeros((2, 4)))
        bias = Tensor(np.array([0.0, 0.0, 0.0, np.arctanh(0.8)]))

        out, state = lstm_layer(Tensor(np.zeros((2, 1))), weights, bias)

        # every sigmoid gate sits at 0.5; the candidate is 0.8
        np.testing.assert_allclose(out.data[:, 0], [0.5 * np.tanh(0.4), 0.5 * np.tanh(0.6)])
        np.testing.assert_allclose(state.c, [[0.6]])

    def test_initial_state_is_used(self) -> None:
        weights = Tensor(np.zeros((2, 4)))
        bias = Tensor(np.zeros(4))
        start = LstmState(h=np.zeros((1, 1)), c=np.array([[2.0]]))

        _, state = lstm_layer(Tensor(np.zeros((1, 1))), weights, bias, start)

        np.testing.assert_allclose(state.c, [[1.0]])

    def test_batched_shapes(self) -> None:
        out, state = lstm_layer(
            Tensor(np.ones((3, 5, 2))), Tensor(np.full((6, 16), 0.1)), Tensor(np.zeros(16))
        )

        assert out.shape == (3, 5, 4)
        assert state.h.shape == (3, 4)

    def test_weight_shape_mismatch(self) -> None:
        with pytest.raises(ModelError, match="lstm"):
            lstm_layer(Tensor(np.ones((5, 2))), Tensor(np.zeros((5, 16))), Tensor(np.zeros(16)))

    def test_zero_parameters_keep_state_at_zero(self) -> None:
        x = Tensor(np.random.default_rng(0).normal(size=(2, 6, 3)))

        out, h, c = lstm_forward(x, Tensor(np.zeros((7, 16))), Tensor(np.zeros(16)))

        np.testing.assert_array_equal(out.data, 0.0)
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_open_input_and_closed_forget_gate_copy_candidate(self) -> None:
        rng = np.random.default_rng(4)
        hidden, features = 4, 3
        weights = rng.normal(size=(hidden + features, 4 * hidden))
        bias = rng.normal(size=4 * hidden)
        bias[:hidden] = 800.0
        bias[hidden : 2 * hidden] = -800.0
        x = rng.normal(size=(2, 5, features))

        out, _, c = lstm_forward(Tensor(x), Tensor(weights), Tensor(bias))

        z = np.concatenate([out.data[:, -2], x[:, -1]], axis=1)
        candidate = np.tanh(z @ weights[:, 3 * hidden :] + bias[3 * hidden :])
        np.testing.assert_allclose(c, candidate, atol=1e-12)

    def test_hidden_state_is_bounded(self) -> None:
        rng = np.random.default_rng(5)

        for _ in range(20):
            out, h, _ = lstm_forward(
                Tensor(rng.normal(size=(3, 8, 2))),
                Tensor(rng.normal(size=(6, 16))),
                Tensor(rng.normal(size=16)),
            )
            assert np.all(np.abs(out.data) < 1.0)
            assert np.all(np.abs(h) < 1.0)


class TestAttention:
    def test_zero_parameters_give_half_everywhere(self) -> None:
        model = RiacNetModel.zeros(narrow_config())
        x = Tensor(random_image(16).as_float())

        amap = attention_map(x, model)

        assert amap.shape == (8, 8, 1)
        np.testing.assert_array_equal(amap.data, 0.5)

    def test_map_stays_inside_unit_interval(self) -> None:
        model = RiacNetModel.initialize(narrow_config(), seed=1)

        for seed in range(100):
            amap = attention_map(Tensor(random_image(16, seed).as_float()), model)
            assert np.all((amap.data > 0.0) & (amap.data < 1.0))

    def test_residual_block_is_non_negative(self) -> None:
        model = RiacNetModel.initialize(narrow_config(image_size=8), seed=2)
        rng = np.random.default_rng(3)

        for _ in range(100):
            out = adrb_forward(Tensor(rng.normal(size=(8, 8, 3))), model)
            assert np.all(out.data >= 0.0)


class TestShapes:
    def test_narrow_forward(self) -> None:
        config = narrow_config()
        model = RiacNetModel.initialize(config, seed=0)
        x = Tensor(random_image(16).as_float())

        featmap = stcf_forward(x, model)
        probs = model_forward(random_image(16), model)

        assert featmap.shape == (8, 8, 8)
        assert sequence_former(featmap, "spatial-rows").shape == (8, 8)
        assert sequence_former(featmap, "single-step").shape == (1, 8)
        assert probs.shape == (3,)
        assert probs.sum() == pytest.approx(1.0)

    def test_batched_forward_matches_single(self) -> None:
        model = RiacNetModel.initialize(narrow_config(), seed=0)
        images = [random_image(16, seed) for seed in (1, 2)]

        batch = model_forward(images, model)

        assert batch.shape == (2, 3)
        np.testing.assert_allclose(batch[1], model_forward(images[1], model), atol=1e-12)

    def test_single_step_mode(self) -> None:
        config = narrow_config().model_copy(update={"sequence_mode": "single-step"})
        model = RiacNetModel.initialize(config, seed=0)

        assert model_forward(random_image(16), model).shape == (3,)
        assert config.sequence_length == 1

    def test_wrong_image_size(self) -> None:
        model = RiacNetModel.initialize(narrow_config(), seed=0)

        with pytest.raises(ModelError, match="model expects 16x16"):
            model_forward(random_image(8), model)

    @pytest.mark.parametrize("forward", [stcf_forward, adrb_forward, attention_map])
    def test_block_rejects_wrong_input_size(
        self, forward: Callable[[Tensor, RiacNetModel], Tensor]
    ) -> None:
        model = RiacNetModel.initialize(narrow_config(), seed=0)

        with pytest.raises(ModelError, match="model expects"):
            forward(Tensor(random_image(8).as_float()), model)

        with pytest.raises(ModelError, match="model expects"):
            forward(Tensor(np.zeros((16, 16, 4))), model)

    def test_odd_image_size_is_rejected(self) -> None:
        with pytest.raises(ValueError, match="even"):
            ArchitectureConfig(image_size=15, n_classes=3)

    def test_describe_lists_layers(self) -> None:
        text = ArchitectureConfig(n_classes=10).describe()

        assert "stcf.concat" in text
        assert "112x112x256" in text
        assert text.rstrip().splitlines()[-1].split()[-1] == "10"

    @pytest.mark.slow
    def test_default_width_forward(self) -> None:
        model = RiacNetModel.initialize(ArchitectureConfig(n_classes=10), seed=0)

        featmap = stcf_forward(Tensor(random_image(224).as_float()), model)
        probs = model_forward(random_image(224), model)

        assert featmap.shape == (112, 112, 256)
        assert probs.shape == (10,)


class TestPersistence:
    def test_save_and_load_give_identical_predictions(self, tmp_path: Path) -> None:
        model = RiacNetModel.initialize(narrow_config(), seed=5)
        model.bn_stats.mean = np.full(8, 0.25)
        path = tmp_path / "HS.ckpt"

        model.save(path, {"part": "HS"})
        loaded, meta = RiacNetModel.load(path)

        assert meta["part"] == "HS"
        assert (tmp_path / "HS.ckpt.arch.txt").is_file()
        np.testing.assert_array_equal(loaded.bn_stats.mean, model.bn_stats.mean)
        image = random_image(16)
        np.testing.assert_array_equal(model_forward(image, loaded), model_forward(image, model))

    def test_initialization_is_seeded(self) -> None:
        a = RiacNetModel.initialize(narrow_config(), seed=9)
        b = RiacNetModel.initialize(narrow_config(), seed=9)

        assert all(np.array_equal(a[n].data, b[n].data) for n in a.parameters())
        assert a.parameter_count() == b.parameter_count()
        np.testing.assert_array_equal(a["lstm1.b"].data[4:8], 1.0)

    def test_restore_rejects_wrong_shape(self) -> None:
        model = RiacNetModel.zeros(narrow_config())
        arrays = model.snapshot()
        arrays["dense.w"] = np.zeros((4, 5))

        with pytest.raises(ModelError, match="dense.w"):
            model.restore(arrays)

    def test_restore_rejects_missing_parameter(self) -> None:
        model = RiacNetModel.zeros(narrow_config())
        arrays = model.snapshot()
        del arrays["att.mix.w"]

        with pytest.raises(ModelError, match="missing parameter att.mix.w"):
            model.restore(arrays)
