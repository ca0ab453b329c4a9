import numpy as np
import pytest

from app.engine import ops
from app.engine.gradcheck import dominant_cell_image, grad_check, relative_error
from app.engine.tensor import KinkProximityError, Tensor
from app.services.config_store import ConfigError
from app.services.gradcheck_suite import (
    CHECKS,
    PRIMITIVE_THRESHOLD,
    results_frame,
    run_gradchecks,
    select_checks,
)


def test_relative_error_floors_denominator_at_one() -> None:
    err = relative_error(np.array([1e-3, 10.0]), np.array([2e-3, 11.0]))

    np.testing.assert_allclose(err, [1e-3, 1.0 / 11.0])


def test_grad_check_matches_sigmoid() -> None:
    x = Tensor(np.linspace(-2.0, 2.0, 7))

    error = grad_check(lambda: ops.mean(ops.sigmoid(x)), [x])

    assert error < PRIMITIVE_THRESHOLD


def test_grad_check_refuses_points_near_a_kink() -> None:
    x = Tensor(np.array([0.5, 1e-5, -0.7]))

    with pytest.raises(KinkProximityError, match="from a kink"):
        grad_check(lambda: ops.mean(ops.relu(x)), [x])


def test_grad_check_samples_coordinates() -> None:
    x = Tensor(np.linspace(0.1, 1.0, 50))

    error = grad_check(lambda: ops.mean(ops.tanh(x)), [x], max_coords=5)

    assert error < PRIMITIVE_THRESHOLD


def test_dominant_cell_image_keeps_pool_windows_apart() -> None:
    image = dominant_cell_image((6, 6, 3), np.random.default_rng(2))
    windows = image.data.reshape(3, 2, 3, 2, 3).transpose(0, 2, 4, 1, 3).reshape(3, 3, 3, 4)

    top_two = np.sort(windows, axis=-1)[..., -2:]

    assert np.all(top_two[..., 1] - top_two[..., 0] >= 0.1)
    assert np.all(image.data > 0)


def test_primitive_suite_passes() -> None:
    results = run_gradchecks("primitives")

    failed = [r.name for r in results if not r.passed]
    assert failed == []
    assert {r.group for r in results} == {"primitives"}


def test_single_named_check() -> None:
    (result,) = run_gradchecks("conv2d")

    assert result.name == "conv2d"
    assert result.max_error <= result.threshold


def test_results_frame_columns() -> None:
    frame = results_frame(run_gradchecks("relu,add"))

    assert list(frame["name"]) == ["relu", "add"]
    assert {"max_error", "threshold", "passed"} <= set(frame.columns)


def test_scope_selection() -> None:
    names = [c.name for c in CHECKS]

    assert [c.name for c in select_checks("all")] == names
    assert {c.name for c in select_checks("composed")} == {"adrb", "head", "model"}
    assert [c.name for c in select_checks("lstm, fan-out")] == ["lstm", "fan-out"]


@pytest.mark.parametrize("scope", ["convolution", "", "conv2d,nope"])
def test_unknown_scope(scope: str) -> None:
    with pytest.raises(ConfigError, match="unknown gradcheck scope"):
        select_checks(scope)


@pytest.mark.slow
def test_composed_suite_passes() -> None:
    results = run_gradchecks("composed")

    assert [r.name for r in results if not r.passed] == []
