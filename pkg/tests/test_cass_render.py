from pathlib import Path

import numpy as np
import pytest

from app.datasets.errors import DegenerateSequenceError
from app.imaging.augment import apply_transform, augment
from app.imaging.cass import render_cass, temporal_color, temporal_hue
from app.imaging.errors import RenderError
from app.imaging.ppm import decode_ppm, encode_ppm, read_ppm, write_ppm
from app.models.cass import AugmentationSpec, CassImage, RenderConfig
from app.models.skeleton import PartTrajectory

GOLDEN = Path(__file__).parent / "data" / "golden_cass_8x8.ppm"


def make_trajectory(matrix: np.ndarray, chains: list[list[int]] | None = None) -> PartTrajectory:
    return PartTrajectory(
        part="HS",
        sequence_id="seq",
        joint_indices=list(range(matrix.shape[0])),
        matrix=matrix,
        chains=chains or [list(range(matrix.shape[0]))],
    )


def two_joint_ramp() -> np.ndarray:
    """Joint 0 at x=0 and joint 1 at x=3, both at y=t for t in 0..3."""
    matrix = np.zeros((2, 4, 3))
    matrix[1, :, 0] = 3.0
    matrix[:, :, 1] = np.arange(4)
    return matrix


class TestTemporalColor:
    def test_first_and_last_frames(self) -> None:
        assert temporal_color(0, 60) == (0, 0, 255)
        assert temporal_color(59, 60) == (255, 0, 0)

    def test_midpoint_is_green(self) -> None:
        assert temporal_hue(1, 3) == pytest.approx(120.0)
        assert temporal_color(1, 3) == (0, 255, 0)

    def test_custom_hue_range(self) -> None:
        config = RenderConfig(hue_start=0.0, hue_end=120.0)

        assert temporal_color(0, 2, config) == (255, 0, 0)
        assert temporal_color(1, 2, config) == (0, 255, 0)

    def test_single_frame_is_degenerate(self) -> None:
        with pytest.raises(DegenerateSequenceError):
            temporal_hue(0, 1)


class TestRenderCass:
    def test_matches_golden_image(self) -> None:
        config = RenderConfig(image_size=8, margin=0.0)

        image = render_cass(make_trajectory(two_joint_ramp()), config)

        assert encode_ppm(np.array(image.pixels)) == GOLDEN.read_bytes()

    def test_rendering_is_deterministic(self) -> None:
        rng = np.random.default_rng(4)
        trajectory = make_trajectory(rng.normal(size=(4, 60, 3)))

        first = render_cass(trajectory, RenderConfig(image_size=32))
        second = render_cass(trajectory, RenderConfig(image_size=32))

        assert np.array_equal(first.pixels, second.pixels)
        assert first.pixels.shape == (32, 32, 3)

    def test_zero_extent_maps_to_center(self) -> None:
        matrix = np.full((2, 5, 3), 0.7)

        image = render_cass(make_trajectory(matrix), RenderConfig(image_size=8))

        lit = np.argwhere(image.pixels.any(axis=2))
        assert lit.tolist() == [[4, 4]]
        assert tuple(image.pixels[4, 4]) == (255, 0, 0)

    def test_non_finite_coordinates(self) -> None:
        matrix = two_joint_ramp()
        matrix[0, 2, 0] = np.nan

        with pytest.raises(RenderError, match="non-finite"):
            render_cass(make_trajectory(matrix), RenderConfig(image_size=8))

    def test_single_frame_trajectory(self) -> None:
        with pytest.raises(DegenerateSequenceError):
            render_cass(make_trajectory(np.zeros((2, 1, 3))))

    def test_image_model_rejects_non_square(self) -> None:
        with pytest.raises(ValueError):
            CassImage(pixels=np.zeros((4, 8, 3), dtype=np.uint8), part="HS", sequence_id="x")


class TestPpm:
    def test_file_roundtrip(self, tmp_path: Path) -> None:
        pixels = read_ppm(GOLDEN)

        write_ppm(pixels, tmp_path / "copy.ppm")

        assert (tmp_path / "copy.ppm").read_bytes() == GOLDEN.read_bytes()
        assert pixels.shape == (8, 8, 3)
        assert tuple(pixels[5, 0]) == (0, 255, 170)

    def test_header_comment_is_skipped(self) -> None:
        data = b"P6\n# made by hand\n1 1\n255\n" + bytes([1, 2, 3])

        assert decode_ppm(data).tolist() == [[[1, 2, 3]]]

    def test_ascii_variant_is_rejected(self) -> None:
        with pytest.raises(RenderError, match="unsupported PPM"):
            decode_ppm(b"P3\n1 1\n255\n1 2 3\n")

    def test_truncated_header(self) -> None:
        with pytest.raises(RenderError, match="truncated"):
            decode_ppm(b"P6\n8")

    def test_encoded_header_and_channel_order(self) -> None:
        pixels = np.array([[[10, 20, 30], [40, 50, 60]]], dtype=np.uint8)

        data = encode_ppm(pixels)

        assert data == b"P6\n2 1\n255\n" + bytes([10, 20, 30, 40, 50, 60])
        np.testing.assert_array_equal(decode_ppm(data), pixels)

    def test_sixteen_bit_maxval_is_rejected(self) -> None:
        data = b"P6\n1 1\n65535\n" + bytes(6)

        with pytest.raises(RenderError, match="unsupported PPM"):
            decode_ppm(data)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError):
            read_ppm(tmp_path / "absent.ppm")

    def test_encode_requires_uint8(self) -> None:
        with pytest.raises(RenderError):
            encode_ppm(np.zeros((2, 2, 3), dtype=np.float64))


class TestAugment:
    def test_menu_order_and_original_first(self) -> None:
        image = CassImage(pixels=read_ppm(GOLDEN), part="LH", sequence_id="s")
        spec = AugmentationSpec(transforms=["rot-45", "hflip", "crop"])

        outputs = augment(image, spec)

        assert [o.augment for o in outputs] == [None, "crop", "hflip", "rot-45"]
        assert all(o.pixels.shape == (8, 8, 3) for o in outputs)
        assert outputs[2].file_stem("utkinect") == "utkinect_s_LH_hflip"

    def test_flips(self) -> None:
        pixels = read_ppm(GOLDEN)

        assert np.array_equal(apply_transform(pixels, "hflip"), pixels[:, ::-1])
        assert np.array_equal(apply_transform(pixels, "vflip"), pixels[::-1])

    def test_drop_original(self) -> None:
        image = CassImage(pixels=read_ppm(GOLDEN), part="LH", sequence_id="s")

        outputs = augment(image, AugmentationSpec(transforms=["vflip"], keep_original=False))

        assert [o.augment for o in outputs] == ["vflip"]

    def test_unknown_transform(self) -> None:
        with pytest.raises(RenderError, match="unknown augmentation"):
            apply_transform(read_ppm(GOLDEN), "shear")
