import pytest

from stainbench.prompting import (
    AutoGridPrompt,
    BoxPrompt,
    PointPrompt,
    auto_grid,
    center_point,
    full_image_box,
    prompt_from_json,
    prompt_to_json,
)


class TestFullImageBox:
    @pytest.mark.parametrize("width,height", [(230, 700), (1, 1), (64, 64)])
    def test_covers_whole_image(self, width, height):
        box = full_image_box(width, height)
        assert box == BoxPrompt(0, 0, width, height)
        assert (box.x1 - box.x0) * (box.y1 - box.y0) == width * height

    def test_rejects_empty_image(self):
        with pytest.raises(ValueError):
            full_image_box(0, 5)


class TestCenterPoint:
    @pytest.mark.parametrize("width,height,expected", [
        (230, 700, (115, 350)),
        (1, 1, (0, 0)),
        (5, 3, (2, 1)),
    ])
    def test_floor_of_half(self, width, height, expected):
        point = center_point(width, height)
        assert (point.x, point.y) == expected
        assert point.label == 1


class TestAutoGrid:
    def test_two_by_two_on_four_square(self):
        points = auto_grid(4, 4, 2)
        assert [(p.x, p.y) for p in points] == [(1, 1), (3, 1), (1, 3), (3, 3)]

    def test_single_point_reduces_to_half(self):
        points = auto_grid(64, 64, 1)
        assert [(p.x, p.y) for p in points] == [(32, 32)]

    def test_grid_stays_in_bounds(self):
        points = auto_grid(230, 700, 32)
        assert len(points) == 1024
        assert all(0 <= p.x < 230 and 0 <= p.y < 700 for p in points)

    def test_in_bounds_for_many_shapes(self):
        for width, height in [(1, 1), (3, 97), (31, 7), (230, 700)]:
            for n in (1, 2, 5):
                if n > min(width, height):
                    continue
                for p in auto_grid(width, height, n):
                    assert 0 <= p.x < width
                    assert 0 <= p.y < height

    def test_deterministic(self):
        assert auto_grid(51, 37, 7) == auto_grid(51, 37, 7)

    def test_rejects_zero_points(self):
        with pytest.raises(ValueError):
            auto_grid(8, 8, 0)


class TestJsonRoundTrip:
    @pytest.mark.parametrize("prompt", [
        PointPrompt(3, 9),
        BoxPrompt(0, 0, 10, 20),
        AutoGridPrompt(points_per_side=16),
    ])
    def test_round_trip(self, prompt):
        assert prompt_from_json(prompt_to_json(prompt)) == prompt

    def test_unknown_type_rejected(self):
        with pytest.raises(ValueError):
            prompt_from_json({"type": "scribble"})
