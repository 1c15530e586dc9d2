import math

import numpy as np
import pytest

from microtwin.dynamics import RobotKind, RobotState, World
from microtwin.vision import (
    BACKGROUND_LEVEL,
    DISC_LEVEL,
    Frame,
    MaskParams,
    Optics,
    Track,
    centroid,
    estimate_velocity,
    render_frame,
    segment,
    update_track,
    write_pgm,
)

SMALL = Optics(um_per_px=1.0, frame_width=256, frame_height=256, fps=24.0)


def world_with(*positions, radius=10.0):
    robots = [
        RobotState(kind=RobotKind.PASSIVE, x=x, y=y, radius_um=radius)
        for x, y in positions
    ]
    return World(robots=robots)


class TestOptics:
    def test_scale_from_magnification(self):
        assert Optics(magnification=10.0).scale == pytest.approx(0.345)

    def test_explicit_scale_wins(self):
        assert Optics(magnification=10.0, um_per_px=1.0).scale == 1.0

    def test_world_px_roundtrip(self):
        x, y = SMALL.world_to_px(10.0, -20.0)
        assert SMALL.px_to_world(x, y) == pytest.approx((10.0, -20.0))


class TestRenderFrame:
    def test_empty_world_is_uniform_background(self):
        frame = render_frame(world_with(), SMALL)
        assert frame.pixels.shape == (256, 256)
        assert np.all(frame.pixels == BACKGROUND_LEVEL)

    def test_centered_robot_renders_centered_disc(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        lit = np.argwhere(frame.pixels > BACKGROUND_LEVEL)
        cy, cx = lit.mean(axis=0)
        assert (cx, cy) == pytest.approx((128.0, 128.0), abs=0.1)

    def test_displacement_maps_linearly(self):
        f0 = render_frame(world_with((0.0, 0.0)), SMALL)
        f1 = render_frame(world_with((10.0, 0.0)), SMALL)
        c0 = np.argwhere(f0.pixels > BACKGROUND_LEVEL).mean(axis=0)
        c1 = np.argwhere(f1.pixels > BACKGROUND_LEVEL).mean(axis=0)
        assert c1[1] - c0[1] == pytest.approx(10.0, abs=1e-9)
        assert c1[0] - c0[0] == pytest.approx(0.0, abs=1e-9)

    def test_timestamp_convention(self):
        frame = render_frame(world_with(), SMALL, frame_index=48)
        assert frame.timestamp == 2.0


class TestSegment:
    def test_background_crop_gives_black_mask(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        mask = segment(frame, (0, 0, 32), MaskParams())
        assert mask.shape == (32, 32)
        assert not mask.any()

    def test_band_excluding_disc_gives_empty_mask(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        # disc and rim are both brighter than the band
        params = MaskParams(blur=0, lower_thresh=30, upper_thresh=90)
        mask = segment(frame, (104, 104, 48), params)
        assert not mask.any()

    def test_disc_in_band_has_disc_area(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        params = MaskParams(blur=0, dilation=0, lower_thresh=100, upper_thresh=255)
        mask = segment(frame, (104, 104, 48), params)
        area = int((mask > 0).sum())
        r = 10.0
        assert abs(area - math.pi * r * r) <= 2 * math.pi * r + 4

    def test_dilation_grows_the_blob(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        base = segment(frame, (104, 104, 48), MaskParams(blur=0, dilation=0))
        fat = segment(frame, (104, 104, 48), MaskParams(blur=0, dilation=2))
        assert (fat > 0).sum() > (base > 0).sum()

    def test_degenerate_bbox_returns_zero_size(self):
        frame = render_frame(world_with(), SMALL)
        mask = segment(frame, (-100, -100, 10), MaskParams())
        assert mask.size == 0


class TestCentroid:
    def test_single_pixel(self):
        mask = np.zeros((32, 32), np.uint8)
        mask[10, 10] = 255
        assert centroid(mask) == (10.0, 10.0)

    def test_symmetric_disc(self):
        frame = render_frame(world_with((0.0, 0.0)), SMALL)
        mask = segment(frame, (96, 96, 64), MaskParams(blur=0))
        cx, cy = centroid(mask)
        assert (cx, cy) == pytest.approx((32.0, 32.0), abs=0.5)

    def test_two_pixel_mean(self):
        mask = np.zeros((16, 16), np.uint8)
        mask[0, 0] = 255
        mask[0, 10] = 255
        assert centroid(mask) == (5.0, 0.0)

    def test_empty_mask_is_lost_track_signal(self):
        assert centroid(np.zeros((8, 8), np.uint8)) is None
        assert centroid(np.zeros((0, 0), np.uint8)) is None


class TestEstimateVelocity:
    def test_constant_pixel_per_frame(self):
        history = [(float(k), 0.0) for k in range(15)]
        assert estimate_velocity(history, fps=24.0, um_per_px=1.0) == pytest.approx(24.0)

    def test_stationary(self):
        history = [(5.0, 5.0)] * 10
        assert estimate_velocity(history, 24.0, 1.0) == 0.0

    def test_partial_window_uses_available_span(self):
        history = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
        # 2 px over 2/24 s
        assert estimate_velocity(history, 24.0, 1.0) == pytest.approx(24.0)

    def test_underfilled_window_is_undefined(self):
        assert estimate_velocity([(0.0, 0.0)], 24.0, 1.0) is None
        assert estimate_velocity([], 24.0, 1.0) is None


class TestTrack:
    def test_stationary_blob_keeps_bbox_and_zero_velocity(self):
        world = world_with((0.0, 0.0))
        track = Track.from_click(128.0, 128.0, MaskParams())
        for k in range(20):
            update_track(track, render_frame(world, SMALL, k), SMALL)
        assert track.centroid == pytest.approx((128.0, 128.0), abs=0.5)
        assert track.velocity == pytest.approx(0.0, abs=1e-9)
        assert not track.stale

    def test_moving_blob_bbox_recenters_every_frame(self):
        track = Track.from_click(128.0, 128.0, MaskParams(blur=0))
        for k in range(30):
            world = world_with((float(k), 0.0))
            update_track(track, render_frame(world, SMALL, k), SMALL)
            bx, by, side = track.bbox
            assert bx + side / 2 == pytest.approx(track.centroid[0], abs=0.51)
            assert by + side / 2 == pytest.approx(track.centroid[1], abs=0.51)
        assert track.velocity == pytest.approx(24.0, rel=0.02)

    def test_lost_track_policy(self):
        track = Track.from_click(128.0, 128.0, MaskParams())
        world = world_with((0.0, 0.0))
        update_track(track, render_frame(world, SMALL, 0), SMALL)
        bbox = track.bbox
        empty = render_frame(world_with(), SMALL)
        for k in range(23):
            update_track(track, empty, SMALL)
            assert not track.stale
        update_track(track, empty, SMALL)  # 24th consecutive miss
        assert track.stale
        assert track.bbox == bbox  # last box retained
        # reacquisition clears the flag
        update_track(track, render_frame(world, SMALL, 30), SMALL)
        assert not track.stale and track.misses == 0

    def test_translation_equivariance_for_integer_shifts(self):
        dx, dy = 7, -5
        base, shifted = [], []
        track_a = Track.from_click(100.0, 100.0, MaskParams())
        track_b = Track.from_click(100.0 + dx, 100.0 + dy, MaskParams())
        for k in range(25):
            pos = (-28.0 + 0.8 * k, -28.0 + 0.3 * k)
            wa = world_with(pos)
            wb = world_with((pos[0] + dx, pos[1] + dy))
            update_track(track_a, render_frame(wa, SMALL, k), SMALL)
            update_track(track_b, render_frame(wb, SMALL, k), SMALL)
            base.append(track_a.centroid)
            shifted.append(track_b.centroid)
        for (ax, ay), (bx, by) in zip(base, shifted):
            assert (bx - ax, by - ay) == pytest.approx((dx, dy), abs=1e-9)

    def test_tracking_error_stays_subpixel_on_moving_disc(self):
        track = Track.from_click(40.0, 40.0, MaskParams(blur=0))
        for k in range(120):
            x_um = -88.0 + 1.3 * k
            y_um = -88.0 + 0.7 * k
            world = world_with((x_um, y_um))
            frame = render_frame(world, SMALL, k)
            update_track(track, frame, SMALL)
            true_px = SMALL.world_to_px(x_um, y_um)
            err = math.hypot(track.centroid[0] - true_px[0],
                             track.centroid[1] - true_px[1])
            assert err <= 1.0


class TestPgmDump:
    def test_p5_roundtrip(self, tmp_path):
        frame = render_frame(world_with((0.0, 0.0)), SMALL, frame_index=3)
        path = tmp_path / "frame_000003.pgm"
        write_pgm(frame, path)
        raw = path.read_bytes()
        header, rest = raw.split(b"\n", 1)
        assert header == b"P5 256 256 255"
        assert np.frombuffer(rest, dtype=np.uint8).reshape(256, 256).tolist() == \
            frame.pixels.tolist()
