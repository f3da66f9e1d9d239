"""Waypoint planning, image centroids, and the steering state machine."""

import math

import numpy as np
import pytest

from sonoswarm import scenes
from sonoswarm.navigation import (
    SOURCE_GROUND_TRUTH,
    NavState,
    Waypoint,
    close_loop,
    cross_track_error,
    image_centroid,
    plan_rectangle,
    steer,
)
from sonoswarm.session import SimulationSession
from sonoswarm.sonography import ContrastModelParams, ProbeSpec, UltrasoundFrame

PROBE = ProbeSpec()


def frame_with(pixels_dict, shape=None):
    shape = shape or (PROBE.n_rows, PROBE.n_cols)
    pixels = np.zeros(shape, dtype=np.uint8)
    for (r, c), v in pixels_dict.items():
        pixels[r, c] = v
    return UltrasoundFrame(pixels=pixels, pixel_pitch=PROBE.pixel_pitch, timestamp=0.0)


class TestPlanRectangle:
    def test_unit_square_corners_in_order(self):
        plan = plan_rectangle((0.0, 0.0), 1.0, 1.0, 0.1)
        assert [w.position for w in plan] == [
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
        ]

    def test_degenerate_width_rejected(self):
        with pytest.raises(ValueError):
            plan_rectangle((0.0, 0.0), 0.0, 1.0, 0.1)

    def test_traversal_length_closes_loop(self):
        w, h = 0.9e-3, 0.7e-3
        plan = close_loop(plan_rectangle((1e-3, 2e-3), w, h, 1e-5))
        length = sum(
            math.dist(a.position, b.position) for a, b in zip(plan, plan[1:])
        )
        assert length == pytest.approx(2 * (w + h), rel=1e-12)


class TestImageCentroid:
    def test_single_bright_pixel(self):
        frame = frame_with({(40, 60): 200})
        got = image_centroid(frame, 100.0, PROBE, min_pixels=1)
        expected = PROBE.pixel_positions()[40, 60]
        assert got == pytest.approx(tuple(expected), abs=1e-12)

    def test_two_equal_blobs_midpoint(self):
        frame = frame_with({(40, 60): 200, (40, 80): 200})
        got = image_centroid(frame, 100.0, PROBE, min_pixels=1)
        p = PROBE.pixel_positions()
        expected = 0.5 * (p[40, 60] + p[40, 80])
        assert got == pytest.approx(tuple(expected), abs=1e-12)

    def test_below_min_pixskip_count_returns_none(self):
        frame = frame_with({(40, 60): 200})
        assert image_centroid(frame, 100.0, PROBE, min_pixels=5) is None

    def test_simulated_swarm_centroid_near_ground_truth(self):
        from sonoswarm.sonography import render_frame
        from sonoswarm.swarm import current_swarm_region

        scene = scenes.swarm_blob_scene(seed=5, n_outliers=0)
        frame = render_frame(scene, PROBE, ContrastModelParams(), seed=1)
        got = image_centroid(frame, 40.0, PROBE, min_pixels=25)
        com = scene.center_of_mass()
        region = current_swarm_region(scene)
        half_diag = 0.5 * math.hypot(
            region.rectangle.width, region.rectangle.height
        )
        assert math.dist(got, tuple(com)) < half_diag


class TestSteer:
    BASE = scenes.default_field(pitch_gamma=math.radians(6.0))

    def test_yaw_points_at_target(self):
        nav = NavState(centroid_estimate=(1.0e-3, 1.0e-3))
        plan = [Waypoint((2.0e-3, 1.0e-3), 1e-5)]
        cmd = steer(nav, plan, self.BASE)
        assert cmd.yaw_alpha == pytest.approx(0.0)  # due-west centroid aims east
        assert cmd.pitch_gamma == self.BASE.pitch_gamma
        assert cmd.frequency_f == self.BASE.frequency_f

    def test_arrival_advances_target(self):
        nav = NavState(centroid_estimate=(1.0e-3, 1.0e-3))
        plan = [Waypoint((1.0e-3, 1.0e-3), 1e-5), Waypoint((2.0e-3, 1.0e-3), 1e-5)]
        steer(nav, plan, self.BASE, now=3.5)
        assert nav.current_target == 1
        assert nav.arrivals == [(0, 3.5)]

    def test_final_arrival_finishes(self):
        nav = NavState(centroid_estimate=(1.0e-3, 1.0e-3), current_target=1)
        plan = [Waypoint((0.0, 0.0), 1e-5), Waypoint((1.0e-3, 1.0e-3), 1e-5)]
        steer(nav, plan, self.BASE, now=9.0)
        assert nav.finished
        assert nav.arrivals == [(1, 9.0)]

    def test_loss_of_track_holds_last_command(self):
        nav = NavState(centroid_estimate=(0.0, 0.0))
        plan = [Waypoint((1.0e-3, 0.0), 1e-5)]
        held = steer(nav, plan, self.BASE)
        nav.centroid_estimate = None
        cmd = steer(nav, plan, self.BASE)
        assert cmd == held
        assert nav.lost_frames == 1

    def test_empty_plan_rejected(self):
        with pytest.raises(ValueError):
            steer(NavState(centroid_estimate=(0, 0)), [], self.BASE)


class TestCrossTrack:
    def test_point_on_leg_zero_error(self):
        plan = [Waypoint((0.0, 0.0), 1e-5), Waypoint((1.0, 0.0), 1e-5)]
        assert cross_track_error((0.5, 0.0), plan, 1) == pytest.approx(0.0)

    def test_perpendicular_offset(self):
        plan = [Waypoint((0.0, 0.0), 1e-5), Waypoint((1.0, 0.0), 1e-5)]
        assert cross_track_error((0.5, 0.2), plan, 1) == pytest.approx(0.2)


class TestClosedLoop:
    def test_ground_truth_leg_times_match_speed(self):
        scene = scenes.swarm_blob_scene(n_chains=60, seed=3, n_outliers=0)
        com = scene.center_of_mass()
        width, height = 0.5e-3, 0.4e-3
        plan = close_loop(
            plan_rectangle((float(com[0]), float(com[1])), width, height, 1e-5)
        )
        field_cmd = scenes.default_field(pitch_gamma=math.radians(6.0))
        session = SimulationSession(
            scene, field_cmd, PROBE, ContrastModelParams(), seed=4, render=False
        )
        session.set_nav_plan(plan, SOURCE_GROUND_TRUTH)
        assert session.run_until_nav_done(max_sim_time=60.0)
        arrivals = dict(session.arrival_times())
        speed = 75e-6
        legs = [width, height, width, height]
        for idx in range(1, 5):
            measured = arrivals[idx] - arrivals[idx - 1]
            assert measured == pytest.approx(legs[idx - 1] / speed, rel=0.05)
        assert session.max_cross_track_error() < 5e-5
