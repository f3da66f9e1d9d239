"""Rendering, contrast model, and trace analytics.

ROI means are checked against a per-pixel Python summation oracle, spectral
readings against synthetic signals and a 10x oversampled rendering of the
same scene.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sonoswarm import scenes
from sonoswarm.magnetics import FieldCommand
from sonoswarm.session import SimulationSession
from sonoswarm.sonography import (
    ContrastModelParams,
    IntensityTrace,
    ProbeSpec,
    Roi,
    UltrasoundFrame,
    alias_frequency,
    calibrate,
    chain_directivity,
    density_response,
    detect_swarm,
    directivity,
    dominant_frequency,
    expected_region_mean,
    orientation_average,
    render_frame,
    roi_from_rect,
    roi_mean_intensity,
    trace,
    write_pgm,
)
PROBE = ProbeSpec()
PARAMS = ContrastModelParams()
FIELD = scenes.default_field()


def frame_of(pixels):
    return UltrasoundFrame(
        pixels=np.asarray(pixels, dtype=np.uint8), pixel_pitch=PROBE.pixel_pitch, timestamp=0.0
    )


class TestDirectivity:
    def test_perpendicular_maximum(self):
        assert directivity(math.pi / 2.0, PARAMS) == pytest.approx(1.0)

    def test_parallel_floor(self):
        assert directivity(0.0, PARAMS) == pytest.approx(
            PARAMS.directivity_floor_eps
        )

    def test_sweep_symmetric_and_unimodal(self):
        grid_deg = np.arange(0.0, 181.0, 15.0)
        # chain at yaw a sits at angle (a - 90 deg) to the propagation axis
        values = directivity(np.radians(grid_deg - 90.0), PARAMS)
        np.testing.assert_allclose(values, values[::-1], atol=1e-12)
        mid = len(values) // 2
        assert all(np.diff(values[: mid + 1]) < 0)
        assert all(np.diff(values[mid:]) > 0)

    @given(theta=st.floats(-10.0, 10.0, allow_nan=False))
    @settings(max_examples=60, deadline=None)
    def test_mirror_and_period_symmetry(self, theta):
        d = directivity(theta, PARAMS)
        assert d == pytest.approx(directivity(math.pi - theta, PARAMS), abs=1e-12)
        assert d == pytest.approx(directivity(theta + math.pi, PARAMS), abs=1e-12)
        assert PARAMS.directivity_floor_eps - 1e-12 <= d <= 1.0 + 1e-12

    def test_tilt_projection_only(self):
        # a 6 degree tilt changes the orientation factor by a few percent at

        # worst (chain parallel to propagation), nothing at broadside
        base = chain_directivity(0.0, 0.0, PROBE, PARAMS)
        tilted = chain_directivity(0.0, math.radians(6.0), PROBE, PARAMS)
        assert base == pytest.approx(1.0)
        assert tilted == pytest.approx(1.0)
        base90 = chain_directivity(math.pi / 2.0, 0.0, PROBE, PARAMS)
        tilted90 = chain_directivity(math.pi / 2.0, math.radians(6.0), PROBE, PARAMS)
        assert abs(tilted90 - base90) / base90 < 0.05


class TestDensityResponse:
    def test_zero_density_dark(self):
        assert density_response(0.0, PARAMS) == 0.0

    def test_strictly_increasing_concave_bounded(self):
        rho = np.linspace(0.0, 12.0, 49)
        values = density_response(rho, PARAMS)
        diffs = np.diff(values)
        assert np.all(diffs > 0)
        assert np.all(np.diff(diffs) < 0)
        assert np.all(values <= PARAMS.intensity_max)

    def test_negative_density_rejected(self):
        with pytest.raises(ValueError):
            density_response(-0.1, PARAMS)

    def test_orientation_average_matches_quadrature(self):
        thetas = np.linspace(0.0, math.pi, 20001)
        numeric = np.trapezoid(directivity(thetas, PARAMS), thetas) / math.pi
        assert orientation_average(PARAMS) == pytest.approx(numeric, rel=1e-6)


class TestRoiMean:
    def test_uniform_frame(self):
        frame = frame_of(np.full((40, 60), 37))
        assert roi_mean_intensity(frame, Roi(0, 0, 40, 60)) == 37.0

    def test_half_split(self):
        pixels = np.zeros((10, 10), dtype=np.uint8)
        pixels[:, 5:] = 200
        assert roi_mean_intensity(frame_of(pixels), Roi(0, 0, 10, 10)) == 100.0

    def test_matches_bruteforce_sum(self):
        rng = np.random.default_rng(3)
        pixels = rng.integers(0, 256, size=(50, 70), dtype=np.uint8)
        frame = frame_of(pixels)
        roi = Roi(7, 11, 31, 52)
        total = 0
        for r in range(roi.row0, roi.row1):
            for c in range(roi.col0, roi.col1):
                total += int(pixels[r, c])
        expected = total / roi.pixel_count
        assert roi_mean_intensity(frame, roi) == pytest.approx(expected, abs=0.0)

    def test_roi_outside_frame_rejected(self):
        with pytest.raises(ValueError):
            roi_mean_intensity(frame_of(np.zeros((5, 5))), Roi(0, 0, 6, 5))

    def test_empty_roi_rejected(self):
        with pytest.raises(ValueError):
            Roi(2, 2, 2, 5)


class TestTrace:
    def test_132_frames_at_22fps_lasts_6s(self):
        frames = [
            UltrasoundFrame(np.zeros((4, 4), np.uint8), 1e-4, timestamp=k / 22.0)
            for k in range(132)
        ]
        tr = trace(frames, Roi(0, 0, 4, 4))
        assert tr.frame_rate == pytest.approx(22.0)
        assert tr.duration == pytest.approx(6.0)

    def test_constant_frames_constant_trace(self):
        frames = [
            UltrasoundFrame(np.full((4, 4), 9, np.uint8), 1e-4, timestamp=k / 22.0)
            for k in range(10)
        ]
        tr = trace(frames, Roi(0, 0, 4, 4))
        assert np.all(tr.values == 9.0)


class TestSpectral:
    def test_sinusoid_beyond_nyquist_reads_at_alias(self):
        t = np.arange(132) / 22.0
        values = 100.0 + 30.0 * np.sin(2.0 * math.pi * 12.0 * t)
        tr = IntensityTrace(values=values, frame_rate=22.0)
        measured = dominant_frequency(tr)
        expected = alias_frequency(12.0, 22.0)
        assert expected == pytest.approx(10.0)
        assert abs(measured - expected) <= 22.0 / 132 + 1e-9

    def test_oversampled_reading_is_unfolded(self):
        t = np.arange(1320) / 220.0
        values = 100.0 + 30.0 * np.sin(2.0 * math.pi * 12.0 * t)
        tr = IntensityTrace(values=values, frame_rate=220.0)
        assert dominant_frequency(tr) == pytest.approx(12.0, abs=220.0 / 1320)

    def test_constant_trace_sentinel(self):
        tr = IntensityTrace(values=np.full(64, 5.0), frame_rate=22.0)
        assert dominant_frequency(tr) == 0.0

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            dominant_frequency(IntensityTrace(values=np.array([1.0, 2.0]), frame_rate=22.0))

    def test_alias_folding(self):
        assert alias_frequency(12.0, 22.0) == pytest.approx(10.0)
        assert alias_frequency(10.0, 22.0) == pytest.approx(10.0)
        assert alias_frequency(22.0, 22.0) == pytest.approx(0.0)
        assert alias_frequency(23.0, 22.0) == pytest.approx(1.0)


class TestDetectSwarm:
    def test_white_noise_rejected(self):
        rng = np.random.default_rng(11)
        tr = IntensityTrace(values=80 + 5 * rng.standard_normal(132), frame_rate=22.0)
        assert detect_swarm(tr, FIELD) is False

    def test_static_bright_blob_rejected(self):
        tr = IntensityTrace(values=np.full(132, 180.0), frame_rate=22.0)
        assert detect_swarm(tr, FIELD) is False

    def test_rotation_locked_modulation_accepted(self):
        t = np.arange(132) / 22.0
        modulation = 2.0 * FIELD.frequency_f
        values = 70.0 + 12.0 * np.cos(2.0 * math.pi * modulation * t)
        tr = IntensityTrace(values=values, frame_rate=22.0)
        assert detect_swarm(tr, FIELD) is True

    def test_static_field_rejected_as_precondition(self):
        tr = IntensityTrace(values=np.full(32, 10.0), frame_rate=22.0)
        with pytest.raises(ValueError):
            detect_swarm(tr, FieldCommand(magnitude_b=8e-3))


class TestCalibrate:
    ANCHORS = [(2.0, 51.9), (4.5, 73.7)]
    REGIONS = [scenes.INITIAL_RECT, scenes.SWARM_RECT]

    def test_anchor_residuals_small(self):
        fitted, residuals = calibrate(self.ANCHORS, FIELD, PROBE, PARAMS, self.REGIONS)
        assert np.all(np.abs(residuals) < 0.5)
        assert 0 < fitted.density_scale_rho0 < 50
        assert fitted.intensity_max <= 255

    def test_single_anchor_rejected(self):
        with pytest.raises(ValueError):
            calibrate([(2.0, 51.9)], FIELD, PROBE, PARAMS)

    def test_degenerate_anchors_rejected(self):
        with pytest.raises(ValueError):
            calibrate([(2.0, 51.9), (2.0, 60.0)], FIELD, PROBE, PARAMS)

    def test_round_trip_recovers_density_scale(self):
        true = replace(PARAMS, density_scale_rho0=1.7, intensity_max=150.0)
        targets = [
            expected_region_mean(rho, region, PROBE, true)
            for rho, region in zip((2.0, 4.5), self.REGIONS)
        ]
        anchors = list(zip((2.0, 4.5), targets))
        fitted, _ = calibrate(anchors, FIELD, PROBE, PARAMS, self.REGIONS)
        assert fitted.density_scale_rho0 == pytest.approx(1.7, rel=0.01)
        assert fitted.intensity_max == pytest.approx(150.0, rel=0.01)


class TestRenderFrame:
    def test_empty_scene_noise_floor(self):
        scene = scenes.uniform_patch_scene(0.5)
        scene.chain_n = scene.chain_n[:0]
        scene.chain_pos = scene.chain_pos[:0]
        scene.chain_phi = scene.chain_phi[:0]
        scene.chain_tilt = scene.chain_tilt[:0]
        frame = render_frame(scene, PROBE, PARAMS, seed=0)
        ceiling = PARAMS.noise_floor * math.exp(5.0 * PARAMS.speckle_sigma) + 1
        assert frame.pixels.max() <= ceiling
        assert frame.pixels.mean() == pytest.approx(PARAMS.noise_floor, abs=1.0)

    def test_deterministic_per_seed(self):
        scene = scenes.uniform_patch_scene(4.5)
        a = render_frame(scene, PROBE, PARAMS, seed=5)
        b = render_frame(scene, PROBE, PARAMS, seed=5)
        np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_speckle_seed_moves_roi_mean_within_noise_budget(self):
        scene = scenes.uniform_patch_scene(4.5)
        roi = roi_from_rect(scenes.SWARM_RECT, PROBE)
        a = render_frame(scene, PROBE, PARAMS, seed=5)
        b = render_frame(scene, PROBE, PARAMS, seed=6)
        per_pixel_std = float(
            a.pixels[roi.row0 : roi.row1, roi.col0 : roi.col1].std()
        )
        budget = 3.0 * per_pixel_std / math.sqrt(roi.pixel_count)
        assert abs(roi_mean_intensity(a, roi) - roi_mean_intensity(b, roi)) < budget

    def test_yaw_sweep_contrast_profile(self):
        roi = roi_from_rect(scenes.SWARM_RECT, PROBE)
        means = []
        for i, yaw_deg in enumerate(np.arange(0.0, 181.0, 15.0)):
            scene = scenes.uniform_patch_scene(4.5, axis_angle=math.radians(yaw_deg))
            frames = [
                render_frame(scene, PROBE, PARAMS, seed=(i, k)) for k in range(11)
            ]
            means.append(np.mean([roi_mean_intensity(f, roi) for f in frames]))
        means = np.array(means)
        assert int(np.argmax(means)) in (0, 12)
        assert int(np.argmin(means)) in (5, 6, 7)  # 75-105 degrees
        dynamic_range = means.max() - means.min()
        sym_err = np.abs(means - means[::-1]).max()
        assert sym_err < 0.05 * dynamic_range

    def test_pitch_negligible_effect(self):
        roi = roi_from_rect(scenes.SWARM_RECT, PROBE)
        means = []
        for i, pitch_deg in enumerate((0.0, 2.0, 4.0, 6.0)):
            scene = scenes.uniform_patch_scene(4.5, axis_angle=math.radians(45.0))
            scene.chain_tilt[:] = math.radians(pitch_deg)
            frames = [
                render_frame(scene, PROBE, PARAMS, seed=(30 + i, k)) for k in range(11)
            ]
            means.append(np.mean([roi_mean_intensity(f, roi) for f in frames]))
        base = means[0]
        for m in means[1:]:
            assert abs(m - base) / base < 0.05

    def test_rotating_mean_matches_static_sweep_average(self):
        # ergodicity: the rotating-field trace mean equals the mean over the
        # distinct static yaw samples (one period tiled evenly)
        roi = roi_from_rect(scenes.SWARM_RECT, PROBE)
        static_means = []
        for i, yaw_deg in enumerate(np.arange(0.0, 180.0, 15.0)):
            scene = scenes.uniform_patch_scene(4.5, axis_angle=math.radians(yaw_deg))
            frames = [
                render_frame(scene, PROBE, PARAMS, seed=(60 + i, k)) for k in range(6)
            ]
            static_means.append(np.mean([roi_mean_intensity(f, roi) for f in frames]))
        scene = scenes.uniform_patch_scene(4.5)
        session = SimulationSession(scene, FIELD, PROBE, PARAMS, seed=77)
        frames = []
        for _ in range(132):
            frames.append(session.observe())
            session.advance()
        rotating_mean = trace(frames, roi, frame_rate=PROBE.frame_rate).mean()
        assert rotating_mean == pytest.approx(np.mean(static_means), rel=0.02)

    def test_rotating_scene_periodicity_against_oversampled_oracle(self):
        # 10x oversampled probe resolves the true 2f modulation directly
        fast_probe = replace(PROBE, frame_rate=220.0)
        scene = scenes.uniform_patch_scene(4.5)
        session = SimulationSession(scene, FIELD, fast_probe, PARAMS, seed=13)
        roi = roi_from_rect(scenes.SWARM_RECT, fast_probe)
        frames = []
        for _ in range(440):
            frames.append(session.observe())
            session.advance()
        tr = trace(frames, roi, frame_rate=220.0)
        assert tr.values.max() - tr.values.min() > 0
        assert dominant_frequency(tr) == pytest.approx(
            2.0 * FIELD.frequency_f, abs=220.0 / 440
        )


class TestPgmExport:
    def test_header_and_payload(self, tmp_path):
        pixels = np.arange(12, dtype=np.uint8).reshape(3, 4)
        path = tmp_path / "frame.pgm"
        write_pgm(frame_of(pixels), path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n4 3\n255\n")
        assert data[len(b"P5\n4 3\n255\n") :] == pixels.tobytes()
