"""Frame-cadenced simulation session.

One session owns a scene and advances it in fixed physics sub-steps between
frame observations at the probe frame rate.  Field commands apply between
frames only, so no frame is ever rendered from a half-applied command.  The
navigation controller, slot-mean bookkeeping, and the per-frame log all
live here; the in-process runner and the streaming service drive the same
code path, which keeps their logs step-for-step identical for equal seeds.
"""

from __future__ import annotations

import math
from dataclasses import asdict

import numpy as np

from .magnetics import FieldCommand, IntegrationError
from .navigation import (
    SOURCE_GROUND_TRUTH,
    SOURCE_IMAGE,
    NavState,
    Waypoint,
    cross_track_error,
    steer,
)
from .sonography import (
    DEFAULT_CELL_SIZE,
    ContrastModelParams,
    ProbeSpec,
    Roi,
    UltrasoundFrame,
    render_frame,
    roi_from_rect,
    roi_mean_intensity,
)
from .swarm import SwarmScene, current_swarm_region, step


class SimulationSession:
    """Single authoritative simulation advanced one frame at a time."""

    def __init__(
        self,
        scene: SwarmScene,
        field_cmd: FieldCommand,
        probe: ProbeSpec,
        contrast: ContrastModelParams,
        seed: int = 0,
        render: bool = True,
        physics_dt: float = 1e-3,
        slot_frames: int = 66,
        cell_size: float = DEFAULT_CELL_SIZE,
        image_threshold: float = 40.0,
        image_min_pixels: int = 25,
    ):
        self.scene = scene
        self.field_command = field_cmd
        self.probe = probe
        self.contrast = contrast
        self.seed = int(seed)
        self.render = render
        self.physics_dt = physics_dt
        self.slot_frames = slot_frames
        self.cell_size = cell_size
        self.image_threshold = image_threshold
        self.image_min_pixels = image_min_pixels

        self.frame_index = 0
        self.latest_frame: UltrasoundFrame | None = None
        self.nav_plan: list[Waypoint] | None = None
        self.nav: NavState | None = None
        self.nav_log: list[dict] = []
        self.com_track: list[tuple[float, float, float]] = []
        self.slot_means: list[float] = []
        self.slot_mean_last: float | None = None
        self._slot_values: list[float] = []
        self._slot_roi: Roi | None = None

    @property
    def frame_interval(self) -> float:
        return 1.0 / self.probe.frame_rate

    def set_field(self, cmd: FieldCommand) -> None:
        """Swap the field program; takes effect from the next physics step."""
        self.field_command = cmd

    def set_nav_plan(self, plan: list[Waypoint], source: str = SOURCE_GROUND_TRUTH):
        self.nav_plan = list(plan)
        self.nav = NavState(source=source)
        self.nav_log = []

    # ------------------------------------------------------------------
    # frame loop
    # ------------------------------------------------------------------

    def observe(self) -> UltrasoundFrame | None:
        """Render/measure at the current instant and run one control update."""
        t = self.scene.time
        frame = None
        if self.render:
            frame = render_frame(
                self.scene,
                self.probe,
                self.contrast,
                seed=(self.seed, self.frame_index),
                cell_size=self.cell_size,
            )
            self.latest_frame = frame
        self._update_slot(frame)
        com = self.scene.center_of_mass()
        self.com_track.append((t, float(com[0]), float(com[1])))
        if self.nav is not None and not self.nav.finished:
            self._navigate(frame, t, com)
        self.frame_index += 1
        return frame

    def _navigate(self, frame, t, com):
        if self.nav.source == SOURCE_IMAGE:
            if frame is None:
                raise ValueError("image-based navigation requires rendering")
            from .navigation import image_centroid

            self.nav.centroid_estimate = image_centroid(
                frame, self.image_threshold, self.probe, self.image_min_pixels
            )
        else:
            self.nav.centroid_estimate = (float(com[0]), float(com[1]))
        command = steer(self.nav, self.nav_plan, self.field_command, now=t)
        self.field_command = command
        centroid = self.nav.centroid_estimate
        self.nav_log.append(
            {
                "time_s": t,
                "target_index": self.nav.current_target,
                "centroid_x_mm": math.nan if centroid is None else centroid[0] * 1e3,
                "centroid_y_mm": math.nan if centroid is None else centroid[1] * 1e3,
                "yaw_deg": math.degrees(command.yaw_alpha),
                "pitch_deg": math.degrees(command.pitch_gamma),
                "freq_hz": command.frequency_f,
                "slot_mean_intensity": self.slot_mean_last,
            }
        )

    def _update_slot(self, frame):
        if frame is None:
            return
        if self.frame_index % self.slot_frames == 0:
            region = current_swarm_region(self.scene)
            if region is not None:
                roi = roi_from_rect(region.rectangle, self.probe)
                rows, cols = frame.shape
                if roi.row1 <= rows and roi.col1 <= cols:
                    self._slot_roi = roi
            self._slot_values = []
        if self._slot_roi is None:
            return
        self._slot_values.append(roi_mean_intensity(frame, self._slot_roi))
        if len(self._slot_values) == self.slot_frames:
            self.slot_mean_last = float(np.mean(self._slot_values))
            self.slot_means.append(self.slot_mean_last)

    def advance(self) -> None:
        """Step physics from this frame instant to the next."""
        interval = self.frame_interval
        n_sub = max(1, int(math.ceil(interval / self.physics_dt - 1e-9)))
        dt = interval / n_sub
        for _ in range(n_sub):
            self._substep(dt)

    def _substep(self, dt: float, max_halvings: int = 6) -> None:
        # the rotation stability check precedes any mutation, so a failed
        # step leaves the scene untouched and can simply be re-run finer
        parts = 1
        for _ in range(max_halvings + 1):
            try:
                for _ in range(parts):
                    step(self.scene, self.field_command, dt / parts)
                return
            except IntegrationError:
                parts *= 2
        raise IntegrationError(f"session sub-step unstable at dt={dt / parts:.3g}")

    def run_frames(self, n_frames: int) -> None:
        for _ in range(n_frames):
            self.observe()
            self.advance()

    def run_until_nav_done(self, max_sim_time: float) -> bool:
        """Advance frames until the plan completes; True on completion."""
        if self.nav is None:
            raise ValueError("no navigation plan set")
        while self.scene.time <= max_sim_time:
            self.observe()
            if self.nav.finished:
                return True
            self.advance()
        return False

    # ------------------------------------------------------------------
    # analysis / reporting
    # ------------------------------------------------------------------

    def max_cross_track_error(self) -> float:
        """Largest ground-truth deviation from the active leg over the run."""
        if not self.nav_log:
            return 0.0
        worst = 0.0
        for row, com in zip(self.nav_log, self.com_track):
            err = cross_track_error(
                (com[1], com[2]), self.nav_plan, row["target_index"]
            )
            worst = max(worst, err)
        return worst

    def arrival_times(self) -> list[tuple[int, float]]:
        return [] if self.nav is None else list(self.nav.arrivals)

    def stats(self) -> dict:
        region = current_swarm_region(self.scene)
        com = self.scene.center_of_mass()
        payload = {
            "time_s": self.scene.time,
            "frame_index": self.frame_index,
            "centroid_m": [float(com[0]), float(com[1])],
            "field": asdict(self.field_command),
            "slot_mean_intensity": self.slot_mean_last,
            "total_particles": self.scene.total_particles(),
            "swarm_region": None,
            "nav": None,
        }
        if region is not None:
            r = region.rectangle
            payload["swarm_region"] = {
                "x0": r.x0,
                "y0": r.y0,
                "x1": r.x1,
                "y1": r.y1,
                "mean_density": region.mean_density,
            }
        if self.nav is not None:
            payload["nav"] = {
                "target_index": self.nav.current_target,
                "finished": self.nav.finished,
                "lost_frames": self.nav.lost_frames,
                "arrivals": [
                    {"index": i, "time_s": t} for i, t in self.nav.arrivals
                ],
            }
        return payload
