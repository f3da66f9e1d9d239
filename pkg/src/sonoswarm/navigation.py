"""Waypoint planning and closed-loop steering of the swarm.

The controller is a pure-pursuit state machine: every frame it points the
field yaw from the current swarm centroid straight at the active waypoint
and advances the waypoint index on arrival.  The centroid comes either
from scene ground truth or from thresholded ultrasound frames.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .magnetics import FieldCommand
from .sonography import ProbeSpec, UltrasoundFrame

SOURCE_GROUND_TRUTH = "ground_truth"
SOURCE_IMAGE = "image"


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float]
    tolerance: float

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class NavState:
    current_target: int = 0
    centroid_estimate: tuple[float, float] | None = None
    source: str = SOURCE_GROUND_TRUTH
    lost_frames: int = 0
    finished: bool = False
    last_command: FieldCommand | None = None
    arrivals: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.source not in (SOURCE_GROUND_TRUTH, SOURCE_IMAGE):
            raise ValueError(f"unknown centroid source {self.source!r}")


def plan_rectangle(
    origin: tuple[float, float], width: float, height: float, tolerance: float
) -> list[Waypoint]:
    """Corner waypoints of an axis-aligned rectangle, counter-clockwise
    from ``origin``; traversing them and returning to the first closes the
    loop."""
    if width <= 0 or height <= 0:
        raise ValueError("rectangle dimensions must be positive")
    x, y = origin
    corners = [(x, y), (x + width, y), (x + width, y + height), (x, y + height)]
    return [Waypoint(position=c, tolerance=tolerance) for c in corners]


def close_loop(plan: list[Waypoint]) -> list[Waypoint]:
    """Append the starting waypoint so a traversal ends where it began."""
    if not plan:
        raise ValueError("empty plan")
    return list(plan) + [plan[0]]


def image_centroid(
    frame: UltrasoundFrame,
    threshold: float,
    probe: ProbeSpec,
    min_pixels: int = 1,
) -> tuple[float, float] | None:
    """Intensity-weighted centroid of above-threshold pixels, in tank
    coordinates; None when fewer than ``min_pixels`` qualify."""
    mask = frame.pixels >= threshold
    count = int(mask.sum())
    if count < max(1, min_pixels):
        return None
    weights = frame.pixels[mask].astype(np.float64)
    positions = probe.pixel_positions()[mask]
    centroid = (positions * weights[:, None]).sum(axis=0) / weights.sum()
    return (float(centroid[0]), float(centroid[1]))


def steer(
    nav: NavState,
    plan: list[Waypoint],
    base_field: FieldCommand,
    now: float = 0.0,
) -> FieldCommand:
    """One control update: aim the yaw at the active waypoint.

    Advances the waypoint index while the centroid sits within tolerance of
    consecutive targets; the yaw convention is atan2 of (target - centroid),
    so a centroid due west of its target commands yaw 0 (east).  Without a
    centroid estimate the last command is held and the loss is counted.
    """
    if not plan:
        raise ValueError("empty plan")
    if nav.current_target >= len(plan):
        raise ValueError("target index outside plan")
    if nav.centroid_estimate is None:
        nav.lost_frames += 1
        return nav.last_command if nav.last_command is not None else base_field
    nav.lost_frames = 0
    cx, cy = nav.centroid_estimate
    while True:
        target = plan[nav.current_target]
        dx = target.position[0] - cx
        dy = target.position[1] - cy
        if math.hypot(dx, dy) > target.tolerance:
            break
        nav.arrivals.append((nav.current_target, now))
        if nav.current_target + 1 >= len(plan):
            nav.finished = True
            break
        nav.current_target += 1
    command = replace(base_field, yaw_alpha=math.atan2(dy, dx))
    nav.last_command = command
    return command


def cross_track_error(
    point: tuple[float, float], plan: list[Waypoint], target_index: int
) -> float:
    """Distance from ``point`` to the active leg segment."""
    end = np.asarray(plan[target_index].position)
    start = np.asarray(plan[target_index - 1].position) if target_index > 0 else end
    p = np.asarray(point)
    seg = end - start
    seg_len2 = float(seg @ seg)
    if seg_len2 == 0:
        return float(np.linalg.norm(p - end))
    t = float(np.clip((p - start) @ seg / seg_len2, 0.0, 1.0))
    return float(np.linalg.norm(p - (start + t * seg)))


NAV_LOG_HEADER = (
    "time_s,target_index,centroid_x_mm,centroid_y_mm,yaw_deg,pitch_deg,"
    "freq_hz,slot_mean_intensity"
)


def write_nav_log(rows: list[dict], path) -> None:
    """CSV export of per-frame navigation log rows."""
    lines = [NAV_LOG_HEADER]
    for r in rows:
        slot = r.get("slot_mean_intensity")
        lines.append(
            ",".join(
                [
                    repr(r["time_s"]),
                    str(r["target_index"]),
                    repr(r["centroid_x_mm"]),
                    repr(r["centroid_y_mm"]),
                    repr(r["yaw_deg"]),
                    repr(r["pitch_deg"]),
                    repr(r["freq_hz"]),
                    "" if slot is None else repr(slot),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
