"""Named experiment scenarios with declarative configs and CSV artifacts.

Each scenario resolves a config (user YAML merged over inline defaults,
strictly validated), runs deterministically from its seed, and writes CSVs,
greymap frames, and a self-describing run manifest.  Re-running a manifest
reproduces byte-identical CSVs.
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__, scenes
from .magnetics import FIELD_ROTATING, FIELD_STATIC, FieldCommand
from .navigation import (
    SOURCE_GROUND_TRUTH,
    SOURCE_IMAGE,
    close_loop,
    plan_rectangle,
    write_nav_log,
)
from .session import SimulationSession
from .sonography import (
    ContrastModelParams,
    ProbeSpec,
    alias_frequency,
    calibrate,
    detect_swarm,
    dominant_frequency,
    roi_from_rect,
    trace,
    write_frame_sidecar,
    write_pgm,
    write_trace_csv,
)

class ConfigError(ValueError):
    """Invalid or unknown scenario configuration field."""


class ScenarioRuntimeError(RuntimeError):
    """Scenario failed while producing artifacts."""


_COMMON_DEFAULTS = {
    "seed": 0,
    "field": {
        "magnitude_mt": 8.0,
        "frequency_hz": 6.0,
        "yaw_deg": 0.0,
        "pitch_deg": 0.0,
    },
    "probe": {
        "frame_rate_hz": 22.0,
        "imaging_depth_mm": 30.0,
        "gain": 2.0,
        "pixel_pitch_mm": 0.15,
        "lateral_width_mm": 38.4,
    },
    "contrast": {
        "floor_eps": 0.2,
        "power_p": 2.0,
        "rho0_ug_mm2": 2.4094236012143533,
        "intensity_max": 133.09462255554445,
        "speckle_sigma": 0.15,
        "attenuation_db_per_cm": 5.0,
        "noise_floor": 8.0,
    },
}

SCENARIO_DEFAULTS = {
    "yaw-sweep": {
        **_COMMON_DEFAULTS,
        "sweep": {
            "yaw_start_deg": 0.0,
            "yaw_stop_deg": 180.0,
            "yaw_step_deg": 15.0,
            "pitch_deg": 0.0,
            "density_ug_mm2": 4.5,
            "frames_per_yaw": 22,
        },
    },
    "pitch-sweep": {
        **_COMMON_DEFAULTS,
        "sweep": {
            "yaw_start_deg": 0.0,
            "yaw_stop_deg": 180.0,
            "yaw_step_deg": 15.0,
            "pitches_deg": [0.0, 2.0, 4.0, 6.0],
            "density_ug_mm2": 4.5,
            "frames_per_yaw": 22,
        },
    },
    "dynamic-contrast": {
        **_COMMON_DEFAULTS,
        "contrast_run": {
            "anchors": [[2.0, 51.9], [4.5, 73.7]],
            "frames": 132,
            "initial_density": 2.0,
            "swarm_density": 4.5,
            "background_density": 0.5,
            "swarm_start_time_s": 40.0,
        },
    },
    "density-sweep": {
        **_COMMON_DEFAULTS,
        "density_run": {
            "densities": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0],
            "frames_per_density": 66,
        },
    },
    "velocity-sweep": {
        **_COMMON_DEFAULTS,
        "velocity_run": {
            "pitches_deg": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            "frequencies_hz": [4.0, 5.0, 6.0],
            "locomotion": {
                "target_speed_um_s": 75.0,
                "pitch_ref_deg": 6.0,
                "frequency_ref_hz": 6.0,
                "effective_radius_mm": 0.5,
            },
        },
    },
    "rectangle-nav": {
        **_COMMON_DEFAULTS,
        "nav": {
            "width_mm": 0.9,
            "height_mm": 0.7,
            "tolerance_mm": 0.02,
            "source": "ground_truth",
            "n_chains": 200,
            "pitch_deg": 6.0,
            "max_sim_time_s": 90.0,
            "locomotion": {
                "target_speed_um_s": 75.0,
                "pitch_ref_deg": 6.0,
                "frequency_ref_hz": 6.0,
                "effective_radius_mm": 0.5,
            },
        },
    },
}

SCENARIO_SUMMARIES = {
    "yaw-sweep": "static-field yaw sweep of aligned chains; ROI mean per yaw",
    "pitch-sweep": "yaw sweep repeated at small pitch angles",
    "dynamic-contrast": "132-frame traces of the diffuse and gathered regions",
    "density-sweep": "trace means across area densities",
    "velocity-sweep": "locomotion speed over pitch and drive frequency",
    "rectangle-nav": "closed-loop rectangle navigation with per-frame log",
}


def _merge_validate(user, defaults, path=""):
    if user is None:
        return _clone(defaults)
    if not isinstance(user, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be a mapping")
    merged = _clone(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ConfigError(f"unknown config field '{here}'")
        base = defaults[key]
        if isinstance(base, dict):
            merged[key] = _merge_validate(value, base, here)
        else:
            if isinstance(base, bool) and not isinstance(value, bool):
                raise ConfigError(f"config field '{here}' must be a boolean")
            if isinstance(base, (int, float)) and not isinstance(base, bool):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"config field '{here}' must be a number")
            if isinstance(base, str) and not isinstance(value, str):
                raise ConfigError(f"config field '{here}' must be a string")
            if isinstance(base, list) and not isinstance(value, list):
                raise ConfigError(f"config field '{here}' must be a list")
            merged[key] = value
    return merged


def _clone(value):
    return json.loads(json.dumps(value))


def load_config(scenario: str, config_path=None, seed=None) -> dict:
    if scenario not in SCENARIO_DEFAULTS:
        raise ConfigError(f"unknown scenario '{scenario}'")
    user = {}
    if config_path is not None:
        try:
            user = yaml.safe_load(Path(config_path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {config_path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file is not valid YAML: {exc}")
        if user is None:
            user = {}
    cfg = _merge_validate(user, SCENARIO_DEFAULTS[scenario])
    if seed is not None:
        cfg["seed"] = int(seed)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("config field 'seed' must be an integer")
    return cfg


def _build_probe(cfg) -> ProbeSpec:
    p = cfg["probe"]
    try:
        return ProbeSpec(
            frame_rate=float(p["frame_rate_hz"]),
            imaging_depth=float(p["imaging_depth_mm"]) * 1e-3,
            gain=float(p["gain"]),
            pixel_pitch=float(p["pixel_pitch_mm"]) * 1e-3,
            lateral_width=float(p["lateral_width_mm"]) * 1e-3,
        )
    except ValueError as exc:
        raise ConfigError(f"invalid probe config: {exc}")


def _build_contrast(cfg) -> ContrastModelParams:
    c = cfg["contrast"]
    try:
        return ContrastModelParams(
            directivity_floor_eps=float(c["floor_eps"]),
            directivity_power_p=float(c["power_p"]),
            density_scale_rho0=float(c["rho0_ug_mm2"]),
            intensity_max=float(c["intensity_max"]),
            speckle_sigma=float(c["speckle_sigma"]),
            attenuation_db_per_cm=float(c["attenuation_db_per_cm"]),
            noise_floor=float(c["noise_floor"]),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid contrast config: {exc}")


def _build_field(cfg, mode=FIELD_ROTATING, yaw_deg=None, pitch_deg=None) -> FieldCommand:
    f = cfg["field"]
    try:
        kwargs = dict(
            magnitude_b=float(f["magnitude_mt"]) * 1e-3,
            yaw_alpha=math.radians(f["yaw_deg"] if yaw_deg is None else yaw_deg),
            pitch_gamma=math.radians(
                f["pitch_deg"] if pitch_deg is None else pitch_deg
            ),
            mode=mode,
        )
        if mode == FIELD_ROTATING:
            kwargs["frequency_f"] = float(f["frequency_hz"])
        return FieldCommand(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid field config: {exc}")


def _build_locomotion(section):
    from .swarm import LocomotionParams

    try:
        return LocomotionParams.calibrated(
            target_speed=float(section["target_speed_um_s"]) * 1e-6,
            pitch_ref=math.radians(float(section["pitch_ref_deg"])),
            frequency_ref=float(section["frequency_ref_hz"]),
            effective_radius=float(section["effective_radius_mm"]) * 1e-3,
        )
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid locomotion config: {exc}")


def _write_manifest(out: Path, scenario: str, cfg: dict):
    manifest = {
        "scenario": scenario,
        "seed": cfg["seed"],
        "config": cfg,
        "versions": {
            "sonoswarm": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _yaw_grid(sweep) -> list[float]:
    start, stop, step_deg = (
        float(sweep["yaw_start_deg"]),
        float(sweep["yaw_stop_deg"]),
        float(sweep["yaw_step_deg"]),
    )
    if step_deg <= 0 or stop <= start:
        raise ConfigError("yaw sweep needs yaw_step_deg > 0 and stop > start")
    n = int(round((stop - start) / step_deg))
    return [start + i * step_deg for i in range(n + 1)]


def _static_chain_means(cfg, yaw_deg, pitch_deg, probe, params, seed_tag):
    """ROI means of a chain carpet aligned to a static field at one yaw."""
    sweep = cfg["sweep"]
    rho = float(sweep["density_ug_mm2"])
    scene = scenes.uniform_patch_scene(rho, axis_angle=math.radians(yaw_deg))
    scene.chain_tilt[:] = math.radians(pitch_deg)
    roi = roi_from_rect(scenes.SWARM_RECT, probe)
    from .sonography import render_frame, roi_mean_intensity

    means = []
    for k in range(int(sweep["frames_per_yaw"])):
        frame = render_frame(scene, probe, params, seed=(cfg["seed"], *seed_tag, k))
        means.append(roi_mean_intensity(frame, roi))
    return float(np.mean(means)), scene


def run_yaw_sweep(cfg: dict, out: Path):
    probe, params = _build_probe(cfg), _build_contrast(cfg)
    sweep = cfg["sweep"]
    rows = []
    first_frame = None
    for i, yaw in enumerate(_yaw_grid(sweep)):
        mean, scene = _static_chain_means(
            cfg, yaw, float(sweep["pitch_deg"]), probe, params, (i,)
        )
        rows.append((yaw, mean))
        if first_frame is None:
            from .sonography import render_frame

            first_frame = render_frame(scene, probe, params, seed=(cfg["seed"], i))
            field = _build_field(cfg, mode=FIELD_STATIC, yaw_deg=yaw)
            write_pgm(first_frame, out / "frame_yaw0.pgm")
            write_frame_sidecar(first_frame, probe, field, out / "frame_yaw0.json")
    _write_csv(out / "yaw_sweep.csv", "yaw_deg,mean_intensity", rows)


def run_pitch_sweep(cfg: dict, out: Path):
    probe, params = _build_probe(cfg), _build_contrast(cfg)
    sweep = cfg["sweep"]
    rows = []
    for pi, pitch in enumerate(sweep["pitches_deg"]):
        for yi, yaw in enumerate(_yaw_grid(sweep)):
            mean, _ = _static_chain_means(
                cfg, yaw, float(pitch), probe, params, (pi, yi)
            )
            rows.append((float(pitch), yaw, mean))
    _write_csv(out / "pitch_sweep.csv", "pitch_deg,yaw_deg,mean_intensity", rows)


def _run_trace(scene, field, probe, params, n_frames, roi, seed):
    session = SimulationSession(scene, field, probe, params, seed=seed)
    frames = []
    for _ in range(n_frames):
        frames.append(session.observe())
        session.advance()
    return trace(frames, roi, frame_rate=probe.frame_rate), frames


def run_dynamic_contrast(cfg: dict, out: Path):
    probe, base_params = _build_probe(cfg), _build_contrast(cfg)
    run = cfg["contrast_run"]
    anchors = [(float(r), float(t)) for r, t in run["anchors"]]
    field = _build_field(cfg)
    fitted, residuals = calibrate(
        anchors,
        field,
        probe,
        base_params,
        regions=[scenes.INITIAL_RECT, scenes.SWARM_RECT],
    )
    (out / "calibration.json").write_text(
        json.dumps(
            {
                "rho0_ug_mm2": fitted.density_scale_rho0,
                "intensity_max": fitted.intensity_max,
                "anchors": anchors,
                "residuals": [float(r) for r in residuals],
            },
            indent=2,
            sort_keys=True,
        )
    )

    n = int(run["frames"])
    initial_scene = scenes.uniform_patch_scene(
        float(run["initial_density"]), rect=scenes.INITIAL_RECT, seed=cfg["seed"]
    )
    roi_initial = roi_from_rect(scenes.INITIAL_RECT, probe)
    trace_initial, frames_i = _run_trace(
        initial_scene, field, probe, fitted, n, roi_initial, cfg["seed"]
    )

    swarm_scene = scenes.uniform_patch_scene(
        float(run["swarm_density"]),
        rect=scenes.SWARM_RECT,
        background_rho=float(run["background_density"]),
        seed=cfg["seed"] + 1,
    )
    swarm_scene.time = float(run["swarm_start_time_s"])
    roi_swarm = roi_from_rect(scenes.SWARM_RECT, probe)
    trace_swarm, frames_s = _run_trace(
        swarm_scene, field, probe, fitted, n, roi_swarm, cfg["seed"] + 1
    )

    write_trace_csv(trace_initial, out / "trace_initial.csv")
    write_trace_csv(
        trace_swarm, out / "trace_swarm.csv", start_time=float(run["swarm_start_time_s"])
    )
    rows = []
    for name, tr in (("initial", trace_initial), ("swarm", trace_swarm)):
        rows.append(
            (
                name,
                tr.mean(),
                detect_swarm(tr, field),
                dominant_frequency(tr),
                alias_frequency(2.0 * field.frequency_f, probe.frame_rate),
            )
        )
    _write_csv(
        out / "summary.csv",
        "region,mean_intensity,detected,dominant_freq_hz,expected_freq_hz",
        rows,
    )
    write_pgm(frames_i[0], out / "frame_initial.pgm")
    write_frame_sidecar(frames_i[0], probe, field, out / "frame_initial.json")
    write_pgm(frames_s[0], out / "frame_swarm.pgm")
    write_frame_sidecar(frames_s[0], probe, field, out / "frame_swarm.json")


def run_density_sweep(cfg: dict, out: Path):
    probe, params = _build_probe(cfg), _build_contrast(cfg)
    run = cfg["density_run"]
    field = _build_field(cfg)
    roi = roi_from_rect(scenes.SWARM_RECT, probe)
    rows = []
    densest_frame = None
    for i, rho in enumerate(run["densities"]):
        try:
            scene = scenes.uniform_patch_scene(float(rho), seed=cfg["seed"] + i)
        except ValueError as exc:
            raise ConfigError(f"invalid density_run.densities entry {rho}: {exc}")
        tr, frames = _run_trace(
            scene, field, probe, params, int(run["frames_per_density"]), roi,
            cfg["seed"] + i,
        )
        rows.append((float(rho), tr.mean(), detect_swarm(tr, field)))
        densest_frame = frames[0]
    _write_csv(
        out / "density_sweep.csv", "rho_ug_mm2,mean_intensity,detected", rows
    )
    if densest_frame is not None:
        write_pgm(densest_frame, out / "frame_densest.pgm")
        write_frame_sidecar(densest_frame, probe, field, out / "frame_densest.json")


def run_velocity_sweep(cfg: dict, out: Path):
    run = cfg["velocity_run"]
    loco = _build_locomotion(run["locomotion"])
    from .swarm import locomotion_velocity

    rows = []
    for f_hz in run["frequencies_hz"]:
        for pitch in run["pitches_deg"]:
            v = locomotion_velocity(math.radians(float(pitch)), float(f_hz), loco)
            rows.append((float(pitch), float(f_hz), v * 1e6))
    _write_csv(out / "velocity_sweep.csv", "pitch_deg,freq_hz,speed_um_s", rows)


def run_rectangle_nav(cfg: dict, out: Path):
    probe, params = _build_probe(cfg), _build_contrast(cfg)
    run = cfg["nav"]
    source = run["source"]
    if source not in (SOURCE_GROUND_TRUTH, SOURCE_IMAGE):
        raise ConfigError("config field 'nav.source' must be ground_truth or image")
    loco = _build_locomotion(run["locomotion"])
    swarm_params = replace(scenes.mobile_params(), locomotion=loco)
    scene = scenes.swarm_blob_scene(
        n_chains=int(run["n_chains"]), seed=cfg["seed"], params=swarm_params
    )
    com = scene.center_of_mass()
    plan = close_loop(
        plan_rectangle(
            (float(com[0]), float(com[1])),
            float(run["width_mm"]) * 1e-3,
            float(run["height_mm"]) * 1e-3,
            float(run["tolerance_mm"]) * 1e-3,
        )
    )
    field = _build_field(cfg, pitch_deg=float(run["pitch_deg"]))
    session = SimulationSession(scene, field, probe, params, seed=cfg["seed"])
    session.set_nav_plan(plan, source)
    done = session.run_until_nav_done(float(run["max_sim_time_s"]))
    if not done:
        raise ScenarioRuntimeError(
            f"navigation did not complete within {run['max_sim_time_s']} s"
        )
    write_nav_log(session.nav_log, out / "nav_log.csv")
    _write_csv(
        out / "slot_means.csv",
        "slot_index,mean_intensity",
        [(i, m) for i, m in enumerate(session.slot_means)],
    )
    _write_csv(
        out / "trajectory.csv",
        "time_s,com_x_mm,com_y_mm",
        [(t, x * 1e3, y * 1e3) for t, x, y in session.com_track],
    )
    _write_csv(
        out / "arrivals.csv",
        "waypoint_index,time_s",
        [(i, t) for i, t in session.arrival_times()],
    )
    if session.latest_frame is not None:
        write_pgm(session.latest_frame, out / "frame_final.pgm")
        write_frame_sidecar(
            session.latest_frame, probe, session.field_command, out / "frame_final.json"
        )


RUNNERS = {
    "yaw-sweep": run_yaw_sweep,
    "pitch-sweep": run_pitch_sweep,
    "dynamic-contrast": run_dynamic_contrast,
    "density-sweep": run_density_sweep,
    "velocity-sweep": run_velocity_sweep,
    "rectangle-nav": run_rectangle_nav,
}


def _preflight(scenario: str, cfg: dict) -> None:
    """Surface every config defect before any artifact is created."""
    _build_probe(cfg)
    _build_contrast(cfg)
    _build_field(cfg)
    if scenario in ("yaw-sweep", "pitch-sweep"):
        _yaw_grid(cfg["sweep"])
        scenes.chains_per_cell_for_density(float(cfg["sweep"]["density_ug_mm2"]))
    elif scenario == "dynamic-contrast":
        run = cfg["contrast_run"]
        if len(run["anchors"]) < 2:
            raise ConfigError("contrast_run.anchors needs at least two entries")
        for rho in (
            run["initial_density"],
            run["swarm_density"],
            run["background_density"],
        ):
            scenes.chains_per_cell_for_density(float(rho))
    elif scenario == "density-sweep":
        for rho in cfg["density_run"]["densities"]:
            try:
                scenes.chains_per_cell_for_density(float(rho))
            except ValueError as exc:
                raise ConfigError(f"invalid density_run.densities entry {rho}: {exc}")
    elif scenario == "velocity-sweep":
        _build_locomotion(cfg["velocity_run"]["locomotion"])
    elif scenario == "rectangle-nav":
        run = cfg["nav"]
        if run["source"] not in (SOURCE_GROUND_TRUTH, SOURCE_IMAGE):
            raise ConfigError(
                "config field 'nav.source' must be ground_truth or image"
            )
        _build_locomotion(run["locomotion"])
        if float(run["width_mm"]) <= 0 or float(run["height_mm"]) <= 0:
            raise ConfigError("nav rectangle dimensions must be positive")


def run_scenario(scenario: str, cfg: dict, out_dir) -> Path:
    """Execute one validated scenario config into ``out_dir``.

    Validation completes before the output directory is touched, so a bad
    config never leaves partial artifacts behind.
    """
    _preflight(scenario, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(out, scenario, cfg)
    RUNNERS[scenario](cfg, out)
    return out
