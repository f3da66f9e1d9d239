"""Versioned JSON snapshots of a simulation scene for replay.

Schema ``sonoswarm.scene/1``; layout documented in docs/scene-snapshot-v1.md.
The record carries the full generator state so a run resumed from a
snapshot replays bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .magnetics import ChainState, FieldCommand, FluidSpec, ParticleSpec
from .swarm import LocomotionParams, SwarmParams, SwarmScene, Tank

SCHEMA = "sonoswarm.scene/1"


def scene_to_dict(scene: SwarmScene, field_cmd: FieldCommand | None = None) -> dict:
    record = {
        "schema": SCHEMA,
        "time_s": scene.time,
        "rng_seed": scene.rng_seed,
        "rng_state": scene.rng.bit_generator.state,
        "particle_spec": asdict(scene.spec),
        "fluid": asdict(scene.fluid),
        "tank": asdict(scene.tank),
        "params": asdict(scene.params),
        "chains": [
            {
                "n": int(n),
                "x": float(p[0]),
                "y": float(p[1]),
                "phi": float(phi),
                "tilt": float(tilt),
            }
            for n, p, phi, tilt in zip(
                scene.chain_n, scene.chain_pos, scene.chain_phi, scene.chain_tilt
            )
        ],
        "free_particles": [[float(x), float(y)] for x, y in scene.free_pos],
    }
    if field_cmd is not None:
        record["field"] = asdict(field_cmd)
    return record


def scene_from_dict(record: dict) -> tuple[SwarmScene, FieldCommand | None]:
    if record.get("schema") != SCHEMA:
        raise ValueError(f"unsupported snapshot schema {record.get('schema')!r}")
    params_dict = dict(record["params"])
    params_dict["locomotion"] = LocomotionParams(**params_dict["locomotion"])
    scene = SwarmScene(
        chains=[
            ChainState(
                n_particles=c["n"],
                center=(c["x"], c["y"]),
                axis_angle_phi=c["phi"],
                tilt=c["tilt"],
            )
            for c in record["chains"]
        ],
        free_particles=[tuple(p) for p in record["free_particles"]],
        spec=ParticleSpec(**record["particle_spec"]),
        fluid=FluidSpec(**record["fluid"]),
        tank=Tank(**record["tank"]),
        params=SwarmParams(**params_dict),
        time=record["time_s"],
        rng_seed=record["rng_seed"],
        _rng_state=record["rng_state"],
    )
    field_cmd = FieldCommand(**record["field"]) if "field" in record else None
    return scene, field_cmd


def save_scene(scene: SwarmScene, path, field_cmd: FieldCommand | None = None) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene, field_cmd), indent=2))


def load_scene(path) -> tuple[SwarmScene, FieldCommand | None]:
    return scene_from_dict(json.loads(Path(path).read_text()))
