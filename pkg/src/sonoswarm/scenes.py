"""Canonical parameter presets and scene builders.

The susceptibility default is 1/mu0: under the module's moment convention
(moment carries a factor of mu0) this reproduces the torque magnitudes of
an SI-convention particle with unit susceptibility, which keeps 8 mT / 6 Hz
drives comfortably below step-out for chains up to the merge cap.

Each simulated chain particle is a coarse-grained parcel of many physical
nanoparticles; the preset parcel mass is chosen so the contrast-work scenes
hit their target area densities with a few hundred agents.
"""

from __future__ import annotations

import math

import numpy as np

from .magnetics import (
    FIELD_ROTATING,
    MU0,
    ChainState,
    FieldCommand,
    FluidSpec,
    ParticleSpec,
)
from .swarm import Rect, SwarmParams, SwarmScene

SI_EQUIVALENT_CHI = 1.0 / MU0

# Parcel mass per simulated particle: 9 lattice chains of 10 particles in
# one 0.5 mm density cell give 4.5 ug/mm^2.
PARCEL_MASS_KG = 1.25e-11
DEFAULT_CHAIN_PARTICLES = 10

# Cell-aligned analysis rectangles on the probe axis, density cell 0.5 mm
SWARM_RECT = Rect(21.0e-3, 11.5e-3, 24.0e-3, 13.5e-3)
INITIAL_RECT = Rect(20.0e-3, 10.5e-3, 25.0e-3, 14.5e-3)

SWARM_DENSITY = 4.5  # ug/mm^2
INITIAL_DENSITY = 2.0
BACKGROUND_DENSITY = 0.5


def default_particle_spec() -> ParticleSpec:
    return ParticleSpec(
        radius_a=250e-9,
        susceptibility_chi=SI_EQUIVALENT_CHI,
        mass_per_particle=PARCEL_MASS_KG,
    )


def default_fluid() -> FluidSpec:
    return FluidSpec(viscosity_eta=2.0e-3)


def default_field(
    magnitude_b: float = 8e-3,
    frequency_f: float = 6.0,
    pitch_gamma: float = 0.0,
    yaw_alpha: float = 0.0,
) -> FieldCommand:
    return FieldCommand(
        magnitude_b=magnitude_b,
        yaw_alpha=yaw_alpha,
        pitch_gamma=pitch_gamma,
        mode=FIELD_ROTATING,
        frequency_f=frequency_f,
    )


def static_params() -> SwarmParams:
    """Dynamics constants for scenes rendered at aggregation equilibrium:
    chains rotate in place, no drift or restructuring."""
    return SwarmParams(attraction_coeff=0.0, split_rate=0.0)


def mobile_params() -> SwarmParams:
    return SwarmParams()


def _lattice_offsets(count: int) -> np.ndarray:
    """Deterministic sub-cell positions for ``count`` chains per cell."""
    g = int(math.ceil(math.sqrt(count)))
    pts = [((i + 0.5) / g, (j + 0.5) / g) for j in range(g) for i in range(g)]
    return np.array(pts[:count])


def _fill_rect_with_chains(
    rect: Rect,
    per_cell: int,
    cell_size: float,
    chain_particles: int,
    axis_angle: float,
    skip: Rect | None = None,
) -> list[ChainState]:
    chains = []
    offsets = _lattice_offsets(per_cell)
    nx = int(round(rect.width / cell_size))
    ny = int(round(rect.height / cell_size))
    for iy in range(ny):
        for ix in range(nx):
            x0 = rect.x0 + ix * cell_size
            y0 = rect.y0 + iy * cell_size
            if skip is not None:
                cx, cy = x0 + 0.5 * cell_size, y0 + 0.5 * cell_size
                if skip.x0 <= cx <= skip.x1 and skip.y0 <= cy <= skip.y1:
                    continue
            for ox, oy in offsets:
                chains.append(
                    ChainState(
                        n_particles=chain_particles,
                        center=(x0 + ox * cell_size, y0 + oy * cell_size),
                        axis_angle_phi=axis_angle,
                    )
                )
    return chains


def chains_per_cell_for_density(
    rho: float, cell_size: float = 0.5e-3, chain_particles: int = DEFAULT_CHAIN_PARTICLES
) -> int:
    """Integer chain count per density cell that realises ``rho`` exactly
    with the preset parcel mass; raises when no integer count fits."""
    cell_area_mm2 = (cell_size * 1e3) ** 2
    count = rho * cell_area_mm2 / (chain_particles * PARCEL_MASS_KG * 1e9)
    rounded = round(count)
    if rounded < 1 or abs(count - rounded) > 1e-9:
        raise ValueError(
            f"density {rho} ug/mm^2 is not an integer chain count per cell"
        )
    return int(rounded)


def uniform_patch_scene(
    rho: float,
    rect: Rect = SWARM_RECT,
    axis_angle: float = 0.0,
    background_rho: float = 0.0,
    background_rect: Rect = INITIAL_RECT,
    cell_size: float = 0.5e-3,
    seed: int = 0,
    params: SwarmParams | None = None,
) -> SwarmScene:
    """Scene with exactly uniform area density over a cell-aligned patch.

    Used by the contrast scenes: every density cell under the patch holds
    the same chain count, so the binned density is exact, not statistical.
    """
    chains = _fill_rect_with_chains(
        rect,
        chains_per_cell_for_density(rho, cell_size),
        cell_size,
        DEFAULT_CHAIN_PARTICLES,
        axis_angle,
    )
    if background_rho > 0:
        chains += _fill_rect_with_chains(
            background_rect,
            chains_per_cell_for_density(background_rho, cell_size),
            cell_size,
            DEFAULT_CHAIN_PARTICLES,
            axis_angle,
            skip=rect,
        )
    return SwarmScene(
        chains=chains,
        spec=default_particle_spec(),
        fluid=default_fluid(),
        params=params if params is not None else static_params(),
        rng_seed=seed,
    )


def swarm_blob_scene(
    n_chains: int = 200,
    center: tuple[float, float] = (22.5e-3, 12.5e-3),
    chain_particles: int = DEFAULT_CHAIN_PARTICLES,
    n_outliers: int = 8,
    seed: int = 0,
    params: SwarmParams | None = None,
) -> SwarmScene:
    """Aggregated swarm at contact packing: a hexagonal raft of chains plus
    a few far ungathered chains, ready for navigation runs."""
    params = params if params is not None else mobile_params()
    spec = default_particle_spec()
    r_ex = params.contact_radius * math.sqrt(chain_particles / params.contact_ref_n)
    spacing = 2.0 * r_ex
    rng = np.random.default_rng(seed)
    pts: list[tuple[float, float]] = []
    ring = 0
    while len(pts) < n_chains:
        if ring == 0:
            pts.append(center)
        else:
            for k in range(6 * ring):
                ang = 2.0 * math.pi * k / (6 * ring)
                pts.append(
                    (
                        center[0] + ring * spacing * math.cos(ang),
                        center[1] + ring * spacing * math.sin(ang),
                    )
                )
        ring += 1
    chains = [
        ChainState(
            n_particles=chain_particles,
            center=p,
            axis_angle_phi=float(rng.uniform(0, math.pi)),
        )
        for p in pts[:n_chains]
    ]
    for _ in range(n_outliers):
        ang = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(1.5 * params.attraction_cutoff, 2.5 * params.attraction_cutoff)
        pos = (center[0] + dist * math.cos(ang), center[1] + dist * math.sin(ang))
        pos = (
            min(max(pos[0], 1e-3), 44e-3),
            min(max(pos[1], 1e-3), 24e-3),
        )
        chains.append(
            ChainState(
                n_particles=chain_particles,
                center=pos,
                axis_angle_phi=float(rng.uniform(0, math.pi)),
            )
        )
    return SwarmScene(
        chains=chains,
        spec=spec,
        fluid=default_fluid(),
        params=params,
        rng_seed=seed,
    )


def dispersed_disc_scene(
    n_chains: int = 200,
    center: tuple[float, float] = (22.5e-3, 12.5e-3),
    disc_radius: float = 2.0e-3,
    chain_particles: int = DEFAULT_CHAIN_PARTICLES,
    n_outliers: int = 6,
    n_free: int = 30,
    seed: int = 0,
    params: SwarmParams | None = None,
) -> SwarmScene:
    """Pre-aggregation spread: a jittered lattice of chains over a disc.

    The lattice keeps the initial binned density close to its mean, the way
    the disassembly field sequence leaves a uniform low-density carpet; a
    purely random scatter would seed spurious above-threshold cells.
    """
    params = params if params is not None else mobile_params()
    rng = np.random.default_rng(seed)
    spacing = disc_radius * math.sqrt(math.pi / n_chains)
    jitter = 0.18 * spacing
    pts: list[tuple[float, float]] = []
    half_span = int(math.ceil(disc_radius / spacing)) + 1
    for iy in range(-half_span, half_span + 1):
        for ix in range(-half_span, half_span + 1):
            x = center[0] + ix * spacing
            y = center[1] + iy * spacing
            if math.hypot(x - center[0], y - center[1]) <= disc_radius:
                pts.append(
                    (
                        x + float(rng.uniform(-jitter, jitter)),
                        y + float(rng.uniform(-jitter, jitter)),
                    )
                )
    chains = [
        ChainState(
            n_particles=chain_particles,
            center=p,
            axis_angle_phi=float(rng.uniform(0, math.pi)),
        )
        for p in pts[:n_chains]
    ]
    for _ in range(n_outliers):
        ang = rng.uniform(0, 2 * math.pi)
        dist = rng.uniform(1.4 * params.attraction_cutoff, 2.0 * params.attraction_cutoff)
        pos = (
            min(max(center[0] + dist * math.cos(ang), 1e-3), 44e-3),
            min(max(center[1] + dist * math.sin(ang), 1e-3), 24e-3),
        )
        chains.append(
            ChainState(
                n_particles=chain_particles,
                center=pos,
                axis_angle_phi=float(rng.uniform(0, math.pi)),
            )
        )
    free = []
    for _ in range(n_free):
        r = disc_radius * math.sqrt(rng.uniform(0, 1))
        a = rng.uniform(0, 2 * math.pi)
        free.append((center[0] + r * math.cos(a), center[1] + r * math.sin(a)))
    return SwarmScene(
        chains=chains,
        free_particles=free,
        spec=default_particle_spec(),
        fluid=default_fluid(),
        params=params,
        rng_seed=seed,
    )
