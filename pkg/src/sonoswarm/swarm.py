"""Quasi-2D agent simulation of driven particle chains.

Chains live in the imaging plane of a rectangular tank.  Each step advances
chain axis angles with the overdamped rotation law, moves centers under a
pairwise attraction kernel plus pitch-induced locomotion drift, resolves
chain-chain contacts, merges touching aligned chains, and splits chains at
the rim of the gathered region.  All randomness flows through one seeded
generator owned by the scene, so runs replay bit-identically.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .magnetics import (
    FIELD_ROTATING,
    ChainState,
    FieldCommand,
    FluidSpec,
    IntegrationError,
    ParticleSpec,
    rotation_rate_limit,
    wrap_angle,
)

KG_TO_UG = 1e9


@dataclass(frozen=True)
class Tank:
    """Inner tank space; origin at the lower-left corner."""

    width: float = 45e-3
    height: float = 25e-3

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("tank dimensions must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points)
        return (
            (p[:, 0] >= 0)
            & (p[:, 0] <= self.width)
            & (p[:, 1] >= 0)
            & (p[:, 1] <= self.height)
        )


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in tank coordinates (metres)."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueError("degenerate rectangle")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class LocomotionParams:
    """Pitch-driven rolling drift model constants.

    ``friction_coeff`` is the slip fraction of the ideal rolling speed of a
    body with effective radius ``effective_radius`` rotating at the drive
    rate.
    """

    friction_coeff: float
    effective_radius: float = 0.5e-3

    @classmethod
    def calibrated(
        cls,
        target_speed: float = 75e-6,
        pitch_ref: float = math.radians(6.0),
        frequency_ref: float = 6.0,
        effective_radius: float = 0.5e-3,
    ) -> "LocomotionParams":
        """Choose the friction coefficient so the reference pitch and drive
        frequency produce ``target_speed``."""
        k = target_speed / (
            2.0 * math.pi * frequency_ref * effective_radius * math.sin(pitch_ref)
        )
        return cls(friction_coeff=k, effective_radius=effective_radius)


def locomotion_velocity(
    pitch_gamma: float, frequency_f: float, params: LocomotionParams
) -> float:
    """Net substrate-rolling speed of a pitched rotating swarm, m/s.

    Valid below the step-out frequency of the driven chains; zero pitch
    rolls in place and produces no drift.
    """
    if pitch_gamma < 0:
        raise ValueError("pitch_gamma must be non-negative")
    if frequency_f < 0:
        raise ValueError("frequency_f must be non-negative")
    return (
        params.friction_coeff
        * (2.0 * math.pi * frequency_f)
        * params.effective_radius
        * math.sin(pitch_gamma)
    )


@dataclass(frozen=True)
class SwarmParams:
    """Constants of the aggregation / merge / split model."""

    attraction_coeff: float = 5.0e-14  # m^3/s; pair speed = coeff*N_other/d^2
    attraction_cutoff: float = 3.0e-3  # m; no interaction beyond this
    contact_radius: float = 80e-6  # m; excluded radius scales with sqrt(N)
    contact_ref_n: int = 10
    max_speed: float = 150e-6  # m/s cap on the faster member of a pair
    capture_radius: float = 7.5e-7  # m; endpoint distance for merging
    merge_max_misalignment: float = math.radians(30.0)
    max_chain_particles: int = 50
    split_rate: float = 0.05  # 1/s per rim chain
    min_split_particles: int = 6
    swarm_threshold: float = 4.0  # ug/mm^2
    density_cell: float = 0.5e-3  # m
    region_interval: float = 0.5  # s between swarm-region refreshes
    region_min_cells: int = 2
    # center transport is orders of magnitude slower than axis rotation;
    # it integrates on this coarser cycle while rotation uses the base dt
    transport_interval: float = 10e-3
    locomotion: LocomotionParams = field(
        default_factory=LocomotionParams.calibrated
    )


class SwarmScene:
    """All chains and free particles of one simulation instant.

    Chains are stored struct-of-arrays for vectorised stepping; the
    ``chains`` property materialises :class:`ChainState` views.  Pairs
    (N=2) are dissolved into free particles on construction so every held
    chain supports the torque-balance closed forms.
    """

    def __init__(
        self,
        chains: list[ChainState],
        free_particles=None,
        spec: ParticleSpec = None,
        fluid: FluidSpec = None,
        tank: Tank = None,
        params: SwarmParams = None,
        time: float = 0.0,
        rng_seed: int = 0,
        _rng_state=None,
    ):
        self.spec = spec if spec is not None else ParticleSpec()
        self.fluid = fluid if fluid is not None else FluidSpec()
        self.tank = tank if tank is not None else Tank()
        self.params = params if params is not None else SwarmParams()
        self.time = float(time)
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        if _rng_state is not None:
            self.rng.bit_generator.state = _rng_state

        free = [] if free_particles is None else list(free_particles)
        kept = []
        for c in chains:
            if c.n_particles == 2:
                # pairs have a singular drag shape factor; keep them as
                # two loose particles at the member positions instead
                u = np.array([math.cos(c.axis_angle_phi), math.sin(c.axis_angle_phi)])
                center = np.asarray(c.center, dtype=float)
                for sign in (1.0, -1.0):
                    free.append(tuple(center + sign * self.spec.radius_a * u))
            else:
                kept.append(c)
        self.chain_n = np.array([c.n_particles for c in kept], dtype=np.int64)
        self.chain_pos = np.array(
            [c.center for c in kept], dtype=np.float64
        ).reshape(-1, 2)
        self.chain_phi = np.array([c.axis_angle_phi for c in kept], dtype=np.float64)
        self.chain_tilt = np.array([c.tilt for c in kept], dtype=np.float64)
        self.free_pos = np.array(free, dtype=np.float64).reshape(-1, 2)
        self._region_cache: SwarmRegion | None = None
        self._region_time = -math.inf
        self._structure_version = 0
        self._pair_tables = None
        self._transport_due = 0.0
        self._validate_positions()

    def _validate_positions(self):
        for name, pts in (("chain", self.chain_pos), ("free particle", self.free_pos)):
            if len(pts) and not np.all(self.tank.contains(pts)):
                raise ValueError(f"{name} positions must lie inside the tank")

    @property
    def chains(self) -> list[ChainState]:
        return [
            ChainState(
                n_particles=int(n),
                center=(float(p[0]), float(p[1])),
                axis_angle_phi=float(phi),
                tilt=float(tilt),
            )
            for n, p, phi, tilt in zip(
                self.chain_n, self.chain_pos, self.chain_phi, self.chain_tilt
            )
        ]

    @property
    def free_particles(self) -> list[tuple[float, float]]:
        return [(float(x), float(y)) for x, y in self.free_pos]

    def total_particles(self) -> int:
        return int(self.chain_n.sum()) + len(self.free_pos)

    def total_mass(self) -> float:
        return self.total_particles() * self.spec.mass_per_particle

    def center_of_mass(self) -> np.ndarray:
        weights = np.concatenate(
            [self.chain_n.astype(float), np.ones(len(self.free_pos))]
        )
        pos = np.vstack([self.chain_pos, self.free_pos])
        if len(pos) == 0:
            raise ValueError("empty scene has no center of mass")
        return (pos * weights[:, None]).sum(axis=0) / weights.sum()

    def copy(self) -> "SwarmScene":
        return copy.deepcopy(self)

    def chain_lengths(self) -> np.ndarray:
        return 2.0 * self.chain_n * self.spec.radius_a

    def _contact_radii(self) -> np.ndarray:
        p = self.params
        return p.contact_radius * np.sqrt(self.chain_n / p.contact_ref_n)


@dataclass(frozen=True)
class DensityGrid:
    """Area density of particle mass binned over the tank, ug/mm^2."""

    cell_size: float
    values: np.ndarray  # (ny, nx), row-major with y increasing by row

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def cell_area_mm2(self) -> float:
        return (self.cell_size * 1e3) ** 2

    def total_mass_kg(self) -> float:
        return float(self.values.sum()) * self.cell_area_mm2() / KG_TO_UG

    def cell_rect(self, iy: int, ix: int) -> Rect:
        s = self.cell_size
        return Rect(ix * s, iy * s, (ix + 1) * s, (iy + 1) * s)


@dataclass(frozen=True)
class SwarmRegion:
    """Inscribed rectangle of the gathered high-density region."""

    rectangle: Rect
    mean_density: float
    cell_count: int

    @property
    def half_width(self) -> float:
        return 0.5 * min(self.rectangle.width, self.rectangle.height)


def density_grid(scene: SwarmScene, cell_size: float) -> DensityGrid:
    """Bin particle mass into square cells covering the tank."""
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if cell_size > min(scene.tank.width, scene.tank.height):
        raise ValueError("cell_size exceeds tank dimensions")
    nx = int(math.ceil(scene.tank.width / cell_size - 1e-9))
    ny = int(math.ceil(scene.tank.height / cell_size - 1e-9))
    counts = np.zeros((ny, nx), dtype=np.float64)
    for pos, weight in (
        (scene.chain_pos, scene.chain_n.astype(np.float64)),
        (scene.free_pos, np.ones(len(scene.free_pos))),
    ):
        if len(pos) == 0:
            continue
        ix = np.clip((pos[:, 0] / cell_size).astype(int), 0, nx - 1)
        iy = np.clip((pos[:, 1] / cell_size).astype(int), 0, ny - 1)
        np.add.at(counts, (iy, ix), weight)
    mass_ug = counts * scene.spec.mass_per_particle * KG_TO_UG
    area_mm2 = (cell_size * 1e3) ** 2
    return DensityGrid(cell_size=cell_size, values=mass_ug / area_mm2)


def _largest_rectangle(mask: np.ndarray) -> tuple[int, int, int, int, int]:
    """Max-area axis-aligned rectangle of True cells.

    Returns (area, iy0, ix0, iy1, ix1) with exclusive upper bounds, via the
    row-histogram stack scan.
    """
    ny, nx = mask.shape
    heights = np.zeros(nx, dtype=int)
    best = (0, 0, 0, 0, 0)
    for iy in range(ny):
        heights = np.where(mask[iy], heights + 1, 0)
        stack: list[int] = []
        for ix in range(nx + 1):
            h = int(heights[ix]) if ix < nx else 0
            while stack and int(heights[stack[-1]]) >= h:
                bar = int(heights[stack.pop()])
                left = stack[-1] + 1 if stack else 0
                area = bar * (ix - left)
                if area > best[0]:
                    best = (area, iy - bar + 1, left, iy + 1, ix)
            stack.append(ix)
    return best


def swarm_region(
    grid: DensityGrid, threshold: float, min_cells: int = 2
) -> SwarmRegion | None:
    """Largest inscribed rectangle of the biggest connected region of cells
    at or above ``threshold``; None when no region has ``min_cells`` cells."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    mask = grid.values >= threshold
    labels, n_comp = ndimage.label(mask)
    if n_comp == 0:
        return None
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n_comp + 1))
    biggest = int(np.argmax(sizes)) + 1
    if sizes[biggest - 1] < min_cells:
        return None
    comp = labels == biggest
    area, iy0, ix0, iy1, ix1 = _largest_rectangle(comp)
    if area == 0:
        return None
    s = grid.cell_size
    rect = Rect(ix0 * s, iy0 * s, ix1 * s, iy1 * s)
    mean_density = float(grid.values[iy0:iy1, ix0:ix1].mean())
    return SwarmRegion(
        rectangle=rect, mean_density=mean_density, cell_count=int(sizes[biggest - 1])
    )


def _axis_misalignment(phi_a, phi_b):
    """Angle between two undirected axes, in [0, pi/2]."""
    d = np.mod(phi_a - phi_b, math.pi)
    return np.minimum(d, math.pi - d)


class _PairWork:
    """Shared pair geometry for one sub-step over all agents.

    Chains come first in the agent ordering, free particles after.
    """

    def __init__(self, scene: SwarmScene):
        self.k = len(scene.chain_n)
        self.m = len(scene.free_pos)
        pos = (
            np.vstack([scene.chain_pos, scene.free_pos])
            if self.m
            else scene.chain_pos
        )
        self.pos = pos
        self.dx = pos[None, :, 0] - pos[:, None, 0]
        self.dy = pos[None, :, 1] - pos[:, None, 1]
        self.d2 = self.dx * self.dx + self.dy * self.dy
        np.fill_diagonal(self.d2, np.inf)
        self._d = None

    @property
    def d(self):
        if self._d is None:
            self._d = np.sqrt(self.d2)
        return self._d


def _static_pair_tables(scene: SwarmScene):
    """Per-configuration matrices reused until the chain set changes."""
    key = (
        getattr(scene, "_structure_version", 0),
        len(scene.chain_n),
        len(scene.free_pos),
    )
    cached = getattr(scene, "_pair_tables", None)
    if cached is not None and cached[0] == key:
        return cached[1]
    p = scene.params
    n_eff = np.concatenate(
        [scene.chain_n.astype(np.float64), np.ones(len(scene.free_pos))]
    )
    rex = np.concatenate([scene._contact_radii(), np.zeros(len(scene.free_pos))])
    rex_sum = rex[:, None] + rex[None, :]
    masses = scene.chain_n.astype(np.float64)
    if len(masses) > 1:
        mass_share = masses[None, :] / (masses[:, None] + masses[None, :])
    else:
        mass_share = np.zeros((len(masses), len(masses)))
    half_len = 0.5 * scene.chain_lengths()
    reach2 = (half_len[:, None] + half_len[None, :] + p.capture_radius) ** 2
    speed_cap = p.max_speed / np.maximum(n_eff[:, None], n_eff[None, :])
    k = len(scene.chain_n)
    tables = {
        "n_eff": n_eff,
        "rex_sum2": rex_sum**2,
        "rex_sum": rex_sum[:k, :k],
        "mass_share": mass_share,
        "reach2": reach2,
        "speed_cap": speed_cap,
    }
    scene._pair_tables = (key, tables)
    return tables


def step(scene: SwarmScene, field_cmd: FieldCommand, dt: float) -> SwarmScene:
    """Advance the scene by ``dt`` seconds in place and return it.

    Raises :class:`IntegrationError` when the rotation update would exceed
    pi/4 per step; halve ``dt`` and retry in that case.  Total particle
    count is conserved exactly through merges, captures, and splits.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    p = scene.params
    drive_on = field_cmd.magnitude_b > 0

    # rigid-axis rotation toward the instantaneous field direction
    if drive_on and len(scene.chain_n):
        theta = field_cmd.angle_at(scene.time)
        omega_max = rotation_rate_limit(
            scene.chain_n, scene.spec, scene.fluid, field_cmd.magnitude_b
        )
        dphi = dt * omega_max * np.sin(2.0 * (theta - scene.chain_phi))
        worst = float(np.abs(dphi).max())
        if worst > math.pi / 4.0:
            raise IntegrationError(
                f"unstable rotation step (|dphi|={worst:.3g} rad); reduce dt"
            )
        scene.chain_phi = wrap_angle(scene.chain_phi + dphi)
        scene.chain_tilt[:] = field_cmd.pitch_gamma

    locomoting = (
        field_cmd.mode == FIELD_ROTATING
        and field_cmd.pitch_gamma > 0
        and field_cmd.frequency_f > 0
    )
    moving = p.attraction_coeff > 0 or locomoting
    if drive_on and moving:
        scene._transport_due += dt
        if scene._transport_due >= p.transport_interval - 1e-12:
            t_dt = scene._transport_due
            scene._transport_due = 0.0
            _advance_centers(scene, field_cmd, t_dt, locomoting)
            # merge on raw approach distances, then project leftovers apart
            _merge_and_capture(scene)
            _resolve_contacts(scene)
            if p.split_rate > 0:
                _split_rim_chains(scene, field_cmd, t_dt)

    scene.time += dt
    return scene


def _advance_centers(scene: SwarmScene, field_cmd: FieldCommand, dt, locomoting):
    p = scene.params
    tables = _static_pair_tables(scene)
    work = _PairWork(scene)
    a = len(work.pos)
    if a == 0:
        return
    vel = np.zeros_like(work.pos)

    if a > 1 and p.attraction_coeff > 0:
        active = (work.d2 < p.attraction_cutoff**2) & (work.d2 > tables["rex_sum2"])
        # pair kernel, capped so the faster member stays under max_speed;
        # the cap is pair-symmetric so mass-weighted momentum cancels and
        # the center of mass is preserved
        s = np.minimum(p.attraction_coeff / work.d2, tables["speed_cap"])
        coeff = np.where(active, s * tables["n_eff"][None, :] / work.d, 0.0)
        vel[:, 0] = coeff @ work.pos[:, 0] - coeff.sum(axis=1) * work.pos[:, 0]
        vel[:, 1] = coeff @ work.pos[:, 1] - coeff.sum(axis=1) * work.pos[:, 1]

    if locomoting:
        speed = locomotion_velocity(
            field_cmd.pitch_gamma, field_cmd.frequency_f, p.locomotion
        )
        vel[:, 0] += speed * math.cos(field_cmd.yaw_alpha)
        vel[:, 1] += speed * math.sin(field_cmd.yaw_alpha)

    pos = work.pos + vel * dt
    pos[:, 0] = np.clip(pos[:, 0], 0.0, scene.tank.width)
    pos[:, 1] = np.clip(pos[:, 1], 0.0, scene.tank.height)
    kc = len(scene.chain_n)
    scene.chain_pos = pos[:kc]
    scene.free_pos = pos[kc:]


def _resolve_contacts(scene: SwarmScene, n_iterations: int = 1):
    """Push overlapping chain discs apart, split inversely by mass."""
    k = len(scene.chain_n)
    if k < 2:
        return
    tables = _static_pair_tables(scene)
    rex_sum2 = tables["rex_sum2"][:k, :k]
    rex_sum = tables["rex_sum"]
    mass_share = tables["mass_share"]
    for _ in range(n_iterations):
        dx = scene.chain_pos[None, :, 0] - scene.chain_pos[:, None, 0]
        dy = scene.chain_pos[None, :, 1] - scene.chain_pos[:, None, 1]
        d2 = dx * dx + dy * dy
        np.fill_diagonal(d2, 1.0)  # self-distance of 1 m: never touching
        touching = d2 < rex_sum2
        if not touching.any():
            break
        d = np.sqrt(d2)
        # move i away from j by the j-mass share of the overlap
        push = np.where(touching, (rex_sum - d) * mass_share / d, 0.0)
        corr_x = push @ scene.chain_pos[:, 0] - push.sum(axis=1) * scene.chain_pos[:, 0]
        corr_y = push @ scene.chain_pos[:, 1] - push.sum(axis=1) * scene.chain_pos[:, 1]
        scene.chain_pos = scene.chain_pos + np.stack([-corr_x, -corr_y], axis=1)
        scene.chain_pos[:, 0] = np.clip(scene.chain_pos[:, 0], 0.0, scene.tank.width)
        scene.chain_pos[:, 1] = np.clip(scene.chain_pos[:, 1], 0.0, scene.tank.height)


def _merge_and_capture(scene: SwarmScene):
    p = scene.params
    k = len(scene.chain_n)
    merged: set[int] = set()
    if k >= 2:
        tables = _static_pair_tables(scene)
        dx = scene.chain_pos[None, :, 0] - scene.chain_pos[:, None, 0]
        dy = scene.chain_pos[None, :, 1] - scene.chain_pos[:, None, 1]
        d2 = dx * dx + dy * dy
        np.fill_diagonal(d2, np.inf)
        close = np.triu(d2 <= tables["reach2"][:k, :k], 1)
        cand_i, cand_j = np.nonzero(close)
        ends = [None] * k
        for i, j in zip(cand_i.tolist(), cand_j.tolist()):
            if i in merged or j in merged:
                continue
            if scene.chain_n[i] + scene.chain_n[j] > p.max_chain_particles:
                continue
            mis = _axis_misalignment(scene.chain_phi[i], scene.chain_phi[j])
            if mis >= p.merge_max_misalignment:
                continue
            for idx in (i, j):
                if ends[idx] is None:
                    ends[idx] = _endpoints(scene, idx)
            gap = np.linalg.norm(
                ends[i][:, None, :] - ends[j][None, :, :], axis=-1
            ).min()
            if gap >= p.capture_radius:
                continue
            _merge_pair(scene, i, j)
            merged.update((i, j))
            ends[i] = None

    # free particles within the capture radius attach to the nearest chain
    absorbed_any = False
    if len(scene.free_pos) and len(scene.chain_n):
        d = np.linalg.norm(
            scene.free_pos[:, None, :] - scene.chain_pos[None, :, :], axis=-1
        )
        nearest = np.argmin(d, axis=1)
        close = d[np.arange(len(scene.free_pos)), nearest] < p.capture_radius
        absorbed = []
        for fi in np.nonzero(close)[0].tolist():
            ci = int(nearest[fi])
            if scene.chain_n[ci] >= p.max_chain_particles:
                continue
            n = scene.chain_n[ci]
            scene.chain_pos[ci] = (n * scene.chain_pos[ci] + scene.free_pos[fi]) / (
                n + 1
            )
            scene.chain_n[ci] = n + 1
            absorbed.append(fi)
        if absorbed:
            keep = np.ones(len(scene.free_pos), dtype=bool)
            keep[absorbed] = False
            scene.free_pos = scene.free_pos[keep]
            absorbed_any = True

    if merged:
        keep = np.ones(len(scene.chain_n), dtype=bool)
        keep[[i for i in merged if scene.chain_n[i] == 0]] = False
        scene.chain_n = scene.chain_n[keep]
        scene.chain_pos = scene.chain_pos[keep]
        scene.chain_phi = scene.chain_phi[keep]
        scene.chain_tilt = scene.chain_tilt[keep]
    if merged or absorbed_any:
        scene._structure_version += 1


def _endpoints(scene: SwarmScene, idx: int) -> np.ndarray:
    half = scene.chain_n[idx] * scene.spec.radius_a
    u = np.array([math.cos(scene.chain_phi[idx]), math.sin(scene.chain_phi[idx])])
    c = scene.chain_pos[idx]
    return np.stack([c + half * u, c - half * u])


def _merge_pair(scene: SwarmScene, i: int, j: int):
    ni, nj = float(scene.chain_n[i]), float(scene.chain_n[j])
    total = ni + nj
    center = (ni * scene.chain_pos[i] + nj * scene.chain_pos[j]) / total
    # undirected mass-weighted axis mean
    ang = np.array([scene.chain_phi[i], scene.chain_phi[j]])
    w = np.array([ni, nj])
    vec = (w[:, None] * np.stack([np.cos(2 * ang), np.sin(2 * ang)], axis=1)).sum(0)
    phi = 0.5 * math.atan2(vec[1], vec[0])
    scene.chain_n[i] = int(total)
    scene.chain_pos[i] = center
    scene.chain_phi[i] = float(wrap_angle(phi))
    scene.chain_tilt[i] = 0.5 * (scene.chain_tilt[i] + scene.chain_tilt[j])
    scene.chain_n[j] = 0  # marked for removal by caller


def current_swarm_region(scene: SwarmScene) -> SwarmRegion | None:
    """Swarm region at the scene's cached refresh cadence."""
    p = scene.params
    if scene.time - scene._region_time >= p.region_interval:
        grid = density_grid(scene, p.density_cell)
        scene._region_cache = swarm_region(
            grid, p.swarm_threshold, p.region_min_cells
        )
        scene._region_time = scene.time
    return scene._region_cache


def _split_rim_chains(scene: SwarmScene, field_cmd: FieldCommand, dt: float):
    p = scene.params
    region = current_swarm_region(scene)
    if region is None or len(scene.chain_n) == 0:
        return
    r = region.rectangle
    band = np.maximum(scene.chain_lengths(), p.density_cell)
    x, y = scene.chain_pos[:, 0], scene.chain_pos[:, 1]
    inside = (x >= r.x0) & (x <= r.x1) & (y >= r.y0) & (y <= r.y1)
    edge_dist = np.minimum.reduce([x - r.x0, r.x1 - x, y - r.y0, r.y1 - y])
    at_rim = inside & (edge_dist <= band) & (scene.chain_n >= p.min_split_particles)
    if not at_rim.any():
        return
    rolls = scene.rng.random(int(at_rim.sum()))
    split_idx = np.nonzero(at_rim)[0][rolls < p.split_rate * dt]
    if len(split_idx) == 0:
        return
    lo = np.zeros(2)
    hi = np.array([scene.tank.width, scene.tank.height])
    new_n, new_pos, new_phi, new_tilt = [], [], [], []
    for ci in split_idx.tolist():
        n = int(scene.chain_n[ci])
        n1, n2 = n // 2, n - n // 2
        u = np.array([math.cos(scene.chain_phi[ci]), math.sin(scene.chain_phi[ci])])
        gap = 0.5 * n * scene.spec.radius_a  # quarter of the parent length
        c = scene.chain_pos[ci].copy()
        scene.chain_n[ci] = n1
        scene.chain_pos[ci] = np.clip(c - gap * u * (n2 / n), lo, hi)
        new_n.append(n2)
        new_pos.append(np.clip(c + gap * u * (n1 / n), lo, hi))
        new_phi.append(scene.chain_phi[ci])
        new_tilt.append(scene.chain_tilt[ci])
    scene.chain_n = np.concatenate([scene.chain_n, np.array(new_n, dtype=np.int64)])
    scene.chain_pos = np.vstack([scene.chain_pos, np.array(new_pos)])
    scene.chain_phi = np.concatenate([scene.chain_phi, np.array(new_phi)])
    scene.chain_tilt = np.concatenate([scene.chain_tilt, np.array(new_tilt)])
    scene._structure_version += 1


def step_with_retry(
    scene: SwarmScene, field_cmd: FieldCommand, dt: float, max_halvings: int = 6
) -> SwarmScene:
    """Step the scene, substituting 2^-k sub-steps when dt is unstable.

    The scene is snapshotted before each attempt so a failure mid-sequence
    rolls back cleanly before retrying at the finer step.
    """
    parts = 1
    for _ in range(max_halvings + 1):
        backup = scene.copy()
        try:
            for _ in range(parts):
                step(scene, field_cmd, dt / parts)
            return scene
        except IntegrationError:
            _restore(scene, backup)
            parts *= 2
    raise IntegrationError(f"scene step unstable down to dt={dt / parts:.3g}s")


def _restore(scene: SwarmScene, backup: SwarmScene):
    scene.__dict__.update(backup.__dict__)
