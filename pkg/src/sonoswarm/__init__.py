"""Rotating-field nanoparticle swarm simulator with synthetic B-mode imaging."""

from .magnetics import (
    FIELD_ROTATING,
    FIELD_STATIC,
    MU0,
    ChainState,
    FieldCommand,
    FluidSpec,
    IntegrationError,
    ParticleSpec,
    StepOut,
    Synchronous,
    TorqueBalanceResult,
    chain_drag_torque,
    chain_magnetic_torque,
    dipole_moment,
    ode_rotation_oracle,
    pair_force,
    phase_lag,
    step_out_frequency,
)
from .navigation import (
    NavState,
    Waypoint,
    close_loop,
    image_centroid,
    plan_rectangle,
    steer,
)
from .session import SimulationSession
from .sonography import (
    ContrastModelParams,
    IntensityTrace,
    ProbeSpec,
    Roi,
    UltrasoundFrame,
    alias_frequency,
    calibrate,
    density_response,
    detect_swarm,
    directivity,
    dominant_frequency,
    render_frame,
    roi_from_rect,
    roi_mean_intensity,
    trace,
)
from .swarm import (
    DensityGrid,
    LocomotionParams,
    Rect,
    SwarmParams,
    SwarmRegion,
    SwarmScene,
    Tank,
    density_grid,
    locomotion_velocity,
    step,
    swarm_region,
)

__version__ = "0.1.0"
