"""Dipolar magnetics of rigid particle chains driven by external fields.

Closed forms for the induced moment, pairwise dipole forces, the magnetic
torque on a chain held at an angle to the field, the opposing viscous drag
torque, and the resulting steady phase lag / step-out boundary of a chain
in a rotating field.  A fixed-step ODE integrator for the overdamped chain
rotation is included as an independent numerical cross-check of the closed
forms.

Unit convention: the induced moment carries a factor of mu0 (moment =
(4/3)*pi*a^3*mu0*chi*B).  Forces and torques derived from it are mutually
consistent under this convention but differ from SI-moment literature by a
factor of mu0^2.  A susceptibility of chi_SI/mu0 reproduces SI-convention
torque magnitudes; see defaults.py.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Vacuum permeability, T*m/A
MU0 = 4.0 * math.pi * 1e-7

# Magnetite bulk density, kg/m^3, used for the default particle mass
MAGNETITE_DENSITY = 5170.0

FIELD_STATIC = "static"
FIELD_ROTATING = "rotating"


class IntegrationError(RuntimeError):
    """Raised when a fixed-step integration becomes unstable."""


def _default_particle_mass(radius: float) -> float:
    return MAGNETITE_DENSITY * (4.0 / 3.0) * math.pi * radius**3


@dataclass(frozen=True)
class ParticleSpec:
    """Geometry and material parameters of a single paramagnetic particle.

    ``mass_per_particle`` defaults to a magnetite sphere of the given
    radius; scenarios that coarse-grain many physical particles into one
    simulated agent override it.
    """

    radius_a: float = 250e-9
    susceptibility_chi: float = 1.0
    mass_per_particle: float | None = None

    def __post_init__(self):
        if self.radius_a <= 0:
            raise ValueError(f"radius_a must be positive, got {self.radius_a}")
        if self.susceptibility_chi <= 0:
            raise ValueError(
                f"susceptibility_chi must be positive, got {self.susceptibility_chi}"
            )
        if self.mass_per_particle is None:
            object.__setattr__(
                self, "mass_per_particle", _default_particle_mass(self.radius_a)
            )
        if self.mass_per_particle <= 0:
            raise ValueError("mass_per_particle must be positive")

    @property
    def volume(self) -> float:
        return (4.0 / 3.0) * math.pi * self.radius_a**3


@dataclass(frozen=True)
class FieldCommand:
    """External magnetic field program.

    ``yaw_alpha`` is the in-plane direction angle (radians from +x); for a
    rotating field it is the heading used for locomotion while the field
    vector sweeps the plane at ``frequency_f`` rotations per second.
    ``pitch_gamma`` tilts the rotation plane out of the substrate plane.
    """

    magnitude_b: float
    yaw_alpha: float = 0.0
    pitch_gamma: float = 0.0
    mode: str = FIELD_STATIC
    frequency_f: float = 0.0
    phase0: float = 0.0

    def __post_init__(self):
        if self.magnitude_b < 0:
            raise ValueError("magnitude_b must be non-negative")
        if self.mode not in (FIELD_STATIC, FIELD_ROTATING):
            raise ValueError(f"unknown field mode {self.mode!r}")
        if self.frequency_f < 0:
            raise ValueError("frequency_f must be non-negative")
        if not 0.0 <= self.pitch_gamma < math.pi / 2:
            raise ValueError("pitch_gamma must lie in [0, pi/2)")

    @property
    def omega(self) -> float:
        """Angular drive rate, rad/s (zero for a static field)."""
        if self.mode == FIELD_ROTATING:
            return 2.0 * math.pi * self.frequency_f
        return 0.0

    def angle_at(self, t: float) -> float:
        """In-plane field direction at time ``t`` seconds."""
        if self.mode == FIELD_ROTATING:
            return self.phase0 + self.omega * t
        return self.yaw_alpha


@dataclass(frozen=True)
class FluidSpec:
    viscosity_eta: float = 2.0e-3  # Pa*s, 2 wt% PVP solution

    def __post_init__(self):
        if self.viscosity_eta <= 0:
            raise ValueError("viscosity_eta must be positive")


def wrap_angle(phi):
    """Wrap an angle (scalar or array) into [0, 2*pi)."""
    return np.mod(phi, 2.0 * math.pi)


@dataclass
class ChainState:
    """A rigid linear aggregate of ``n_particles`` particles.

    ``center`` is the 2D imaging-plane position in metres,
    ``axis_angle_phi`` the in-plane axis direction, and ``tilt`` the
    out-of-plane tilt induced by a pitched rotating field.
    """

    n_particles: int
    center: tuple[float, float] = (0.0, 0.0)
    axis_angle_phi: float = 0.0
    tilt: float = 0.0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("a chain needs at least 2 particles")
        self.axis_angle_phi = float(wrap_angle(self.axis_angle_phi))

    def length(self, spec: ParticleSpec) -> float:
        """Chain length 2*N*a in metres."""
        return 2.0 * self.n_particles * spec.radius_a

    def endpoints(self, spec: ParticleSpec) -> np.ndarray:
        """(2, 2) array of the two chain end positions."""
        half = 0.5 * self.length(spec)
        u = np.array([math.cos(self.axis_angle_phi), math.sin(self.axis_angle_phi)])
        c = np.asarray(self.center, dtype=float)
        return np.stack([c + half * u, c - half * u])


@dataclass(frozen=True)
class Synchronous:
    """Chain rotates locked to the field, trailing by ``phase_lag_alpha``."""

    phase_lag_alpha: float


@dataclass(frozen=True)
class StepOut:
    """Drive too fast for torque balance; chain slips at a lower mean rate."""

    mean_rotation_rate: float


TorqueBalanceResult = Synchronous | StepOut


def dipole_moment(spec: ParticleSpec, b_field: float) -> float:
    """Induced dipole moment of one particle in a field of magnitude ``b_field``."""
    if b_field < 0:
        raise ValueError("field magnitude must be non-negative")
    return (4.0 / 3.0) * math.pi * spec.radius_a**3 * MU0 * spec.susceptibility_chi * b_field


def pair_force(moment: float, r: float, alpha: float) -> tuple[float, float]:
    """Dipole-dipole force between two particles at separation ``r``.

    ``alpha`` is the angle between the field direction and the line joining
    the particles.  Returns ``(radial, tangential)`` components; positive
    radial points along the separation unit vector (repulsive).
    """
    if r <= 0:
        raise ValueError("separation r must be positive")
    prefactor = 3.0 * moment**2 / (4.0 * math.pi * MU0 * r**4)
    radial = prefactor * (3.0 * math.cos(alpha) ** 2 - 1.0)
    tangential = prefactor * math.sin(2.0 * alpha)
    return radial, tangential


def chain_magnetic_torque(
    chain: ChainState, spec: ParticleSpec, b_field: float, alpha: float
) -> float:
    """Torque driving a chain whose axis trails the field by ``alpha``."""
    n = chain.n_particles
    return (
        math.pi
        * MU0
        * spec.radius_a**3
        * spec.susceptibility_chi**2
        * n**2
        / 12.0
        * b_field**2
        * math.sin(2.0 * alpha)
    )


def shape_factor(n_particles: int) -> float:
    """Rotational drag shape factor of a linear chain, 2*N^2/ln(N/2)."""
    if n_particles < 2:
        raise ValueError("not a chain: need at least 2 particles")
    if n_particles == 2:
        raise ValueError("shape factor singular at N=2")
    return 2.0 * n_particles**2 / math.log(n_particles / 2.0)


def chain_drag_torque(
    chain: ChainState, spec: ParticleSpec, fluid: FluidSpec, omega: float
) -> float:
    """Viscous torque opposing rotation of a chain at angular rate ``omega``."""
    kappa = shape_factor(chain.n_particles)
    volume = chain.n_particles * spec.volume
    return kappa * volume * fluid.viscosity_eta * omega


def rotation_rate_limit(n_particles, spec: ParticleSpec, fluid: FluidSpec, b_field):
    """Maximum sustainable rotation rate of a chain, rad/s.

    This is the ratio of peak magnetic torque to rotational drag; it sets
    both the overdamped realignment rate and the step-out boundary.
    Accepts scalar or array ``n_particles``/``b_field``.
    """
    n = np.asarray(n_particles, dtype=float)
    if np.any(n < 3):
        raise ValueError("rotation rate limit defined for chains of N >= 3")
    return (
        MU0
        * spec.susceptibility_chi**2
        * np.asarray(b_field, dtype=float) ** 2
        * np.log(n / 2.0)
        / (32.0 * n * fluid.viscosity_eta)
    )


def step_out_frequency(
    chain: ChainState, spec: ParticleSpec, fluid: FluidSpec, b_field: float
) -> float:
    """Drive frequency in Hz above which synchronous rotation is lost."""
    if b_field <= 0:
        raise ValueError("step-out frequency undefined for zero field")
    return float(rotation_rate_limit(chain.n_particles, spec, fluid, b_field)) / (
        2.0 * math.pi
    )


def phase_lag(
    chain: ChainState,
    spec: ParticleSpec,
    fluid: FluidSpec,
    field_cmd: FieldCommand,
) -> TorqueBalanceResult:
    """Steady-state torque balance of a chain in a rotating field.

    Below step-out the stable root of the balance gives a constant phase
    lag in [0, pi/4].  At or above step-out the chain slips; the reported
    mean rotation rate comes from the rotation ODE integrated over many
    drive periods.
    """
    if field_cmd.mode != FIELD_ROTATING:
        raise ValueError("phase lag is defined for rotating fields")
    if chain.n_particles == 2:
        raise ValueError("shape factor singular at N=2")
    omega = field_cmd.omega
    if omega == 0.0:
        return Synchronous(0.0)
    if field_cmd.magnitude_b == 0.0:
        return StepOut(0.0)
    omega_max = float(
        rotation_rate_limit(chain.n_particles, spec, fluid, field_cmd.magnitude_b)
    )
    s = omega / omega_max
    if s < 1.0:
        return Synchronous(0.5 * math.asin(s))
    rate = _mean_slip_rate(omega, omega_max)
    return StepOut(rate)


def _mean_slip_rate(omega_drive: float, omega_max: float, n_periods: int = 40) -> float:
    """Mean chain rotation rate above step-out, from the rotation ODE."""
    t_end = n_periods * 2.0 * math.pi / omega_drive
    dt = min(1.0 / (200.0 * omega_drive / (2.0 * math.pi)), 0.05 / omega_max)
    series = _integrate_rotation(
        phi0=0.0,
        omega_max=omega_max,
        field_angle=lambda t: omega_drive * t,
        dt=dt,
        t_end=t_end,
    )
    # skip the first quarter as transient
    k = len(series.phi) // 4
    return (series.phi[-1] - series.phi[k]) / (series.t[-1] - series.t[k])


@dataclass
class RotationSeries:
    """Time series of a chain axis angle under the overdamped rotation law."""

    t: np.ndarray
    phi: np.ndarray
    field_angle: np.ndarray

    def steady_lag(self, tail_fraction: float = 0.25) -> float:
        """Mean field-to-axis lag over the trailing part of the series."""
        k = int(len(self.t) * (1.0 - tail_fraction))
        lag = self.field_angle[k:] - self.phi[k:]
        return float(np.mod(lag + math.pi, 2.0 * math.pi).mean() - math.pi)

    def mean_rate(self, tail_fraction: float = 0.75) -> float:
        k = int(len(self.t) * (1.0 - tail_fraction))
        return float((self.phi[-1] - self.phi[k]) / (self.t[-1] - self.t[k]))


def _integrate_rotation(phi0, omega_max, field_angle, dt, t_end) -> RotationSeries:
    n_steps = max(1, int(round(t_end / dt)))
    t = np.arange(n_steps + 1) * dt
    theta = np.array([field_angle(tk) for tk in t])
    phi = np.empty(n_steps + 1)
    phi[0] = phi0
    limit = math.pi / 4.0
    for k in range(n_steps):
        dphi = dt * omega_max * math.sin(2.0 * (theta[k] - phi[k]))
        if abs(dphi) > limit:
            raise IntegrationError(
                f"unstable step at t={t[k]:.3g}s: |dphi|={abs(dphi):.3g} rad; reduce dt"
            )
        phi[k + 1] = phi[k] + dphi
    return RotationSeries(t=t, phi=phi, field_angle=theta)


def ode_rotation_oracle(
    chain: ChainState,
    spec: ParticleSpec,
    fluid: FluidSpec,
    field_cmd: FieldCommand,
    dt: float,
    t_end: float,
) -> RotationSeries:
    """Integrate the overdamped rotation of a chain axis, fixed-step explicit.

    The axis angle obeys dphi/dt = omega_max * sin(2*(theta_field - phi)),
    the pointwise balance of magnetic and viscous torque.  Deterministic
    given its inputs.  Raises :class:`IntegrationError` when a step would
    rotate the axis by more than pi/4; callers should halve ``dt``.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    if field_cmd.mode == FIELD_ROTATING and field_cmd.frequency_f > 0:
        if dt > 1.0 / (100.0 * field_cmd.frequency_f):
            raise ValueError("dt too coarse: need dt <= 1/(100*frequency)")
    omega_max = float(
        rotation_rate_limit(chain.n_particles, spec, fluid, field_cmd.magnitude_b)
    )
    return _integrate_rotation(
        phi0=chain.axis_angle_phi,
        omega_max=omega_max,
        field_angle=field_cmd.angle_at,
        dt=dt,
        t_end=t_end,
    )


def integrate_rotation_with_retry(
    chain: ChainState,
    spec: ParticleSpec,
    fluid: FluidSpec,
    field_cmd: FieldCommand,
    dt: float,
    t_end: float,
    max_halvings: int = 8,
) -> RotationSeries:
    """Run the rotation oracle, halving dt (whole-run restart) on instability."""
    for _ in range(max_halvings + 1):
        try:
            return ode_rotation_oracle(chain, spec, fluid, field_cmd, dt, t_end)
        except IntegrationError:
            dt *= 0.5
    raise IntegrationError(f"rotation integration unstable down to dt={dt:.3g}s")
