"""Synthetic strain-field generator.

Solves the damped beam-string equation

    d2e/dt2 + zeta de/dt + EI d4e/dz4 - T d2e/dz2 = F(z, t)

on a pinned-pinned span by modal superposition: substituting
e = sum_n q_n(t) sin(n pi z / L) decouples the PDE into driven damped
oscillators q_n'' + zeta q_n' + omega_n^2 q_n = f_n(t) with

    omega_n = sqrt(EI (n pi / L)^4 + T (n pi / L)^2),

each integrated from rest with RK4 (sub-stepped well below the fastest
modal period). The forcing is a sum of sinusoidal modal components; the
sheared-current builder models lock-in under a linear profile U(z) ~ z/L:
each mode is driven at its own natural frequency from the power-in region
where the local Strouhal frequency crosses it, so the response is a
stack of modal tones whose membership grows with the current speed.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataflow import SensorLayout, StrainField, WindowSpec, normalize
from .errors import ConfigError, DataError, DivergenceError

PROFILE_VELOCITY = {"slow": 0.50, "medium": 1.50, "fast": 2.20}

# Strouhal-like scaling for the dominant shedding frequency, f = St * U / D
STROUHAL = 0.17
DIAMETER = 0.027  # m

DEFAULT_OBSERVER_FRACTIONS = (0.2, 0.5, 0.8)
HARMONIC_AMPLITUDES = (1.0, 0.12, 0.04)


@dataclass(frozen=True)
class RiserConfig:
    """Geometry and material numbers, normalized by mass per unit length."""

    length: float = 38.0        # m
    ei: float = 5.0e4           # bending stiffness / (mass/length), m^4/s^2
    tension: float = 5776.0     # tension / (mass/length), m^2/s^2
    damping: float = 1.5        # zeta, 1/s
    n_modes: int = 12
    z_points: int = 500
    sample_rate: float = 120.0  # Hz

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigError(f"length must be positive, got {self.length}")
        if self.ei < 0 or self.tension < 0:
            raise ConfigError("EI and tension must be non-negative")
        if self.ei + self.tension <= 0:
            raise ConfigError("EI + tension must be positive (no restoring force)")
        if self.damping < 0:
            raise ConfigError("damping must be non-negative")
        if self.n_modes < 1:
            raise ConfigError("n_modes must be >= 1")
        if self.z_points < 2 or self.n_modes > self.z_points / 2:
            raise ConfigError(
                f"need n_modes <= z_points/2, got {self.n_modes} vs {self.z_points}"
            )
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")


@dataclass(frozen=True)
class ForcingSpec:
    """Sinusoidal modal forcing: components are (mode index n, amplitude,
    angular frequency, phase). With shear_profile=True each amplitude is
    multiplied by the projection of a linear U(z) = U z/L profile onto its
    sine mode, s_n = 2 (-1)^(n+1) / (n pi)."""

    components: tuple = ()
    max_velocity_U: float = 0.0
    shear_profile: bool = False

    def __post_init__(self):
        comps = tuple(
            (int(n), float(a), float(w), float(p)) for n, a, w, p in self.components
        )
        object.__setattr__(self, "components", comps)
        for n, a, w, p in comps:
            if n < 1:
                raise ConfigError(f"mode index must be >= 1, got {n}")
            if not (math.isfinite(a) and math.isfinite(w) and math.isfinite(p)):
                raise ConfigError("forcing amplitudes/frequencies/phases must be finite")


def shear_mode_factor(n):
    """L2 projection coefficient of the linear shear profile z/L onto
    sin(n pi z / L) (with the 2/L mode normalization)."""
    return 2.0 * (-1.0) ** (n + 1) / (n * math.pi)


def modal_frequencies(config):
    """Natural angular frequencies omega_n, strictly increasing in n."""
    n = np.arange(1, config.n_modes + 1)
    k = n * math.pi / config.length
    return np.sqrt(config.ei * k ** 4 + config.tension * k ** 2)


def _forcing_matrices(config, forcing):
    """Collate components into the (n_modes, K) amplitude matrix plus the
    shared angular-frequency and phase vectors (K unique sinusoids)."""
    columns = {}
    amp = []
    for n, a, w, p in forcing.components:
        if n > config.n_modes:
            raise ConfigError(
                f"forcing targets mode {n} but the config resolves {config.n_modes}"
            )
        key = (w, p)
        if key not in columns:
            columns[key] = len(columns)
            amp.append(np.zeros(config.n_modes))
        factor = shear_mode_factor(n) if forcing.shear_profile else 1.0
        amp[columns[key]][n - 1] += a * factor
    if not columns:
        return (np.zeros((config.n_modes, 0)), np.zeros(0), np.zeros(0))
    omf = np.array([w for w, _ in columns])
    phase = np.array([p for _, p in columns])
    return np.column_stack(amp), omf, phase


def _mode_shapes(config):
    z = np.linspace(0.0, config.length, config.z_points)
    n = np.arange(1, config.n_modes + 1)
    shapes = np.sin(np.outer(z, n) * (math.pi / config.length))
    # pinned ends are exact zeros by construction, not up to sin(n*pi) roundoff
    shapes[0, :] = 0.0
    shapes[-1, :] = 0.0
    return z, shapes


def simulate(config, forcing, duration_s, case_label="", t_start=0.0,
             initial_state=None, return_state=False):
    """Integrate the modal system and superpose mode shapes into a StrainField.

    Starts from rest unless initial_state=(q0, v0) is given (as returned by a
    previous call with return_state=True, enabling seamless continuation).
    """
    n_steps = int(round(duration_s * config.sample_rate))
    if n_steps < 2:
        raise ConfigError(
            f"duration {duration_s}s at {config.sample_rate}Hz gives {n_steps} steps; need >= 2"
        )
    omega = modal_frequencies(config)
    omega2 = omega * omega
    amp, omf, phase = _forcing_matrices(config, forcing)
    dt = 1.0 / config.sample_rate
    substeps = max(1, math.ceil(10.0 * float(omega[-1]) * dt))

    if initial_state is None:
        q0 = np.zeros(config.n_modes)
        v0 = np.zeros(config.n_modes)
    else:
        q0 = np.asarray(initial_state[0], dtype=np.float64).copy()
        v0 = np.asarray(initial_state[1], dtype=np.float64).copy()
        if q0.shape != (config.n_modes,) or v0.shape != (config.n_modes,):
            raise ConfigError("initial_state arrays must have n_modes entries")

    traj, qf, vf = kernels.rk4_modal(
        omega2, config.damping, amp, omf, phase, q0, v0,
        float(t_start), dt, n_steps, substeps,
    )
    if not np.all(np.isfinite(traj)):
        raise DivergenceError("modal integration produced non-finite amplitudes")

    z, shapes = _mode_shapes(config)
    field = StrainField(
        values=traj @ shapes.T,
        z_grid=z,
        sample_rate=config.sample_rate,
        case_label=case_label,
        max_velocity_U=forcing.max_velocity_U,
    )
    if return_state:
        return field, (qf, vf)
    return field


def shear_forcing(config, velocity, seed, harmonics=HARMONIC_AMPLITUDES):
    """Sheared-current lock-in (power-in region) lift model.

    Under a linear profile U(z) = U z/L the local shedding frequency
    h * St * U(z) / D sweeps from 0 at the bottom pin to h * St * U / D at
    the top. Harmonic h of the shedding entrains mode n wherever the sweep
    crosses the natural frequency f_n: the mode is forced at f_n itself,
    with amplitude set by the local dynamic head U(z_n)^2 in that power-in
    region, the region's span footprint (synchronization holds over a
    frequency band proportional to f_n, which a linear sweep turns into a
    width proportional to z_n), and a sin(pi z_n) taper that fades
    power-in regions close to the pinned ends. The crossing condition
    fixes U(z_n) = f_n D / (St h), so a locked mode keeps its amplitude
    and frequency when the current speed changes; velocity moves the
    power-in regions along the span (through the width and taper) and
    decides how many modes lock at all (f_n <= h St U / D). Nearby
    velocities therefore share most of the response — the regime transfer
    studies assume.

    The phase draw depends only on the seed — not the velocity — so the
    same seed at two velocities describes one environment realization
    under a faster or slower current.
    """
    velocity = float(velocity)
    if velocity <= 0.0:
        raise ConfigError(f"velocity must be positive, got {velocity}")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x7368)))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(config.n_modes, len(harmonics)))
    f_nat = modal_frequencies(config) / (2.0 * math.pi)
    components = []
    for n in range(1, config.n_modes + 1):
        f_n = float(f_nat[n - 1])
        for h, rel_amp in enumerate(harmonics, start=1):
            z_n = f_n * DIAMETER / (STROUHAL * velocity * h)
            if z_n >= 1.0:
                continue  # the sweep never reaches f_n: mode n stays unlocked
            u_local = velocity * z_n
            amp = rel_amp * u_local ** 2 * z_n * math.sin(math.pi * z_n)
            components.append(
                (n, amp, 2.0 * math.pi * f_n, float(phases[n - 1, h - 1]))
            )
    if not components:
        raise ConfigError(
            f"velocity {velocity} m/s is too slow to lock any of the "
            f"{config.n_modes} modes (St*U*h/D never reaches f_1)"
        )
    return ForcingSpec(tuple(components), max_velocity_U=velocity)


def make_ndp_like_case(profile, seed, velocity=None, duration_s=20.0, config=None,
                       n_training=25, observer_fractions=DEFAULT_OBSERVER_FRACTIONS):
    """Build one synthetic shear-flow case: a normalized strain field plus the
    standard sensor layout (p training locations spanning the ends, m=3
    observers by default).

    profile picks the maximum current velocity (slow 0.50, medium 1.50,
    fast 2.20 m/s); pass `velocity` to override, e.g. for transfer studies.
    """
    if profile not in PROFILE_VELOCITY:
        raise ConfigError(
            f"unknown profile {profile!r}; choose from {sorted(PROFILE_VELOCITY)}"
        )
    config = config or RiserConfig()
    u = PROFILE_VELOCITY[profile] if velocity is None else float(velocity)
    label = f"shear-{profile}" if velocity is None else f"shear-{profile}-U{u:g}"
    forcing = shear_forcing(config, u, seed)
    field = simulate(config, forcing, duration_s, case_label=label)
    field = normalize(field)
    layout = SensorLayout(
        observer_locations=np.asarray(observer_fractions) * config.length,
        training_locations=np.linspace(0.0, config.length, n_training),
    )
    return field, layout


def default_window_spec(field, look_back=1, forecast_horizon=0,
                        train_seconds=(5.0, 15.0), test_seconds=(15.0, 20.0)):
    """Train/test windows for a synthetic case: skip the start-up transient,
    train on the middle stretch, test on the tail."""
    rate = field.sample_rate
    spec = WindowSpec(
        train_window=(int(round(train_seconds[0] * rate)), int(round(train_seconds[1] * rate))),
        test_window=(int(round(test_seconds[0] * rate)), int(round(test_seconds[1] * rate))),
        look_back=look_back,
        forecast_horizon=forecast_horizon,
    )
    if spec.test_window[1] > field.n_steps:
        raise DataError(
            f"field has {field.n_steps} steps; default windows need "
            f"{spec.test_window[1]}"
        )
    return spec
