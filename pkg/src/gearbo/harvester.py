"""Simulated knee energy harvester with a CVT.

Stands in for the participant-plus-device loop: a generator whose current,
power and reflected torque depend on the gear ratio, a raised-cosine gait,
the angle/velocity rule that connects the circuit only during the braking
phase, and a polynomial muscle-burden surrogate.  Every landscape has a
closed-form optimum, so the optimizers can be checked against ground truth.

Units follow the device datasheet: N*m/A, ohm, rad, rad/s, W, N*m.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterDomainError

HARVEST_ANGLE_DEG = 15.0
SLOPES = (0.0, 5.0, 10.0)
SPEEDS = (1.0, 1.5, 2.0)


@dataclass(frozen=True)
class DeviceConstants:
    kt: float = 70.6e-3
    r: float = 1.4
    g_min: float = 16.0
    g_max: float = 144.0
    mass: float = 0.78  # metadata only
    knee_range: tuple = (0.0, math.pi / 2)

    def __post_init__(self):
        if self.kt <= 0 or self.r <= 0:
            raise ParameterDomainError("kt and r must be positive")
        if not self.g_min < self.g_max:
            raise ParameterDomainError("g_min must be below g_max")

    def check_gear(self, g):
        g = np.asarray(g, dtype=float)
        tol = 1e-9 * self.g_max
        if np.any(g < self.g_min - tol) or np.any(g > self.g_max + tol):
            raise ParameterDomainError(
                f"gear ratio outside [{self.g_min}, {self.g_max}]: {g}")


@dataclass(frozen=True)
class ScoreConfig:
    gamma: float = 5.0
    window: float = 10.0
    dt: float = 1e-3

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterDomainError("gamma must be non-negative")
        if self.window <= 0 or self.dt <= 0:
            raise ParameterDomainError("window and dt must be positive")


@dataclass(frozen=True)
class BurdenPreset:
    """Burden coefficients as functions of slope (deg) and speed (m/s).

    ``e0 = e0_base + e0_slope*s``, ``e1 = e1_base*(1 + e1_slope*s)/v**p1`` and
    ``e2 = e2_base*(1 + e2_slope*s)/v**p2`` with ``p1, p2`` the speed exponents.
    """

    name: str = "p1"
    e0_base: float = 0.5
    e0_slope: float = 0.05
    e1_base: float = 0.1
    e1_slope: float = 0.1
    e2_base: float = 0.004
    e2_slope: float = 0.03
    e1_speed_exp: float = 1.0
    e2_speed_exp: float = 0.5
    noise_pct: float = 0.01

    def coefficients(self, slope, speed):
        e0 = self.e0_base + self.e0_slope * slope
        e1 = self.e1_base * (1.0 + self.e1_slope * slope) / speed**self.e1_speed_exp
        e2 = self.e2_base * (1.0 + self.e2_slope * slope) / speed**self.e2_speed_exp
        return e0, e1, e2


PRESETS = {
    "p1": BurdenPreset(),
    "p2": BurdenPreset(name="p2", e0_base=0.4, e0_slope=0.06, e1_base=0.12,
                       e1_slope=0.08, e2_base=0.0035, e2_slope=0.045),
}


@dataclass(frozen=True)
class TaskProfile:
    slope: float
    speed: float
    amplitude: float
    stride_freq: float
    e0: float
    e1: float
    e2: float
    noise_sd: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.speed <= 0:
            raise ParameterDomainError("gait speed must be positive")
        if not 0 < self.amplitude <= math.pi / 2:
            raise ParameterDomainError("swing amplitude outside knee range")
        if self.e2 <= 0 or self.stride_freq <= 0:
            raise ParameterDomainError("e2 and stride frequency must be positive")
        if self.noise_sd < 0:
            raise ParameterDomainError("noise_sd must be non-negative")

    @property
    def free_velocity(self):
        """Peak knee angular velocity of the unloaded gait (rad/s)."""
        return self.amplitude * math.pi * self.stride_freq


@dataclass(frozen=True)
class GaitSample:
    time: float
    angle: float
    velocity: float
    harvesting: bool


@dataclass(frozen=True)
class GaitTrajectory:
    time: np.ndarray
    angle: np.ndarray
    velocity: np.ndarray
    harvesting: np.ndarray = field(repr=False)

    def __len__(self):
        return self.time.size

    def __getitem__(self, i):
        return GaitSample(float(self.time[i]), float(self.angle[i]),
                          float(self.velocity[i]), bool(self.harvesting[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class TrialRecord:
    gear_ratio: float
    task: TaskProfile
    mean_power: float
    mean_torque: float
    emg: float
    score: float
    seed: int | None = None


def swing_amplitude(speed):
    return math.radians(75.0 if speed > 1.5 else 70.0)


def stride_frequency(speed):
    return 0.9 * speed


def default_grid(consts=DeviceConstants(), n=50):
    return np.linspace(consts.g_min, consts.g_max, n)


def make_profile(slope, speed, preset=PRESETS["p1"], consts=DeviceConstants(),
                 score_cfg=ScoreConfig(), grid=None, noise_pct=None):
    """Build the task profile for one (slope, speed) condition.

    The noise scale is ``noise_pct`` times the range of the noiseless score
    curve over ``grid`` (the default 50-point grid if omitted).
    """
    e0, e1, e2 = preset.coefficients(slope, speed)
    task = TaskProfile(
        slope=float(slope), speed=float(speed),
        amplitude=swing_amplitude(speed), stride_freq=stride_frequency(speed),
        e0=e0, e1=e1, e2=e2,
        label=f"{preset.name}:s{slope:g}:v{speed:g}")
    pct = preset.noise_pct if noise_pct is None else noise_pct
    if pct < 0:
        raise ParameterDomainError("noise_pct must be non-negative")
    if pct > 0:
        _, curve = ground_truth(task, default_grid(consts) if grid is None else grid,
                                consts, score_cfg)
        task = dataclasses.replace(task, noise_sd=pct * float(np.ptp(curve)))
    return task


# --- device physics -------------------------------------------------------


def electrical_state(g, duty, velocity, consts=DeviceConstants()):
    """Rectified back-EMF ``V`` and circuit current ``I``."""
    consts.check_gear(g)
    v = consts.kt * g * np.abs(velocity)
    return v, duty * v / consts.r


def instantaneous_power(g, duty, velocity, consts=DeviceConstants()):
    consts.check_gear(g)
    return consts.kt**2 * g**2 * duty**2 * np.square(velocity) / consts.r


def knee_torque(g, duty, velocity, consts=DeviceConstants()):
    """Magnitude of the anti-torque reflected to the knee."""
    consts.check_gear(g)
    return consts.kt**2 * g**2 * duty * np.abs(velocity) / consts.r


def harvest_window(angle, velocity):
    return (angle < math.radians(HARVEST_ANGLE_DEG)) & (velocity < 0)


# --- gait and burden ------------------------------------------------------


@functools.lru_cache(maxsize=256)
def gait_trajectory(task, duration, dt):
    if duration <= 0 or dt <= 0:
        raise ParameterDomainError("duration and dt must be positive")
    t = np.arange(int(round(duration / dt))) * dt
    phase = 2 * np.pi * task.stride_freq * t
    angle = task.amplitude * (1 - np.cos(phase)) / 2
    velocity = task.amplitude * np.pi * task.stride_freq * np.sin(phase)
    harvesting = harvest_window(angle, velocity)
    for a in (t, angle, velocity, harvesting):
        a.flags.writeable = False
    return GaitTrajectory(t, angle, velocity, harvesting)


def emg_surrogate(torque, task):
    if np.any(np.asarray(torque) < 0):
        raise ParameterDomainError("mean torque must be non-negative")
    return task.e0 + task.e1 * torque + task.e2 * torque**2


def trial_score(g, task, consts=DeviceConstants(), score_cfg=ScoreConfig(),
                rng=None, *, duty_enabled=True):
    """Simulate one trial at gear ratio ``g``.

    Power and torque are averaged over the harvesting samples of one
    measurement window; with ``duty_enabled=False`` the circuit never
    closes.  Noise is drawn from ``rng`` only when ``task.noise_sd > 0``;
    ``rng`` may be a Generator or an integer seed.
    """
    consts.check_gear(g)
    traj = gait_trajectory(task, score_cfg.window, score_cfg.dt)
    vel = traj.velocity[traj.harvesting] if duty_enabled else np.empty(0)
    if vel.size:
        w_bar = float(np.mean(instantaneous_power(g, 1.0, vel, consts)))
        tau_bar = float(np.mean(knee_torque(g, 1.0, vel, consts)))
    else:
        w_bar = tau_bar = 0.0
    emg = float(emg_surrogate(tau_bar, task))
    y = w_bar - score_cfg.gamma * emg
    seed = None
    if task.noise_sd > 0:
        if rng is None:
            raise ParameterDomainError("a noisy task requires an rng")
        if isinstance(rng, (int, np.integer)):
            seed = int(rng)
            rng = np.random.default_rng(seed)
        y += task.noise_sd * rng.standard_normal()
    return TrialRecord(float(g), task, w_bar, tau_bar, emg, float(y), seed)


# --- ground truth ---------------------------------------------------------


def analytic_window_moments(task):
    """Mean |velocity| and mean squared velocity over the harvest window.

    Integrates the raised-cosine gait in continuous time: the window is the
    last ``phi_c`` radians of each stride, ``cos(phi_c) = 1 - 2*theta_th/A``.
    """
    th = math.radians(HARVEST_ANGLE_DEG)
    if task.amplitude <= th:
        return 0.0, 0.0
    phi_c = math.acos(1 - 2 * th / task.amplitude)
    peak = task.free_velocity
    mean_abs = peak * (1 - math.cos(phi_c)) / phi_c
    mean_sq = peak**2 * (phi_c / 2 - math.sin(2 * phi_c) / 4) / phi_c
    return mean_abs, mean_sq


def closed_form_coefficients(task, consts=DeviceConstants()):
    """``(a, b)`` such that mean power is ``a*G**2`` and mean torque ``b*G**2``."""
    mean_abs, mean_sq = analytic_window_moments(task)
    k = consts.kt**2 / consts.r
    return k * mean_sq, k * mean_abs


def closed_form_score(g, task, consts=DeviceConstants(), score_cfg=ScoreConfig()):
    a, b = closed_form_coefficients(task, consts)
    g2 = np.asarray(g, dtype=float) ** 2
    gamma = score_cfg.gamma
    return a * g2 - gamma * (task.e0 + task.e1 * b * g2 + task.e2 * b**2 * g2**2)


def analytic_optimum(task, consts=DeviceConstants(), score_cfg=ScoreConfig()):
    """Interior maximizer of the closed-form score, or None if not in range."""
    a, b = closed_form_coefficients(task, consts)
    gamma = score_cfg.gamma
    if gamma == 0 or b == 0:
        return None
    g2 = (a - gamma * task.e1 * b) / (2 * gamma * task.e2 * b**2)
    if g2 <= 0:
        return None
    g = math.sqrt(g2)
    return g if consts.g_min <= g <= consts.g_max else None


def ground_truth(task, grid, consts=DeviceConstants(), score_cfg=ScoreConfig()):
    """Brute-force noiseless optimum over ``grid``: ``(x_star, curve)``."""
    quiet = dataclasses.replace(task, noise_sd=0.0)
    curve = np.array([trial_score(g, quiet, consts, score_cfg).score for g in grid])
    return float(grid[int(np.argmax(curve))]), curve


def task_grid(preset=PRESETS["p1"], consts=DeviceConstants(), score_cfg=ScoreConfig(),
              slopes=SLOPES, speeds=SPEEDS, noise_pct=None):
    """Profiles for every (slope, speed) pair, keyed by that pair."""
    return {(s, v): make_profile(s, v, preset, consts, score_cfg, noise_pct=noise_pct)
            for s in slopes for v in speeds}
