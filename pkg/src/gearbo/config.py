"""Flat ``key = value`` run configuration.

Keys are dotted (``device.kt``, ``score.gamma``, ``mtbo.kappa``); a few
common ones also have bare aliases.  Lines starting with ``#`` are comments
and lists are comma separated.  Burden presets are addressed as
``preset.<name>.<field>``; naming a new preset creates it from the defaults.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import bench, gp, harvester, mtbo
from .errors import ConfigurationError

ALIASES = {
    "kt": "device.kt",
    "r": "device.r",
    "g_min": "device.g_min",
    "g_max": "device.g_max",
    "gamma": "score.gamma",
    "slopes": "sim.slopes",
    "speeds": "sim.speeds",
    "noise_pct": "sim.noise_pct",
    "seed": "run.seed",
}


def _floats(v):
    return tuple(float(x) for x in _items(v))


def _strs(v):
    return tuple(_items(v))


def _items(v):
    if isinstance(v, (list, tuple)):
        return list(v)
    return [x.strip() for x in str(v).split(",") if x.strip()]


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _tasks(v):
    """``slope:speed`` pairs, e.g. ``0:1, 5:1``."""
    out = []
    for item in _items(v):
        s, _, sp = item.partition(":")
        if not sp:
            raise ValueError(f"task {item!r} is not slope:speed")
        out.append((float(s), float(sp)))
    return tuple(out)


KEYS = {
    "device.kt": float,
    "device.r": float,
    "device.g_min": float,
    "device.g_max": float,
    "score.gamma": float,
    "score.window": float,
    "score.dt": float,
    "sim.slopes": _floats,
    "sim.speeds": _floats,
    "sim.noise_pct": float,
    "mtbo.kappa": float,
    "mtbo.grid_points": int,
    "mtbo.threshold": float,
    "mtbo.repeats": int,
    "mtbo.cap": int,
    "fit.restarts": int,
    "fit.max_iter": int,
    "fit.tol": float,
    "prior.weight": float,
    "prior.noise_min": float,
    "prior.noise_max": float,
    "prior.diag_min": float,
    "prior.diag_max": float,
    "prior.lengthscale_min": float,
    "prior.lengthscale_max": float,
    "bench.replicates": int,
    "bench.participants": _strs,
    "bench.families": _strs,
    "bench.workers": int,
    "run.seed": int,
    "run.participant": str,
    "run.tasks": _tasks,
}

PRESET_FIELDS = {f.name: f.type for f in dataclasses.fields(harvester.BurdenPreset)
                 if f.name != "name"}


def canonical(key):
    key = key.strip()
    return ALIASES.get(key, key)


def parse_value(key, raw):
    key = canonical(key)
    if key in KEYS:
        conv = KEYS[key]
    elif key.startswith("preset."):
        parts = key.split(".")
        if len(parts) != 3 or parts[2] not in PRESET_FIELDS:
            raise ConfigurationError(f"unknown preset key {key!r}")
        conv = float
    else:
        raise ConfigurationError(f"unknown configuration key {key!r}")
    try:
        return key, conv(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value for {key}: {raw!r} ({exc})") from None


def parse_text(text):
    """Parse config text into a dict of canonical keys."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigurationError(f"line {n}: expected key = value")
        k, v = parse_value(key, raw.strip())
        out[k] = v
    return out


def parse_override(item):
    key, sep, raw = item.partition("=")
    if not sep:
        raise ConfigurationError(f"override {item!r} is not KEY=VALUE")
    return parse_value(key, raw.strip())


@dataclass(frozen=True)
class Settings:
    """Everything a run needs, built from the flat key table."""

    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(canonical(key), default)

    @property
    def consts(self):
        d = harvester.DeviceConstants()
        return harvester.DeviceConstants(
            kt=self.get("device.kt", d.kt), r=self.get("device.r", d.r),
            g_min=self.get("device.g_min", d.g_min), g_max=self.get("device.g_max", d.g_max))

    @property
    def score(self):
        d = harvester.ScoreConfig()
        return harvester.ScoreConfig(
            gamma=self.get("score.gamma", d.gamma), window=self.get("score.window", d.window),
            dt=self.get("score.dt", d.dt))

    @property
    def presets(self):
        presets = dict(harvester.PRESETS)
        edits = {}
        for key, v in self.values.items():
            if key.startswith("preset."):
                _, name, fname = key.split(".")
                edits.setdefault(name, {})[fname] = v
        for name, kw in edits.items():
            base = presets.get(name, harvester.BurdenPreset(name=name))
            presets[name] = dataclasses.replace(base, **kw)
        return presets

    @property
    def sim(self):
        return bench.SimSetup(
            consts=self.consts, score=self.score, presets=self.presets,
            noise_pct=self.get("sim.noise_pct"),
            slopes=self.get("sim.slopes", harvester.SLOPES),
            speeds=self.get("sim.speeds", harvester.SPEEDS))

    @property
    def grid(self):
        c = self.consts
        return np.linspace(c.g_min, c.g_max, self.get("mtbo.grid_points", 50))

    @property
    def prior(self):
        d = gp.HyperPrior()

        def rng(lo_key, hi_key, default):
            lo = self.get(lo_key)
            hi = self.get(hi_key)
            return (default[0] if lo is None else math.log(lo),
                    default[1] if hi is None else math.log(hi))

        return gp.HyperPrior(
            log_lengthscale=rng("prior.lengthscale_min", "prior.lengthscale_max",
                                d.log_lengthscale),
            log_diag=rng("prior.diag_min", "prior.diag_max", d.log_diag),
            log_noise=rng("prior.noise_min", "prior.noise_max", d.log_noise),
            offdiag=d.offdiag, offdiag_center=d.offdiag_center,
            weight=self.get("prior.weight", d.weight))

    @property
    def bo(self):
        da, dt, df = mtbo.AcquisitionConfig(), mtbo.TerminationConfig(), mtbo.FitConfig()
        c = self.consts
        return mtbo.BOConfig(
            acquisition=mtbo.AcquisitionConfig(
                kappa=self.get("mtbo.kappa", da.kappa), grid=self.grid,
                bounds=(c.g_min, c.g_max)),
            termination=mtbo.TerminationConfig(
                threshold=self.get("mtbo.threshold", dt.threshold),
                repeats=self.get("mtbo.repeats", dt.repeats),
                cap=self.get("mtbo.cap", dt.cap)),
            fit=mtbo.FitConfig(
                prior=self.prior, restarts=self.get("fit.restarts", df.restarts),
                max_iter=self.get("fit.max_iter", df.max_iter),
                tol=self.get("fit.tol", df.tol)))

    @property
    def seed(self):
        return self.get("run.seed", 0)

    def scenarios(self, base_seed=None):
        seed = self.seed if base_seed is None else base_seed
        return bench.make_scenarios(
            self.sim,
            participants=self.get("bench.participants", ("p1", "p2")),
            families=self.get("bench.families", (bench.MULTI_SLOPE, bench.MULTI_SPEED)),
            replicates=self.get("bench.replicates", 20),
            base_seed=seed)

    def run_tasks(self):
        """Task profiles for single-participant optimize runs."""
        name = self.get("run.participant", "p1")
        if name not in self.presets:
            raise ConfigurationError(f"unknown participant preset {name!r}")
        pairs = self.get("run.tasks", ((0.0, 1.0),))
        sim = self.sim
        return [harvester.make_profile(s, v, sim.presets[name], sim.consts, sim.score,
                                       grid=self.grid, noise_pct=sim.noise_pct)
                for s, v in pairs]


def load(path=None, overrides=()):
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_text(fh.read()))
    for item in overrides:
        k, v = parse_override(item)
        values[k] = v
    settings = Settings(values)
    try:
        settings.bo, settings.sim  # validate eagerly
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(str(exc)) from exc
    return settings
