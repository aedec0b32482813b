"""Declarative experiment configuration.

One YAML file drives every command: flow construction, episode geometry,
learning hyperparameters, evaluation ensembles and output layout.
Validation reports the offending field by its dotted path. The
propulsion speed may be given directly (geometry.v_s) or as the fraction
geometry.v_s_tilde of the flow's maximum speed.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import flowfield, flowio
from .navigator import EpisodeGeometry
from .rl import ActionSet, RewardConfig, TileCoder, TrainConfig

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """Invalid configuration; the message names the field."""


def _req(section, data, key, kind, path):
    if key not in data or data[key] is None:
        raise ConfigError(f"{path}.{key} is required")
    return _conv(data[key], kind, f"{path}.{key}")


def _opt(data, key, kind, path, default=None):
    if key not in data or data[key] is None:
        return default
    return _conv(data[key], kind, f"{path}.{key}")


def _conv(val, kind, path):
    try:
        if kind is float:
            out = float(val)
            if isinstance(val, str):
                raise TypeError
            return out
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise TypeError
            return int(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise TypeError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise TypeError
            return val
        if kind == "vec2":
            x, y = val
            return (float(x), float(y))
        if kind == "range2":
            lo, hi = float(val[0]), float(val[1])
            return (lo, hi)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{path} has invalid value {val!r}")


@dataclass
class FlowSection:
    kind: str = "snapshot"
    k_min: int = 1
    k_max: int = 5
    slope: float = -5.0 / 3.0
    energy_scale: float = 1.0
    seed: int = 0
    decorrelation_time: float | None = None
    horizon: float | None = None
    path_dt: float | None = None
    phase_sigma: float = 2.0
    name: str | None = None
    params: dict = field(default_factory=dict)
    path: str | None = None

    @classmethod
    def from_dict(cls, data, base_dir):
        path = "flow"
        kind = _opt(data, "kind", str, path, "snapshot")
        if kind not in ("snapshot", "unsteady", "analytic", "import"):
            raise ConfigError(
                f"flow.kind must be snapshot, unsteady, analytic or import, "
                f"got {kind!r}")
        sec = cls(
            kind=kind,
            k_min=_opt(data, "k_min", int, path, 1),
            k_max=_opt(data, "k_max", int, path, 5),
            slope=_opt(data, "slope", float, path, -5.0 / 3.0),
            energy_scale=_opt(data, "energy_scale", float, path, 1.0),
            seed=_opt(data, "seed", int, path, 0),
            decorrelation_time=_opt(data, "decorrelation_time", float, path),
            horizon=_opt(data, "horizon", float, path),
            path_dt=_opt(data, "path_dt", float, path),
            phase_sigma=_opt(data, "phase_sigma", float, path, 2.0),
            name=_opt(data, "name", str, path),
            params=dict(data.get("params") or {}),
            path=_opt(data, "path", str, path),
        )
        if kind in ("snapshot", "unsteady"):
            try:
                flowfield.SpectrumSpec(k_min=sec.k_min, k_max=sec.k_max,
                                       slope=sec.slope,
                                       energy_scale=sec.energy_scale,
                                       seed=sec.seed)
            except ValueError as exc:
                raise ConfigError(f"flow: {exc}") from exc
        if kind == "unsteady":
            if sec.decorrelation_time is None or sec.decorrelation_time <= 0:
                raise ConfigError(
                    "flow.decorrelation_time must be positive for unsteady flows")
        if kind == "analytic" and not sec.name:
            raise ConfigError("flow.name is required for analytic flows")
        if kind == "import":
            if not sec.path:
                raise ConfigError("flow.path is required for imported flows")
            resolved = (base_dir / sec.path).resolve()
            if not resolved.exists():
                raise ConfigError(f"flow.path {sec.path!r} does not exist")
            sec.path = str(resolved)
        return sec

    def build(self):
        """Construct the FlowField this section describes."""
        if self.kind == "import":
            return flowio.import_flow(self.path)
        if self.kind == "analytic":
            try:
                return flowfield.AnalyticFlow(self.name, params=self.params)
            except ValueError as exc:
                raise ConfigError(f"flow: {exc}") from exc
        spec = flowfield.SpectrumSpec(k_min=self.k_min, k_max=self.k_max,
                                      slope=self.slope,
                                      energy_scale=self.energy_scale,
                                      seed=self.seed)
        if self.kind == "snapshot":
            return flowfield.generate_snapshot(spec)
        return flowfield.generate_unsteady(
            spec, self.decorrelation_time, horizon=self.horizon,
            path_dt=self.path_dt, phase_sigma=self.phase_sigma)


@dataclass
class GeometrySection:
    x_a: tuple
    x_b: tuple
    d_a: float
    d_b: float
    v_s_tilde: float | None
    v_s: float | None
    t_max_factor: float

    @classmethod
    def from_dict(cls, data):
        path = "geometry"
        sec = cls(
            x_a=_req("geometry", data, "x_a", "vec2", path),
            x_b=_req("geometry", data, "x_b", "vec2", path),
            d_a=_opt(data, "d_a", float, path, 0.0),
            d_b=_req("geometry", data, "d_b", float, path),
            v_s_tilde=_opt(data, "v_s_tilde", float, path),
            v_s=_opt(data, "v_s", float, path),
            t_max_factor=_opt(data, "t_max_factor", float, path, 20.0),
        )
        if (sec.v_s_tilde is None) == (sec.v_s is None):
            raise ConfigError(
                "geometry needs exactly one of v_s_tilde or v_s")
        if sec.v_s_tilde is not None and not 0.0 < sec.v_s_tilde <= 1.0:
            raise ConfigError(
                f"geometry.v_s_tilde must lie in (0, 1], got {sec.v_s_tilde}")
        if sec.v_s is not None and sec.v_s <= 0:
            raise ConfigError(f"geometry.v_s must be positive, got {sec.v_s}")
        if sec.d_a < 0:
            raise ConfigError(f"geometry.d_a must be >= 0, got {sec.d_a}")
        if sec.d_b <= 0:
            raise ConfigError(f"geometry.d_b must be > 0, got {sec.d_b}")
        if sec.t_max_factor <= 0:
            raise ConfigError(
                f"geometry.t_max_factor must be > 0, got {sec.t_max_factor}")
        return sec

    def build(self, flow):
        """Resolve the dimensional propulsion speed and the cutoff."""
        if self.v_s is not None:
            v_s = self.v_s
        else:
            umax = flow.u_max()
            if umax <= 0:
                raise ConfigError(
                    "geometry.v_s_tilde requires a flow with positive "
                    "maximum speed; set geometry.v_s instead")
            v_s = self.v_s_tilde * umax
        dist = math.hypot(self.x_b[0] - self.x_a[0], self.x_b[1] - self.x_a[1])
        if dist <= self.d_a + self.d_b:
            raise ConfigError(
                "geometry start and target discs overlap: "
                f"|x_b - x_a| = {dist:.6g} <= d_a + d_b")
        t_max = self.t_max_factor * dist / v_s
        return EpisodeGeometry(x_a=self.x_a, x_b=self.x_b, d_a=self.d_a,
                               d_b=self.d_b, t_max=t_max, v_s=v_s)


@dataclass
class RLSection:
    n_tiles_x: int
    n_tiles_y: int
    tile_size: float | None
    origin: tuple
    include_off: bool
    lam: float
    dt_decision: float
    dt_integration: float | None
    alpha_actor: float
    alpha_critic: float
    lr_decay: bool
    n_episodes: int
    seed: int

    @classmethod
    def from_dict(cls, data):
        path = "rl"
        sec = cls(
            n_tiles_x=_opt(data, "n_tiles_x", int, path, 30),
            n_tiles_y=_opt(data, "n_tiles_y", int, path, 30),
            tile_size=_opt(data, "tile_size", float, path),
            origin=_opt(data, "origin", "vec2", path, (0.0, 0.0)),
            include_off=_opt(data, "include_off", bool, path, True),
            lam=_opt(data, "lambda", float, path, 0.0),
            dt_decision=_opt(data, "dt_decision", float, path, 0.25),
            dt_integration=_opt(data, "dt_integration", float, path),
            alpha_actor=_opt(data, "alpha_actor", float, path, 0.1),
            alpha_critic=_opt(data, "alpha_critic", float, path, 0.1),
            lr_decay=_opt(data, "lr_decay", bool, path, False),
            n_episodes=_opt(data, "n_episodes", int, path, 10000),
            seed=_opt(data, "seed", int, path, 0),
        )
        if sec.n_tiles_x < 1 or sec.n_tiles_y < 1:
            raise ConfigError("rl.n_tiles_x and rl.n_tiles_y must be >= 1")
        if sec.tile_size is not None and sec.tile_size <= 0:
            raise ConfigError(f"rl.tile_size must be > 0, got {sec.tile_size}")
        if sec.lam < 0:
            raise ConfigError(f"rl.lambda must be >= 0, got {sec.lam}")
        if sec.dt_decision <= 0:
            raise ConfigError(
                f"rl.dt_decision must be > 0, got {sec.dt_decision}")
        if sec.dt_integration is not None and sec.dt_integration <= 0:
            raise ConfigError(
                f"rl.dt_integration must be > 0, got {sec.dt_integration}")
        if sec.alpha_actor <= 0 or sec.alpha_critic <= 0:
            raise ConfigError("rl.alpha_actor and rl.alpha_critic must be > 0")
        if sec.n_episodes < 1:
            raise ConfigError(f"rl.n_episodes must be >= 1, got {sec.n_episodes}")
        return sec

    def coder(self, flow):
        tile = self.tile_size if self.tile_size is not None else flow.L / 10.0
        return TileCoder(origin=self.origin, tile_size=tile,
                         n_x=self.n_tiles_x, n_y=self.n_tiles_y)

    def actions(self):
        return ActionSet.compass(include_off=self.include_off)

    def reward_config(self, geometry):
        return RewardConfig(lam=self.lam, v_s_nominal=geometry.v_s,
                            dt_decision=self.dt_decision)

    def train_config(self):
        return TrainConfig(n_episodes=self.n_episodes, seed=self.seed,
                           alpha_actor=self.alpha_actor,
                           alpha_critic=self.alpha_critic,
                           lr_decay=self.lr_decay)


@dataclass
class EvaluationSection:
    n_traj: int
    mode: str
    seed: int

    @classmethod
    def from_dict(cls, data):
        path = "evaluation"
        sec = cls(
            n_traj=_opt(data, "n_traj", int, path, 2000),
            mode=_opt(data, "mode", str, path, "stochastic"),
            seed=_opt(data, "seed", int, path, 1000),
        )
        if sec.n_traj < 0:
            raise ConfigError(f"evaluation.n_traj must be >= 0, got {sec.n_traj}")
        if sec.mode not in ("stochastic", "greedy"):
            raise ConfigError(
                f"evaluation.mode must be stochastic or greedy, got {sec.mode!r}")
        return sec


@dataclass
class ShootingSection:
    n_starts: int
    n_angles: int
    dt: float | None
    seed: int

    @classmethod
    def from_dict(cls, data):
        path = "shooting"
        sec = cls(
            n_starts=_opt(data, "n_starts", int, path, 200),
            n_angles=_opt(data, "n_angles", int, path, 100),
            dt=_opt(data, "dt", float, path),
            seed=_opt(data, "seed", int, path, 0),
        )
        if sec.n_starts < 1 or sec.n_angles < 1:
            raise ConfigError("shooting.n_starts and shooting.n_angles must be >= 1")
        if sec.dt is not None and sec.dt <= 0:
            raise ConfigError(f"shooting.dt must be > 0, got {sec.dt}")
        return sec


@dataclass
class OutputSection:
    dir: str
    write_trajectories: bool
    occupancy_pixel: float | None
    bins: int
    bin_range: tuple
    ow_resolution: int

    @classmethod
    def from_dict(cls, data, base_dir):
        path = "output"
        sec = cls(
            dir=_req("output", data, "dir", str, path),
            write_trajectories=_opt(data, "write_trajectories", bool, path,
                                    False),
            occupancy_pixel=_opt(data, "occupancy_pixel", float, path),
            bins=_opt(data, "bins", int, path, 50),
            bin_range=_opt(data, "bin_range", "range2", path, (0.0, 5.0)),
            ow_resolution=_opt(data, "ow_resolution", int, path, 256),
        )
        if sec.occupancy_pixel is not None and sec.occupancy_pixel <= 0:
            raise ConfigError(
                f"output.occupancy_pixel must be > 0, got {sec.occupancy_pixel}")
        if sec.bins < 1:
            raise ConfigError(f"output.bins must be >= 1, got {sec.bins}")
        if not sec.bin_range[1] > sec.bin_range[0]:
            raise ConfigError(f"output.bin_range must increase, got {sec.bin_range}")
        if sec.ow_resolution < 8:
            raise ConfigError(
                f"output.ow_resolution must be >= 8, got {sec.ow_resolution}")
        sec.dir = str((base_dir / sec.dir))
        return sec


@dataclass
class ExperimentConfig:
    flow: FlowSection
    geometry: GeometrySection
    rl: RLSection
    evaluation: EvaluationSection
    shooting: ShootingSection
    output: OutputSection
    sha256: str

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a mapping")
        known = {"flow", "geometry", "rl", "evaluation", "shooting", "output"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration sections: {sorted(unknown)}")
        base = Path(base_dir)
        digest = hashlib.sha256(
            json.dumps(data, sort_keys=True, default=str).encode()).hexdigest()
        return cls(
            flow=FlowSection.from_dict(data.get("flow") or {}, base),
            geometry=GeometrySection.from_dict(data.get("geometry") or {}),
            rl=RLSection.from_dict(data.get("rl") or {}),
            evaluation=EvaluationSection.from_dict(data.get("evaluation") or {}),
            shooting=ShootingSection.from_dict(data.get("shooting") or {}),
            output=OutputSection.from_dict(data.get("output") or {}, base),
            sha256=digest,
        )


def load_config(path):
    """Parse and validate a YAML experiment file."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path!r} is not valid YAML: {exc}")
    return ExperimentConfig.from_dict(data, base_dir=p.parent)
