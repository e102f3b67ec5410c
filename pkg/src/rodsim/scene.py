"""Scene configuration: JSON loading, validation with field paths, world
construction.

A scene file is a JSON object; unknown keys are rejected and every error
names the offending field (e.g. ``rods[1].radius``).  ``echo`` emits the
fully-defaulted configuration, and ``load -> echo -> load`` is an identity.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import bvh, meshes
from . import state as st
from .constraints import SolverConfig
from .selfcollide import SelfCollisionConfig
from .world import BIND_BIDIRECTIONAL, BIND_ONE_WAY, World

COUPLING_MODES = {"v0": None, "v1": BIND_ONE_WAY, "v2": BIND_BIDIRECTIONAL}


class SceneError(ValueError):
    """Configuration problem; the message names the field path."""


@dataclass
class RodConfig:
    num_points: int = 64
    length: float = 0.4
    radius: float = 1e-3
    stretch_modulus: float = 1e7
    bend_modulus: float = 1e6
    shear_modulus: float = 1e6
    linear_density: float = 0.05
    penalty_stiffness: float = 1.0
    damping_translational: float = 0.0
    damping_rotational: float = 0.0
    extensible: bool = False
    cross_section_exponent: str = "r4"
    origin: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    axis: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    intrinsic_strains: list = None
    clamps: list = field(default_factory=list)
    contact_radius: float = None
    collide_mesh: bool = True


@dataclass
class SolverSettings:
    iterations: int = 10
    position_bias: float = 0.2
    restitution: float = 0.0
    mu: float = 0.3


@dataclass
class SelfCollisionSettings:
    group_size: int = 4
    sphere_radius: float = 0.01
    neighbor_exclusion: int = 2
    point_radius: float = 2e-3


@dataclass
class CouplingConfig:
    rod_a: int = 0
    rod_b: int = 1
    mode: str = "v0"
    stride: int = 1


@dataclass
class DriverConfig:
    rod: int = 0
    point: int = 0
    frame: int = 0
    insert_speed: float = 0.0
    rotate_speed: float = 0.0
    axis: list = field(default_factory=lambda: [0.0, 0.0, 1.0])


@dataclass
class SceneConfig:
    dt: float = 1e-4
    gravity: list = field(default_factory=lambda: [0.0, -9.81, 0.0])
    solver: SolverSettings = field(default_factory=SolverSettings)
    rods: list = field(default_factory=lambda: [RodConfig()])
    mesh: str = None
    self_collision: SelfCollisionSettings = None
    couplings: list = field(default_factory=list)
    drivers: list = field(default_factory=list)
    replay: str = None
    backend: str = "serial"
    blocks: int = None
    batch: int = 100
    collision_interval: int = 1
    collision_margin: float = 0.0
    stream_stride: int = 1
    base_dir: str = "."  # directory for resolving mesh/replay paths

    def echo(self):
        """The fully-defaulted configuration as a JSON-ready dict."""
        d = asdict(self)
        d.pop("base_dir")
        return d


def _require(cond, path, message):
    if not cond:
        raise SceneError(f"{path}: {message}")


def _build(cls, data, path):
    _require(isinstance(data, dict), path, "expected an object")
    fields = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - fields
    _require(not unknown, path, f"unknown keys {sorted(unknown)}")
    return cls(**data)


def _positive(value, path, kind=(int, float)):
    _require(isinstance(value, kind) and not isinstance(value, bool),
             path, "expected a number")
    _require(math.isfinite(value) and value > 0, path, "must be positive")


def _vec3(value, path):
    _require(isinstance(value, list) and len(value) == 3, path,
             "expected a list of 3 numbers")
    for k, x in enumerate(value):
        _require(isinstance(x, (int, float)) and math.isfinite(x),
                 f"{path}[{k}]", "expected a finite number")


def parse_scene(data, base_dir="."):
    """Validate a raw dict into a SceneConfig; errors name field paths."""
    _require(isinstance(data, dict), "$", "expected a JSON object")
    top = dict(data)
    rods_raw = top.pop("rods", [asdict(RodConfig())])
    solver_raw = top.pop("solver", {})
    sc_raw = top.pop("self_collision", None)
    couplings_raw = top.pop("couplings", [])
    drivers_raw = top.pop("drivers", [])
    cfg = _build(SceneConfig, {**top, "rods": [], "couplings": [],
                               "drivers": []}, "$")
    cfg.base_dir = base_dir

    _positive(cfg.dt, "dt")
    _vec3(cfg.gravity, "gravity")
    _require(cfg.backend in ("serial", "parallel"), "backend",
             "must be 'serial' or 'parallel'")
    _require(isinstance(cfg.batch, int) and cfg.batch >= 1, "batch",
             "must be a positive integer")
    _require(isinstance(cfg.collision_interval, int)
             and cfg.collision_interval >= 1, "collision_interval",
             "must be a positive integer")
    _require(cfg.collision_margin >= 0.0, "collision_margin",
             "must be non-negative")
    _require(isinstance(cfg.stream_stride, int) and cfg.stream_stride >= 1,
             "stream_stride", "must be a positive integer")
    if cfg.blocks is not None:
        _require(isinstance(cfg.blocks, int) and cfg.blocks >= 1, "blocks",
                 "must be a positive integer")

    cfg.solver = _build(SolverSettings, solver_raw, "solver")
    _require(cfg.solver.iterations >= 1, "solver.iterations", "must be >= 1")
    _require(0.0 <= cfg.solver.position_bias <= 1.0, "solver.position_bias",
             "must be in [0, 1]")
    _require(cfg.solver.mu >= 0.0, "solver.mu", "must be non-negative")
    _require(0.0 <= cfg.solver.restitution <= 1.0, "solver.restitution",
             "must be in [0, 1]")

    _require(isinstance(rods_raw, list) and rods_raw, "rods",
             "expected a non-empty list")
    for r, raw in enumerate(rods_raw):
        rod = _build(RodConfig, raw, f"rods[{r}]")
        _require(isinstance(rod.num_points, int) and rod.num_points >= 3,
                 f"rods[{r}].num_points", "must be an integer >= 3")
        for name in ("length", "radius", "stretch_modulus", "bend_modulus",
                     "shear_modulus", "linear_density", "penalty_stiffness"):
            _positive(getattr(rod, name), f"rods[{r}].{name}")
        for name in ("damping_translational", "damping_rotational"):
            _require(getattr(rod, name) >= 0.0, f"rods[{r}].{name}",
                     "must be non-negative")
        _require(rod.cross_section_exponent in ("r2", "r4"),
                 f"rods[{r}].cross_section_exponent", "must be 'r2' or 'r4'")
        _vec3(rod.origin, f"rods[{r}].origin")
        _vec3(rod.axis, f"rods[{r}].axis")
        if rod.contact_radius is not None:
            _positive(rod.contact_radius, f"rods[{r}].contact_radius")
        if rod.intrinsic_strains is not None:
            _vec3(rod.intrinsic_strains, f"rods[{r}].intrinsic_strains")
        for k, c in enumerate(rod.clamps):
            _require(isinstance(c, int) and 0 <= c < rod.num_points,
                     f"rods[{r}].clamps[{k}]", "point index out of range")
        cfg.rods.append(rod)

    if sc_raw is not None:
        cfg.self_collision = _build(SelfCollisionSettings, sc_raw,
                                    "self_collision")
        for name in ("sphere_radius", "point_radius"):
            _positive(getattr(cfg.self_collision, name),
                      f"self_collision.{name}")
        _require(cfg.self_collision.group_size >= 1,
                 "self_collision.group_size", "must be >= 1")

    for k, raw in enumerate(couplings_raw):
        c = _build(CouplingConfig, raw, f"couplings[{k}]")
        _require(c.mode in COUPLING_MODES, f"couplings[{k}].mode",
                 "must be one of 'v0', 'v1', 'v2'")
        for side in ("rod_a", "rod_b"):
            _require(0 <= getattr(c, side) < len(cfg.rods),
                     f"couplings[{k}].{side}", "rod index out of range")
        _require(isinstance(c.stride, int) and c.stride >= 1,
                 f"couplings[{k}].stride", "must be a positive integer")
        cfg.couplings.append(c)

    for k, raw in enumerate(drivers_raw):
        d = _build(DriverConfig, raw, f"drivers[{k}]")
        _require(0 <= d.rod < len(cfg.rods), f"drivers[{k}].rod",
                 "rod index out of range")
        _vec3(d.axis, f"drivers[{k}].axis")
        cfg.drivers.append(d)

    return cfg


def load_scene(path):
    """Read, validate and default-fill a scene file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise SceneError(f"scene file not found: {path}")
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON: {exc}")
    try:
        return parse_scene(data, base_dir=os.path.dirname(os.path.abspath(
            str(path))))
    except TypeError as exc:
        raise SceneError(f"{path}: {exc}")


def save_scene(path, config):
    with open(path, "w") as fh:
        json.dump(config.echo(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def resolve_path(config, path):
    if path is None:
        return None
    if os.path.isabs(path):
        return path
    return os.path.join(config.base_dir, path)


def build_world(config):
    """Instantiate a finalized World (plus mesh and drivers) from a scene."""
    sc = None
    if config.self_collision is not None:
        s = config.self_collision
        sc = SelfCollisionConfig(group_size=s.group_size,
                                 sphere_radius=s.sphere_radius,
                                 neighbor_exclusion=s.neighbor_exclusion,
                                 point_radius=s.point_radius)
    solver = SolverConfig(iterations=config.solver.iterations,
                          position_bias=config.solver.position_bias,
                          restitution=config.solver.restitution,
                          mu=config.solver.mu)
    world = World(dt=config.dt, gravity=config.gravity, solver=solver,
                  self_collision=sc)
    for rod in config.rods:
        params = st.RodParams(
            radius=rod.radius, stretch_modulus=rod.stretch_modulus,
            bend_modulus=rod.bend_modulus, shear_modulus=rod.shear_modulus,
            linear_density=rod.linear_density,
            penalty_stiffness=rod.penalty_stiffness,
            damping_translational=rod.damping_translational,
            damping_rotational=rod.damping_rotational,
            extensible=rod.extensible,
            cross_section_exponent=rod.cross_section_exponent)
        strains = None
        if rod.intrinsic_strains is not None:
            strains = np.tile(rod.intrinsic_strains, (rod.num_points - 1, 1))
        state = st.init_rod(rod.num_points, rod.length, axis=rod.axis,
                            origin=rod.origin, intrinsic_strains=strains)
        world.add_rod(state, params, contact_radius=rod.contact_radius,
                      collide_mesh=rod.collide_mesh)
    world.finalize()
    world.collision_interval = config.collision_interval
    world.collision_margin = config.collision_margin

    if config.mesh is not None:
        mesh_path = resolve_path(config, config.mesh)
        if not os.path.exists(mesh_path):
            raise SceneError(f"mesh: file not found: {mesh_path}")
        vertices, triangles = meshes.load_mesh(mesh_path)
        world.set_mesh(bvh.build_aabb_tree(vertices, triangles))

    for k, c in enumerate(config.couplings):
        mode = COUPLING_MODES[c.mode]
        if mode is not None:
            world.add_bindings(c.rod_a, c.rod_b, mode, stride=c.stride)

    for r, rod in enumerate(config.rods):
        for c in rod.clamps:
            world.clamp_point(r, c)
    for d in config.drivers:
        world.set_driver(d.rod, point=d.point, frame=d.frame)
        axis = np.asarray(d.axis, dtype=float)
        axis /= np.linalg.norm(axis)
        world.driver_velocity[d.rod] = d.insert_speed * axis
        world.driver_rotation[d.rod] = d.rotate_speed
    return world
