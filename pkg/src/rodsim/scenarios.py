"""Scripted experiments: free-space pendulum, tube insertion, interacting
rod pairs, and replayed knot tying.

Each scenario is a scene configuration plus an optional command schedule.
Commands are applied at exact step boundaries by splitting epochs, so a
replayed session is deterministic on both backends.
"""

import json
import os

from .engine import Engine
from .metrics import MetricsTable
from .scene import parse_scene, resolve_path

ASSET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "assets")

SCENARIO_NAMES = ("free_space", "insertion", "pair_insertion_v0",
                  "pair_insertion_v1", "pair_insertion_v2", "knot_replay")

DEFAULT_STEPS = {
    "free_space": 5000,
    "insertion": 2000,
    "pair_insertion_v0": 2000,
    "pair_insertion_v1": 2000,
    "pair_insertion_v2": 2000,
    "knot_replay": 4000,
}

_ROD = dict(radius=1e-3, stretch_modulus=1e7, bend_modulus=1e6,
            shear_modulus=1e6, linear_density=0.05, penalty_stiffness=1.0,
            damping_translational=2e-4, damping_rotational=1e-8)


def default_config(name):
    """The bundled scene for a scenario, defaults filled."""
    if name == "free_space":
        data = {
            "rods": [dict(_ROD, num_points=128, length=0.4,
                          axis=[1.0, 0.0, 0.0], clamps=[0])],
            # strong positional correction keeps the swing inextensible
            "solver": {"position_bias": 0.8},
        }
    elif name == "insertion":
        data = {
            "mesh": "curved_tube.obj",
            "rods": [dict(_ROD, num_points=128, length=0.3,
                          origin=[0.0, 0.0, -0.3], axis=[0.0, 0.0, 1.0])],
            "drivers": [{"rod": 0, "insert_speed": 0.05,
                         "axis": [0.0, 0.0, 1.0]}],
            "collision_interval": 4,
            "collision_margin": 5e-4,
        }
    elif name.startswith("pair_insertion_"):
        mode = name.rsplit("_", 1)[1]
        data = {
            "mesh": "curved_tube.obj",
            # a coaxial instrument pair: zero-rest-length couplings keep
            # the rods together, so they start coincident
            "rods": [
                dict(_ROD, num_points=96, length=0.25,
                     origin=[0.0, 0.0, -0.25], axis=[0.0, 0.0, 1.0]),
                dict(_ROD, num_points=96, length=0.25,
                     origin=[0.0, 0.0, -0.25], axis=[0.0, 0.0, 1.0]),
            ],
            "drivers": [
                {"rod": 0, "insert_speed": 0.05, "axis": [0.0, 0.0, 1.0]},
                {"rod": 1, "insert_speed": 0.05, "axis": [0.0, 0.0, 1.0]},
            ],
            "couplings": [{"rod_a": 0, "rod_b": 1, "mode": mode,
                           "stride": 8}],
            "collision_interval": 4,
            "collision_margin": 5e-4,
        }
    elif name == "knot_replay":
        # thread-like rods: soft bending, strong damping, no gravity
        thread = dict(_ROD, bend_modulus=5e3, shear_modulus=5e3,
                      damping_translational=2e-3, damping_rotational=1e-7)
        data = {
            "gravity": [0.0, 0.0, 0.0],
            "rods": [
                dict(thread, num_points=48, length=0.24,
                     origin=[-0.12, 0.0, 0.0], axis=[1.0, 0.0, 0.0],
                     clamps=[0]),
                dict(thread, num_points=48, length=0.24,
                     origin=[-0.12, 0.0, 0.02], axis=[1.0, 0.0, 0.0],
                     clamps=[0]),
            ],
            "solver": {"iterations": 15, "position_bias": 0.5},
            "self_collision": {"group_size": 4, "sphere_radius": 0.02,
                               "neighbor_exclusion": 2,
                               "point_radius": 1e-3},
            "replay": "knot_session.ndjson",
        }
    else:
        raise ValueError(f"unknown scenario {name!r}")
    return parse_scene(data, base_dir=ASSET_DIR)


def write_bundled_scenes(directory):
    """Write each bundled scenario's config as a JSON scene file."""
    os.makedirs(directory, exist_ok=True)
    paths = {}
    for name in SCENARIO_NAMES:
        path = os.path.join(directory, f"{name}.json")
        with open(path, "w") as fh:
            json.dump(default_config(name).echo(), fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
        paths[name] = path
    return paths


def load_replay(path):
    """Parse a session log (newline-delimited command messages).

    Returns [(step, command_name, args)] sorted by step.
    """
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}")
            if msg.get("type") != "command":
                continue
            cmd = dict(msg["command"])
            name = cmd.pop("type")
            events.append((int(msg["step"]), name, cmd))
    events.sort(key=lambda e: e[0])
    return events


def command_schedule(name, config):
    """The scripted command list for a scenario."""
    if name != "knot_replay":
        return []
    if config.replay is None:
        raise ValueError("knot_replay needs a replay file in the scene")
    path = resolve_path(config, config.replay)
    if not os.path.exists(path):
        raise ValueError(f"replay file missing: {path}")
    return load_replay(path)


def replay_session(config, log_path, steps, backend="serial", batch=None,
                   use_compiled=None):
    """Re-run a recorded session offline; returns the final World.

    Commands are applied at their recorded step indices, so the result
    matches the live session that produced the log.
    """
    from .scene import build_world
    world = build_world(config)
    schedule = load_replay(log_path)
    batch = batch or config.batch
    next_event = 0
    with Engine(world, backend=backend, use_compiled=use_compiled) as engine:
        while world.step_index < steps:
            while (next_event < len(schedule)
                   and schedule[next_event][0] <= world.step_index):
                _, cmd_name, args = schedule[next_event]
                if cmd_name == "set_params":
                    engine.set_params(dt=args.get("dt"),
                                      iterations=args.get("iterations"))
                    if "batch" in args:
                        batch = int(args["batch"])
                else:
                    engine.post_command(cmd_name, **args)
                next_event += 1
            stop = min(world.step_index + batch, steps)
            if next_event < len(schedule):
                stop = min(stop, schedule[next_event][0])
            engine.run_epoch(stop - world.step_index)
    return world


def run_scenario(name, config, backend=None, blocks=None, steps=None,
                 batch=None, iters=None, use_compiled=None,
                 world=None):
    """Run one scenario and return (metrics table, engine).

    CLI-style overrides (backend/blocks/steps/batch/iters) win over the
    scene file.  Epochs are split at scheduled command steps so commands
    apply at their exact recorded step on every backend.
    """
    if name not in SCENARIO_NAMES:
        raise ValueError(f"unknown scenario {name!r}; expected one of "
                         f"{', '.join(SCENARIO_NAMES)}")
    backend = backend or config.backend
    batch = batch or config.batch
    steps = steps or DEFAULT_STEPS[name]
    if iters:
        config.solver.iterations = iters
    schedule = command_schedule(name, config)

    from .scene import build_world
    if world is None:
        world = build_world(config)
    engine_kw = {}
    if blocks:
        cap = -(-max(i.num_points for i in world.rod_infos) // blocks)
        engine_kw = {"block_cap": max(cap, 2), "max_blocks": blocks}
    table = MetricsTable()
    next_event = 0
    epoch = 0
    with Engine(world, backend=backend, use_compiled=use_compiled,
                **engine_kw) as engine:
        while world.step_index < steps:
            while (next_event < len(schedule)
                   and schedule[next_event][0] <= world.step_index):
                _, cmd_name, args = schedule[next_event]
                if cmd_name == "set_params":
                    engine.set_params(dt=args.get("dt"),
                                      iterations=args.get("iterations"))
                    if "batch" in args:
                        batch = int(args["batch"])
                else:
                    engine.post_command(cmd_name, **args)
                next_event += 1
            stop = min(world.step_index + batch, steps)
            if next_event < len(schedule):
                stop = min(stop, schedule[next_event][0])
            m = engine.run_epoch(stop - world.step_index)
            e = world.energies()
            table.append(epoch=epoch, time_s=world.step_index * world.dt,
                         wall_ns=m["wall_ns"], steps=m["steps"],
                         barrier_wait_ns=m["barrier_wait_ns"],
                         contacts=m["contacts"],
                         max_strain=world.max_strain(),
                         energy_stretch=e["stretch"],
                         energy_bend=e["bend"],
                         energy_penalty=e["penalty"])
            epoch += 1
    return table, engine
