"""Benchmark suite: amortized per-step cost across rod sizes, batch sizes,
backends, and the compiled core versus the pure-Python fallback.

Produces plot-ready CSV rows; no plotting here.
"""

import csv
import json
import time

from . import HAVE_COMPILED_CORE
from . import state as st
from .engine import Engine
from .world import World

BENCH_HEADER = ["n", "batch", "backend", "core", "blocks", "epochs",
                "steps", "wall_ns", "per_step_ns", "barrier_wait_ns"]


def _bench_world(n):
    # Gravity-free rod near its rest state: every per-step kernel still
    # runs, but the dynamics stay stable at any discretization density.
    params = st.RodParams(radius=1e-3, stretch_modulus=1e7, bend_modulus=1e3,
                          shear_modulus=1e3, linear_density=0.05,
                          damping_translational=1e-4)
    w = World(dt=1e-4, gravity=(0.0, 0.0, 0.0))
    w.add_rod(st.init_rod(n, 0.4, axis=(1.0, 0.0, 0.0)), params)
    w.finalize()
    w.clamp_point(0, 0)
    return w


def bench_case(n, batch, backend, core="compiled", epochs=3, warmup=1,
               block_cap=512):
    """Time one configuration; returns a BENCH_HEADER row dict."""
    use_compiled = core == "compiled"
    if use_compiled and not HAVE_COMPILED_CORE:
        raise RuntimeError("compiled core unavailable")
    world = _bench_world(n)
    with Engine(world, backend=backend, block_cap=block_cap,
                use_compiled=use_compiled) as engine:
        for _ in range(warmup):
            engine.run_epoch(batch)
        wall = 0
        barrier = 0
        t0 = time.perf_counter_ns()
        for _ in range(epochs):
            m = engine.run_epoch(batch)
            barrier += m["barrier_wait_ns"]
        wall = time.perf_counter_ns() - t0
        blocks = engine.partition.block_count
    steps = epochs * batch
    return {
        "n": n, "batch": batch, "backend": backend, "core": core,
        "blocks": blocks, "epochs": epochs, "steps": steps, "wall_ns": wall,
        "per_step_ns": wall // steps, "barrier_wait_ns": barrier,
    }


def bench_suite(matrix):
    """Run the cross product described by a matrix dict.

    Keys: ``n`` (list), ``batch`` (list), ``backend`` (list), ``core``
    (list of 'compiled'/'python'), plus scalar ``epochs``, ``warmup``,
    ``block_cap``, and ``python_max_n`` (skip the slow fallback above this
    size).
    """
    rows = []
    epochs = matrix.get("epochs", 3)
    warmup = matrix.get("warmup", 1)
    block_cap = matrix.get("block_cap", 512)
    python_max_n = matrix.get("python_max_n", 512)
    for core in matrix.get("core", ["compiled"]):
        if core == "compiled" and not HAVE_COMPILED_CORE:
            continue
        for backend in matrix.get("backend", ["serial"]):
            for n in matrix["n"]:
                if core == "python" and n > python_max_n:
                    continue
                for batch in matrix.get("batch", [10]):
                    rows.append(bench_case(
                        n, batch, backend, core=core, epochs=epochs,
                        warmup=warmup, block_cap=block_cap))
    return rows


def load_matrix(path):
    with open(path) as fh:
        matrix = json.load(fh)
    if "n" not in matrix or not matrix["n"]:
        raise ValueError(f"{path}: matrix needs a non-empty 'n' list")
    return matrix


def export_rows(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    return path
