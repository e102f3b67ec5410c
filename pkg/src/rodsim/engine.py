"""Block-partitioned execution engine.

Elements are split into contiguous blocks, each owned by one persistent
worker; an epoch executes a batch of time-steps with barriers between the
phases that exchange boundary data.  The serial backend runs the identical
phase sequence single-threaded and is the semantic reference: with the
red-black constraint colouring, serial and parallel execution perform the
same floating-point operations and agree bitwise.

Steering commands arrive through a mailbox and are applied at time-step
boundaries; consistent position snapshots are published every step through
a sequence-counted buffer that readers may sample while an epoch runs.
"""

import queue
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import HAVE_COMPILED_CORE, pystep
from .partition import block_ranges, partition_world

if HAVE_COMPILED_CORE:
    from . import _core
else:
    _core = None

# staged op codes, applied in order at the next step boundary
OP_DRIVER_VELOCITY = 0
OP_DRIVER_ROTATION = 1
OP_GRAB = 2
OP_RELEASE = 3


@dataclass
class Command:
    name: str
    args: dict
    id: int = -1


class Ticket:
    """Resolved with the step index at which the command took effect."""

    def __init__(self, command):
        self.command = command
        self._event = threading.Event()
        self.apply_step = None

    def resolve(self, step):
        self.apply_step = step
        self._event.set()

    def wait(self, timeout=None):
        if not self._event.wait(timeout):
            raise TimeoutError("command not applied in time")
        return self.apply_step


class Mailbox:
    """Multi-producer queue of steering commands, drained at step
    boundaries."""

    def __init__(self):
        self._queue = queue.Queue()
        self._next_id = 0
        self._lock = threading.Lock()

    def post(self, name, **args):
        cmd = Command(name, args)
        with self._lock:
            cmd.id = self._next_id
            self._next_id += 1
        ticket = Ticket(cmd)
        self._queue.put((cmd, ticket))
        return ticket

    def drain(self):
        items = []
        while True:
            try:
                items.append(self._queue.get_nowait())
            except queue.Empty:
                return items


@dataclass
class Snapshot:
    sequence: int
    step_index: int
    positions: np.ndarray
    frames: np.ndarray = None


class SnapshotBuffer:
    """Single-writer seqlock: odd sequence while a publish is in flight."""

    def __init__(self, world):
        self.positions = np.zeros_like(world.positions)
        self.frames = np.zeros_like(world.frames)
        self.seq = np.zeros(1, dtype=np.int64)
        self.step = np.zeros(1, dtype=np.int64)

    def publish(self, world):
        self.seq[0] += 1
        self.positions[:] = world.positions
        self.frames[:] = world.frames
        self.step[0] = world.step_index
        self.seq[0] += 1

    def read(self, max_retries=100000):
        for _ in range(max_retries):
            s1 = int(self.seq[0])
            if s1 % 2:
                continue
            positions = self.positions.copy()
            frames = self.frames.copy()
            step = int(self.step[0])
            if int(self.seq[0]) == s1:
                return Snapshot(s1, step, positions, frames)
        raise RuntimeError("snapshot read kept tearing")


class HaloTracker:
    """Per-block barrier generation counters for stale-read detection."""

    def __init__(self, num_blocks):
        self.generation = np.zeros(num_blocks, dtype=np.int64)

    def barrier(self):
        self.generation += 1

    def check(self, block, neighbor):
        if self.generation[block] != self.generation[neighbor]:
            raise RuntimeError(
                f"stale halo read: block {block} at generation "
                f"{self.generation[block]}, neighbor {neighbor} at "
                f"{self.generation[neighbor]}")
        return True


class Engine:
    """Steps a World with the serial or the block-parallel backend."""

    def __init__(self, world, backend="serial", block_cap=512,
                 use_compiled=None, max_blocks=None):
        if backend not in ("serial", "parallel"):
            raise ValueError("backend must be 'serial' or 'parallel'")
        self.world = world
        self.backend = backend
        self.partition = partition_world(world, block_cap,
                                         max_blocks=max_blocks)
        self.mailbox = Mailbox()
        self.snapshot_buffer = SnapshotBuffer(world)
        self.halo = HaloTracker(self.partition.block_count)
        self.command_log = []
        self.last_contacts = 0
        self._pending = []  # (command, ticket, ring slot) until applied
        self.compiled = (HAVE_COMPILED_CORE if use_compiled is None
                         else (use_compiled and HAVE_COMPILED_CORE))
        self._ctx = None
        self._pool = None
        if self.compiled:
            starts, ends = block_ranges(self.partition)
            buf = self.snapshot_buffer
            self._ctx = _core.make_context(world, starts, ends,
                                           buf.positions, buf.frames,
                                           buf.seq, buf.step)
        if backend == "parallel" and self.compiled:
            self._pool = _WorkerPool(self._ctx, self.partition.block_count)
        self.snapshot_buffer.publish(world)

    # -- commands ---------------------------------------------------------

    def post_command(self, name, **args):
        ticket = self.mailbox.post(name, **args)
        if self._epoch_running():
            self._stage_pending()
        return ticket

    def _epoch_running(self):
        return self._pool is not None and self._pool.running

    def _stage_pending(self):
        """Encode queued commands for pickup at the next step boundary."""
        items = self.mailbox.drain()
        if not items:
            return
        for cmd, ticket in items:
            ops = self._encode(cmd)
            if not ops:
                ticket.resolve(self.world.step_index)
                continue
            slots = _core.stage_commands(
                self._ctx, np.array(ops, dtype=np.float64))
            self._pending.append((cmd, ticket, slots[-1]))

    def _encode(self, cmd):
        """Command -> [op, i0, i1, f0, f1, f2] rows for the staging ring."""
        w = self.world
        a = cmd.args
        if cmd.name == "insert_velocity":
            rod = a.get("rod", 0)
            axis = np.asarray(a.get("axis", self._driver_axis(rod)))
            vel = float(a["value"]) * axis
            return [[OP_DRIVER_VELOCITY, rod, 0, vel[0], vel[1], vel[2]]]
        if cmd.name == "rotate_velocity":
            return [[OP_DRIVER_ROTATION, a.get("rod", 0), 0,
                     float(a["value"]), 0.0, 0.0]]
        if cmd.name == "grab":
            rod = a.get("rod", 0)
            point = w.rod_infos[rod].point_offset + int(a["index"])
            t = np.asarray(a["target"], dtype=float)
            slot = self._grab_slot(point)
            return [[OP_GRAB, slot, point, t[0], t[1], t[2]]]
        if cmd.name == "release":
            rod = a.get("rod", 0)
            point = w.rod_infos[rod].point_offset + int(a["index"])
            ops = []
            for slot in range(w.grab_active.shape[0]):
                if w.grab_point[slot] == point:
                    ops.append([OP_RELEASE, slot, 0, 0.0, 0.0, 0.0])
            return ops
        raise ValueError(f"unknown command {cmd.name!r}")

    def _grab_slot(self, point):
        w = self.world
        for slot in range(w.grab_active.shape[0]):
            if w.grab_point[slot] == point:
                return slot
        for slot in range(w.grab_active.shape[0]):
            if not w.grab_active[slot] and w.grab_point[slot] == -1:
                # reserve python-side so two commands don't share a slot
                w.grab_point[slot] = point
                return slot
        raise RuntimeError("no free grab slot")

    def _driver_axis(self, rod):
        v = self.world.driver_velocity[rod]
        n = np.linalg.norm(v)
        if n > 0.0:
            return v / n
        return np.array([0.0, 0.0, 1.0])

    def _apply_command(self, cmd):
        """Direct application (serial and fallback paths)."""
        w = self.world
        a = cmd.args
        if cmd.name == "insert_velocity":
            rod = a.get("rod", 0)
            axis = np.asarray(a.get("axis", self._driver_axis(rod)))
            w.driver_velocity[rod] = float(a["value"]) * axis
        elif cmd.name == "rotate_velocity":
            w.driver_rotation[a.get("rod", 0)] = float(a["value"])
        elif cmd.name == "grab":
            w.grab(a.get("rod", 0), int(a["index"]),
                   np.asarray(a["target"], dtype=float))
        elif cmd.name == "release":
            w.release(a.get("rod", 0), int(a["index"]))
        else:
            raise ValueError(f"unknown command {cmd.name!r}")

    def _drain_at_boundary(self):
        """Apply queued commands before the next step (serial paths)."""
        for cmd, ticket in self.mailbox.drain():
            self._apply_command(cmd)
            self.command_log.append((self.world.step_index, cmd))
            ticket.resolve(self.world.step_index)

    # -- stepping ---------------------------------------------------------

    def run_epoch(self, steps):
        """Execute `steps` time-steps; returns a metrics dict."""
        if steps < 1:
            raise ValueError("steps must be >= 1")
        t0 = time.perf_counter_ns()
        barrier_wait = 0
        if self.backend == "parallel" and self._pool is not None:
            self._stage_pending()
            contacts, barrier_wait = self._pool.run_epoch(steps)
            self.world.step_index += steps
            self._resolve_applied()
            self._check_core_error()
        elif self.compiled:
            contacts = 0
            for _ in range(steps):
                self._drain_at_boundary()
                contacts = _core.step_serial(self._ctx)
                self.world.step_index += 1
                self._resolve_applied()
            self._check_core_error()
        else:
            contacts = 0
            for _ in range(steps):
                self._drain_at_boundary()
                contacts = pystep.step(self.world)
                if self.backend == "parallel":
                    # Fallback block-parallel: the phase sweep above is
                    # block-order independent; track barrier generations so
                    # halo reads remain checkable.
                    for _ in range(2 + 2 * self.world.solver.iterations):
                        self.halo.barrier()
                self.snapshot_buffer.publish(self.world)
        wall = time.perf_counter_ns() - t0
        self.last_contacts = contacts
        return {
            "wall_ns": wall,
            "steps": steps,
            "barrier_wait_ns": barrier_wait,
            "contacts": contacts,
        }

    def _resolve_applied(self):
        if not self._pending:
            return
        still = []
        for cmd, ticket, slot in self._pending:
            applied_step = _core.applied_step_for(self._ctx, slot)
            if applied_step >= 0:
                self.command_log.append((applied_step, cmd))
                ticket.resolve(applied_step)
            else:
                still.append((cmd, ticket, slot))
        self._pending = still

    def _check_core_error(self):
        step = _core.error_step(self._ctx)
        if step >= 0:
            raise FloatingPointError(
                f"non-finite force/torque or degenerate geometry "
                f"at step {step}")

    def set_params(self, dt=None, iterations=None):
        """Change stepping parameters between epochs.

        Never call while an epoch is running; the service and the scenario
        runner both apply this only at epoch boundaries.
        """
        if self._epoch_running():
            raise RuntimeError("cannot change parameters mid-epoch")
        if dt is not None:
            if dt <= 0.0:
                raise ValueError("dt must be positive")
            self.world.dt = float(dt)
        if iterations is not None:
            if iterations < 1:
                raise ValueError("iterations must be >= 1")
            self.world.solver.iterations = int(iterations)
        if self.compiled:
            _core.update_params(self._ctx, self.world.dt,
                                self.world.solver.iterations)

    def read_snapshot(self):
        return self.snapshot_buffer.read()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _WorkerPool:
    """One persistent thread per block; epochs dispatched via barriers."""

    def __init__(self, ctx, num_blocks):
        self.ctx = ctx
        self.num_blocks = num_blocks
        self.steps = 0
        self.stop = False
        self.running = False
        self.error = [None] * num_blocks
        self._start = threading.Barrier(num_blocks + 1)
        self._end = threading.Barrier(num_blocks + 1)
        self.threads = [
            threading.Thread(target=self._worker, args=(b,), daemon=True)
            for b in range(num_blocks)
        ]
        for t in self.threads:
            t.start()

    def _worker(self, block):
        while True:
            self._start.wait()
            if self.stop:
                return
            try:
                _core.run_epoch_worker(self.ctx, block, self.steps)
            except BaseException as exc:  # surfaced after the epoch
                self.error[block] = exc
            self._end.wait()

    def run_epoch(self, steps):
        self.steps = steps
        _core.begin_epoch(self.ctx)
        self.running = True
        self._start.wait()
        self._end.wait()
        self.running = False
        for block, err in enumerate(self.error):
            if err is not None:
                self.error[block] = None
                raise RuntimeError(
                    f"worker for block {block} failed mid-epoch") from err
        return _core.epoch_results(self.ctx)

    def shutdown(self):
        self.stop = True
        self._start.wait()
        for t in self.threads:
            t.join(timeout=5.0)
