"""Steering service: streams consistent state snapshots over a websocket
and forwards steering commands to the engine mailbox.

Protocol (JSON text messages, tagged by ``type``):

- ``hello`` — sent once per connection: ``protocol_version`` and a scene
  summary (rod sizes/radii, dt, stream stride, mesh URL when present).
- ``state_frame`` — ``sequence``, ``step_index``, ``positions`` decimated
  by the configured stride (per rod, the last point always included), and
  ``frames`` when requested in the scene.
- ``command`` — client to server: ``{"type": "command", "id": n,
  "command": {"type": "insert_velocity" | "rotate_velocity" | "grab" |
  "release" | "set_params", ...}}``.
- ``ack`` — ``{"id": n, "apply_step": s}``; every accepted command is
  acked exactly once.
- ``error`` — ``{"code", "message"}``.

The first client to send a command becomes the controller; other clients
may only observe.  If the controller disconnects, its grabs are released
within one epoch.  Accepted commands are appended to the session log
(newline-delimited command messages with apply-step indices), which the
``knot_replay`` scenario can replay deterministically.
"""

import asyncio
import json
import threading
import time
from contextlib import asynccontextmanager

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse

from .engine import Engine
from .scene import build_world, resolve_path

PROTOCOL_VERSION = 1
COMMAND_NAMES = ("insert_velocity", "rotate_velocity", "grab", "release",
                 "set_params")


class ServiceError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


class SimService:
    """Engine ownership, stepping loop, controller policy, session log."""

    def __init__(self, config, session_log=None, backend=None,
                 frame_interval=1 / 30, idle_sleep=1e-3):
        self.config = config
        self.world = build_world(config)
        engine_kw = {}
        if config.blocks:
            cap = -(-max(i.num_points for i in self.world.rod_infos)
                    // config.blocks)
            engine_kw = {"block_cap": max(cap, 2),
                         "max_blocks": config.blocks}
        self.engine = Engine(self.world, backend=backend or config.backend,
                             **engine_kw)
        self.batch = config.batch
        self.stride = config.stream_stride
        self.frame_interval = frame_interval
        self.idle_sleep = idle_sleep
        self.session_log = session_log
        self.controller = None
        self.controller_grabs = set()   # (rod, index) held by the controller
        self._lock = threading.Lock()   # controller + param + log state
        self._pending_params = None
        self._stop = threading.Event()
        self._thread = None

    # -- lifecycle --------------------------------------------------------

    def start(self):
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=10.0)
            self._thread = None
        self.engine.close()

    def _run(self):
        while not self._stop.is_set():
            with self._lock:
                pending = self._pending_params
                self._pending_params = None
            if pending is not None:
                params, done = pending
                self.engine.set_params(dt=params.get("dt"),
                                       iterations=params.get("iterations"))
                if "batch" in params:
                    self.batch = int(params["batch"])
                done.apply_step = self.world.step_index
                done.set()
            self.engine.run_epoch(self.batch)
            time.sleep(self.idle_sleep)

    # -- outbound messages ------------------------------------------------

    def hello(self):
        rods = [{"num_points": i.num_points, "radius": i.params.radius,
                 "contact_radius": i.contact_radius}
                for i in self.world.rod_infos]
        scene = {
            "rods": rods,
            "dt": self.world.dt,
            "stream_stride": self.stride,
            "gravity": list(self.config.gravity),
        }
        if self.config.mesh is not None:
            scene["mesh_url"] = "/mesh"
        return {"type": "hello", "protocol_version": PROTOCOL_VERSION,
                "scene": scene}

    def frame(self, include_frames=False):
        snap = self.engine.read_snapshot()
        positions = []
        for info in self.world.rod_infos:
            p0, n = info.point_offset, info.num_points
            idx = list(range(0, n, self.stride))
            if idx[-1] != n - 1:
                idx.append(n - 1)  # keep the tip even when decimating
            positions.append(
                [snap.positions[p0 + i].tolist() for i in idx])
        msg = {"type": "state_frame", "sequence": snap.sequence,
               "step_index": snap.step_index, "positions": positions}
        if include_frames:
            msg["frames"] = [row.tolist() for row in snap.frames]
        return msg

    # -- command path -----------------------------------------------------

    def handle_command(self, client, msg):
        """Validate, bind controller, forward, wait for the ack step."""
        cmd = msg.get("command")
        if not isinstance(cmd, dict) or "type" not in cmd:
            raise ServiceError("bad_command", "command object missing 'type'")
        name = cmd["type"]
        if name not in COMMAND_NAMES:
            raise ServiceError("bad_command", f"unknown command {name!r}")
        args = {k: v for k, v in cmd.items() if k != "type"}
        with self._lock:
            if self.controller is None:
                self.controller = client
            elif self.controller != client:
                raise ServiceError("controller_bound",
                                   "controller already bound")
        self._validate(name, args)
        if name == "set_params":
            done = threading.Event()
            done.apply_step = None
            with self._lock:
                self._pending_params = (args, done)
            if not done.wait(timeout=10.0):
                raise ServiceError("timeout", "parameter change not applied")
            apply_step = done.apply_step
        else:
            ticket = self.engine.post_command(name, **args)
            apply_step = ticket.wait(timeout=10.0)
            if name == "grab":
                self.controller_grabs.add((args.get("rod", 0),
                                           int(args["index"])))
            elif name == "release":
                self.controller_grabs.discard((args.get("rod", 0),
                                               int(args["index"])))
        self._record(msg.get("id", -1), name, args, apply_step)
        return {"type": "ack", "id": msg.get("id", -1),
                "apply_step": apply_step}

    def _validate(self, name, args):
        infos = self.world.rod_infos
        rod = args.get("rod", 0)
        if not isinstance(rod, int) or not 0 <= rod < len(infos):
            raise ServiceError("bad_command", "rod index out of range")
        if name in ("grab", "release"):
            index = args.get("index")
            if (not isinstance(index, int)
                    or not 0 <= index < infos[rod].num_points):
                raise ServiceError("bad_command", "index out of range")
        if name == "grab":
            target = args.get("target")
            if (not isinstance(target, list) or len(target) != 3
                    or not all(isinstance(x, (int, float)) for x in target)):
                raise ServiceError("bad_command",
                                   "grab target must be [x, y, z]")
        if name in ("insert_velocity", "rotate_velocity"):
            if not isinstance(args.get("value"), (int, float)):
                raise ServiceError("bad_command", "numeric 'value' required")
        if name == "set_params":
            allowed = {"dt", "iterations", "batch"}
            if not set(args) <= allowed or not args:
                raise ServiceError("bad_command",
                                   f"set_params accepts {sorted(allowed)}")

    def _record(self, ident, name, args, step):
        if self.session_log is None:
            return
        line = json.dumps({"type": "command", "step": int(step),
                           "id": ident, "command": {"type": name, **args}})
        with self._lock:
            with open(self.session_log, "a") as fh:
                fh.write(line + "\n")

    def client_disconnected(self, client):
        """Auto-release the controller's grabs; free the controller seat."""
        with self._lock:
            if self.controller != client:
                return
            self.controller = None
            grabs = sorted(self.controller_grabs)
            self.controller_grabs = set()
        for rod, index in grabs:
            ticket = self.engine.post_command("release", rod=rod, index=index)
            step = ticket.wait(timeout=10.0)
            self._record(-1, "release", {"rod": rod, "index": index}, step)


def create_app(config, session_log=None, backend=None, frame_interval=1 / 30):
    """FastAPI application wrapping one SimService."""
    service = SimService(config, session_log=session_log, backend=backend,
                         frame_interval=frame_interval)

    @asynccontextmanager
    async def lifespan(app):
        service.start()
        yield
        service.stop()

    app = FastAPI(lifespan=lifespan)
    app.state.service = service

    @app.get("/mesh")
    def mesh():
        if service.config.mesh is None:
            return JSONResponse({"error": "scene has no mesh"},
                                status_code=404)
        return FileResponse(resolve_path(service.config,
                                         service.config.mesh),
                            media_type="text/plain")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        client = id(ws)
        await ws.send_json(service.hello())
        send_lock = asyncio.Lock()

        async def stream():
            last_sequence = -1
            while True:
                frame = await asyncio.to_thread(service.frame)
                # sequence must increase strictly per connection
                if frame["sequence"] > last_sequence:
                    last_sequence = frame["sequence"]
                    async with send_lock:
                        await ws.send_json(frame)
                await asyncio.sleep(service.frame_interval)

        streamer = asyncio.create_task(stream())
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    reply = {"type": "error", "code": "bad_json",
                             "message": "message is not valid JSON"}
                else:
                    if msg.get("type") != "command":
                        reply = {"type": "error", "code": "bad_message",
                                 "message": "expected a command message"}
                    else:
                        try:
                            reply = await asyncio.to_thread(
                                service.handle_command, client, msg)
                        except ServiceError as exc:
                            reply = {"type": "error", "code": exc.code,
                                     "message": str(exc)}
                async with send_lock:
                    await ws.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            streamer.cancel()
            await asyncio.to_thread(service.client_disconnected, client)

    return app
