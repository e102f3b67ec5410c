import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from rodsim import scenarios
from rodsim.scene import parse_scene
from rodsim.service import PROTOCOL_VERSION, create_app


def small_scene(**extra):
    data = {
        "rods": [{"num_points": 24, "length": 0.2, "radius": 1e-3,
                  "stretch_modulus": 1e6, "bend_modulus": 1e5,
                  "shear_modulus": 5e4, "damping_translational": 1e-4,
                  "clamps": [0]}],
        "solver": {"iterations": 4},
        "batch": 20,
        **extra,
    }
    return parse_scene(data, base_dir=scenarios.ASSET_DIR)


def command(ident, ctype, **args):
    return {"type": "command", "id": ident,
            "command": {"type": ctype, **args}}


def recv_until(ws, wanted, limit=200):
    for _ in range(limit):
        msg = ws.receive_json()
        if msg["type"] == wanted:
            return msg
    raise AssertionError(f"no {wanted} message within {limit} messages")


def test_hello_then_streaming_frames():
    app = create_app(small_scene(), frame_interval=0.005)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            hello = ws.receive_json()
            assert hello["type"] == "hello"
            assert hello["protocol_version"] == PROTOCOL_VERSION
            assert hello["scene"]["rods"][0]["num_points"] == 24
            f1 = recv_until(ws, "state_frame")
            f2 = recv_until(ws, "state_frame")
            assert f2["sequence"] > f1["sequence"]
            assert f2["step_index"] >= f1["step_index"]
            assert len(f1["positions"]) == 1          # one rod
            assert len(f1["positions"][0]) == 24      # stride 1
            assert len(f1["positions"][0][0]) == 3


def test_stride_decimation_keeps_tip():
    app = create_app(small_scene(stream_stride=5), frame_interval=0.005)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            frame = recv_until(ws, "state_frame")
            # indices 0,5,10,15,20 plus the tip 23
            assert len(frame["positions"][0]) == 6


def test_first_commander_binds_controller_second_rejected():
    cfg = small_scene(drivers=[{"rod": 0, "insert_speed": 0.0,
                                "axis": [0.0, 0.0, 1.0]}])
    app = create_app(cfg, frame_interval=0.005)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws1, \
                client.websocket_connect("/ws") as ws2:
            ws1.receive_json()
            ws2.receive_json()
            ws1.send_json(command(0, "insert_velocity", value=0.01))
            ack = recv_until(ws1, "ack")
            assert ack["id"] == 0 and ack["apply_step"] >= 0
            ws2.send_json(command(0, "insert_velocity", value=0.5))
            err = recv_until(ws2, "error")
            assert err["code"] == "controller_bound"
            assert "controller already bound" in err["message"]


def test_malformed_messages_get_errors():
    app = create_app(small_scene(), frame_interval=0.005)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_text("{nope")
            assert recv_until(ws, "error")["code"] == "bad_json"
            ws.send_json({"type": "command", "id": 1, "command": {}})
            assert recv_until(ws, "error")["code"] == "bad_command"
            ws.send_json(command(2, "grab", index=99, target=[0, 0, 0]))
            err = recv_until(ws, "error")
            assert err["code"] == "bad_command"
            assert "index out of range" in err["message"]
            ws.send_json(command(3, "teleport"))
            assert recv_until(ws, "error")["code"] == "bad_command"


def test_commands_acked_logged_and_applied(tmp_path):
    log = tmp_path / "session.ndjson"
    cfg = small_scene(drivers=[{"rod": 0, "insert_speed": 0.0,
                                "axis": [0.0, 0.0, 1.0]}])
    app = create_app(cfg, session_log=str(log), frame_interval=0.005)
    with TestClient(app) as client:
        service = app.state.service
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json(command(0, "insert_velocity", value=0.02))
            a0 = recv_until(ws, "ack")
            ws.send_json(command(1, "grab", index=12,
                                 target=[0.0, 0.05, 0.1]))
            a1 = recv_until(ws, "ack")
            ws.send_json(command(2, "release", index=12))
            a2 = recv_until(ws, "ack")
            ws.send_json(command(3, "set_params", iterations=6, batch=10))
            a3 = recv_until(ws, "ack")
            assert a0["apply_step"] <= a1["apply_step"] <= a2["apply_step"] \
                <= a3["apply_step"]
        assert service.world.solver.iterations == 6
        assert service.batch == 10
        assert np.allclose(service.world.driver_velocity[0],
                           [0.0, 0.0, 0.02])
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert [l["id"] for l in lines] == [0, 1, 2, 3]
    assert [l["command"]["type"] for l in lines] == [
        "insert_velocity", "grab", "release", "set_params"]
    assert [l["step"] for l in lines] == [
        a0["apply_step"], a1["apply_step"], a2["apply_step"],
        a3["apply_step"]]


def test_controller_disconnect_releases_grabs(tmp_path):
    log = tmp_path / "session.ndjson"
    app = create_app(small_scene(), session_log=str(log),
                     frame_interval=0.005)
    with TestClient(app) as client:
        service = app.state.service
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json(command(0, "grab", index=10,
                                 target=[0.0, 0.05, 0.0]))
            recv_until(ws, "ack")
            assert service.world.grab_active.any()
        # the context exit disconnects; grabs must be released promptly
        deadline = time.time() + 5.0
        while service.world.grab_active.any() and time.time() < deadline:
            time.sleep(0.01)
        assert not service.world.grab_active.any()
        assert service.controller is None
    releases = [json.loads(x) for x in log.read_text().splitlines()
                if json.loads(x)["command"]["type"] == "release"]
    assert len(releases) == 1


def test_controller_seat_frees_after_disconnect():
    app = create_app(small_scene(), frame_interval=0.005)
    with TestClient(app) as client:
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json(command(0, "rotate_velocity", value=1.0))
            recv_until(ws, "ack")
        deadline = time.time() + 5.0
        while app.state.service.controller is not None \
                and time.time() < deadline:
            time.sleep(0.01)
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json(command(0, "rotate_velocity", value=0.0))
            assert recv_until(ws, "ack")["id"] == 0


def test_mesh_route():
    app = create_app(small_scene(mesh="curved_tube.obj"),
                     frame_interval=0.05)
    with TestClient(app) as client:
        r = client.get("/mesh")
        assert r.status_code == 200
        assert r.text.startswith("v ")
    app2 = create_app(small_scene(), frame_interval=0.05)
    with TestClient(app2) as client:
        assert client.get("/mesh").status_code == 404


def test_live_session_replay_reproduces_positions(tmp_path):
    log = tmp_path / "session.ndjson"
    cfg = small_scene(drivers=[{"rod": 0, "insert_speed": 0.0,
                                "axis": [0.0, 0.0, 1.0]}])
    app = create_app(cfg, session_log=str(log), frame_interval=0.005)
    with TestClient(app) as client:
        service = app.state.service
        with client.websocket_connect("/ws") as ws:
            ws.receive_json()
            ws.send_json(command(0, "insert_velocity", value=0.03))
            recv_until(ws, "ack")
            ws.send_json(command(1, "grab", index=20,
                                 target=[0.02, 0.05, 0.1]))
            recv_until(ws, "ack")
            time.sleep(0.1)
            ws.send_json(command(2, "release", index=20))
            recv_until(ws, "ack")
        service.stop()  # freeze the engine at a known step
        final_step = service.world.step_index
        live = service.world.positions.copy()
    replayed = scenarios.replay_session(
        small_scene(drivers=[{"rod": 0, "insert_speed": 0.0,
                              "axis": [0.0, 0.0, 1.0]}]),
        str(log), final_step)
    assert replayed.step_index == final_step
    assert np.max(np.abs(replayed.positions - live)) <= 1e-9
