import json

import numpy as np
import pytest

from rodsim import scenarios
from rodsim.metrics import HEADER
from rodsim.scene import build_world


def test_all_bundled_configs_parse_and_build():
    for name in scenarios.SCENARIO_NAMES:
        cfg = scenarios.default_config(name)
        world = build_world(cfg)
        assert world.num_points > 0


def test_unknown_scenario_rejected():
    with pytest.raises(ValueError, match="unknown scenario"):
        scenarios.run_scenario("warp_drive",
                               scenarios.default_config("free_space"))
    with pytest.raises(ValueError):
        scenarios.default_config("warp_drive")


def test_free_space_short_run_metrics():
    table, engine = scenarios.run_scenario(
        "free_space", scenarios.default_config("free_space"), steps=400,
        batch=100)
    assert len(table.rows) == 4
    assert sum(table.column("steps")) == 400
    assert max(table.column("max_strain")) < 0.01
    assert all(c == 0 for c in table.column("contacts"))  # no mesh
    assert [row[0] for row in table.rows] == [0, 1, 2, 3]
    assert len(table.rows[0]) == len(HEADER)


def test_insertion_driver_advances_base_point():
    cfg = scenarios.default_config("insertion")
    table, engine = scenarios.run_scenario("insertion", cfg, steps=200)
    w = engine.world
    # base point driven at 5 cm/s for 200 steps of 0.1 ms
    assert w.positions[0, 2] == pytest.approx(-0.3 + 0.05 * 200 * 1e-4,
                                              abs=1e-9)


def test_scenario_rerun_is_deterministic():
    finals = []
    for _ in range(2):
        _, engine = scenarios.run_scenario(
            "pair_insertion_v2", scenarios.default_config("pair_insertion_v2"),
            steps=300)
        finals.append(engine.world.positions.copy())
    assert np.array_equal(finals[0], finals[1])


def test_knot_replay_missing_file_error():
    cfg = scenarios.default_config("knot_replay")
    cfg.replay = "gone.ndjson"
    with pytest.raises(ValueError, match="replay file missing"):
        scenarios.run_scenario("knot_replay", cfg, steps=10)
    cfg.replay = None
    with pytest.raises(ValueError, match="needs a replay file"):
        scenarios.run_scenario("knot_replay", cfg, steps=10)


def test_load_replay_sorts_and_reports_bad_lines(tmp_path):
    p = tmp_path / "session.ndjson"
    lines = [
        json.dumps({"type": "command", "step": 50, "id": 1,
                    "command": {"type": "release", "rod": 0, "index": 3}}),
        json.dumps({"type": "ack", "id": 0, "apply_step": 0}),  # ignored
        json.dumps({"type": "command", "step": 10, "id": 0,
                    "command": {"type": "grab", "rod": 0, "index": 3,
                                "target": [0.0, 0.1, 0.0]}}),
    ]
    p.write_text("\n".join(lines) + "\n")
    events = scenarios.load_replay(p)
    assert [(s, n) for s, n, _ in events] == [(10, "grab"), (50, "release")]
    assert events[0][2] == {"rod": 0, "index": 3, "target": [0.0, 0.1, 0.0]}
    p.write_text("{broken\n")
    with pytest.raises(ValueError, match="session.ndjson:1"):
        scenarios.load_replay(p)


def test_knot_replay_commands_apply_at_recorded_steps():
    cfg = scenarios.default_config("knot_replay")
    table, engine = scenarios.run_scenario("knot_replay", cfg, steps=300,
                                           batch=128)
    schedule = scenarios.command_schedule("knot_replay", cfg)
    due = [(s, n) for s, n, _ in schedule if s < 300]
    assert [(s, c.name) for s, c in engine.command_log] == due


def test_write_bundled_scenes_round_trip(tmp_path):
    from rodsim.scene import load_scene
    paths = scenarios.write_bundled_scenes(tmp_path)
    assert set(paths) == set(scenarios.SCENARIO_NAMES)
    cfg = load_scene(paths["free_space"])
    assert cfg.echo() == scenarios.default_config("free_space").echo()
