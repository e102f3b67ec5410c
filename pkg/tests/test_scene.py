import json

import numpy as np
import pytest

from rodsim.scene import (SceneError, build_world, load_scene, parse_scene,
                          save_scene)
from rodsim.world import BIND_BIDIRECTIONAL, BIND_ONE_WAY


def write(tmp_path, data, name="scene.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_minimal_scene_loads_with_defaults(tmp_path):
    cfg = load_scene(write(tmp_path, {}))
    assert cfg.dt == 1e-4
    assert len(cfg.rods) == 1
    assert cfg.rods[0].num_points == 64
    assert cfg.solver.iterations == 10
    assert cfg.mesh is None
    world = build_world(cfg)
    assert world.num_points == 64


def test_round_trip_identity(tmp_path):
    data = {
        "dt": 5e-5,
        "rods": [{"num_points": 16, "length": 0.2, "clamps": [0, 15]}],
        "solver": {"iterations": 7},
        "self_collision": {"point_radius": 1.5e-3},
        "couplings": [],
        "backend": "parallel",
        "blocks": 4,
    }
    cfg1 = load_scene(write(tmp_path, data))
    echoed = save_scene(tmp_path / "echo.json", cfg1)
    cfg2 = load_scene(echoed)
    assert cfg1.echo() == cfg2.echo()
    # echo -> echo is stable too
    save_scene(tmp_path / "echo2.json", cfg2)
    assert (tmp_path / "echo.json").read_text() == \
        (tmp_path / "echo2.json").read_text()


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(SceneError, match="not found"):
        load_scene(tmp_path / "nope.json")
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(SceneError, match="invalid JSON"):
        load_scene(p)


@pytest.mark.parametrize("data,path", [
    ({"rods": [{"radius": -1.0}]}, r"rods\[0\].radius"),
    ({"rods": [{"num_points": 2}]}, r"rods\[0\].num_points"),
    ({"rods": [{"clamps": [99]}]}, r"rods\[0\].clamps\[0\]"),
    ({"solver": {"iterations": 0}}, r"solver.iterations"),
    ({"solver": {"position_bias": 1.5}}, r"solver.position_bias"),
    ({"couplings": [{"mode": "v9"}]}, r"couplings\[0\].mode"),
    ({"couplings": [{"rod_b": 5}]}, r"couplings\[0\].rod_b"),
    ({"drivers": [{"rod": 3}]}, r"drivers\[0\].rod"),
    ({"backend": "gpu"}, r"backend"),
    ({"dt": 0.0}, r"dt"),
    ({"gravity": [0, 1]}, r"gravity"),
    ({"bogus_key": 1}, r"bogus_key"),
    ({"rods": [{"mystery": 1}]}, r"mystery"),
])
def test_validation_errors_name_field_paths(data, path):
    with pytest.raises(SceneError, match=path):
        parse_scene(data)


def test_missing_mesh_error_names_path(tmp_path):
    cfg = load_scene(write(tmp_path, {"mesh": "missing_tube.obj"}))
    with pytest.raises(SceneError, match="missing_tube.obj"):
        build_world(cfg)


def test_v2_coupling_instantiates_bidirectional_bindings():
    cfg = parse_scene({
        "rods": [{"num_points": 8}, {"num_points": 8}],
        "couplings": [{"rod_a": 0, "rod_b": 1, "mode": "v2", "stride": 2}],
    })
    world = build_world(cfg)
    assert list(world.bind_a) == [0, 2, 4, 6]
    assert list(world.bind_b) == [8, 10, 12, 14]
    assert set(world.bind_mode) == {BIND_BIDIRECTIONAL}


def test_v1_one_way_and_v0_none():
    base = {"rods": [{"num_points": 8}, {"num_points": 8}]}
    w1 = build_world(parse_scene({
        **base, "couplings": [{"mode": "v1"}]}))
    assert set(w1.bind_mode) == {BIND_ONE_WAY}
    w0 = build_world(parse_scene({
        **base, "couplings": [{"mode": "v0"}]}))
    assert w0.bind_a.size == 0


def test_clamps_drivers_and_intrinsic_strains():
    cfg = parse_scene({
        "rods": [{"num_points": 10, "clamps": [0, 9],
                  "intrinsic_strains": [0.0, 3.0, 0.0]}],
        "drivers": [{"rod": 0, "insert_speed": 0.05,
                     "axis": [0.0, 0.0, 2.0]}],
    })
    world = build_world(cfg)
    assert world.point_locked[0] and world.point_locked[9]
    assert np.allclose(world.driver_velocity[0], [0.0, 0.0, 0.05])
    assert np.allclose(world.intrinsic_strains, [0.0, 3.0, 0.0])
    assert world.driven_point[0] == 0
