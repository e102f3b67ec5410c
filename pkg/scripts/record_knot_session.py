"""Regenerate the bundled knot-tying session log and its checksum.

The session grabs the free end of the second rod and guides it across and
under the first rod, producing a sustained crossing with rod-rod contact.
The log uses the wire-protocol command format (newline-delimited command
messages with step indices); the checksum file records the sum of absolute
final coordinates after replaying the log, for regression comparison.
"""

import json
import os

import numpy as np

ASSETS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..",
                      "src", "rodsim", "assets")
SESSION = os.path.join(ASSETS, "knot_session.ndjson")
CHECKSUM = os.path.join(ASSETS, "knot_checksum.json")
REPLAY_STEPS = 16000


def waypoints():
    """(step, target) guide points for the grabbed rod end."""
    start = np.array([0.12, 0.0, 0.02])
    path = [
        # lift and swing across the first rod
        (0.10, 0.015, 0.02),
        (0.08, 0.025, 0.01),
        (0.06, 0.025, 0.0),
        # dive below it on the far side
        (0.05, 0.015, -0.01),
        (0.05, 0.0, -0.015),
        # pull back under, completing the crossing
        (0.06, -0.015, -0.01),
        (0.08, -0.02, -0.005),
        (0.10, -0.015, -0.002),
        # tighten gently toward the first rod
        (0.09, -0.006, -0.002),
        (0.08, -0.003, -0.002),
    ]
    # densify: small target updates keep the grab correction velocity low
    knots = [start] + [np.asarray(p) for p in path]
    events = []
    # quasi-continuous drag: tiny target increments keep the grab
    # correction velocity (and hence impact penetration) small
    step = 0
    per_leg = 48
    for a, b in zip(knots, knots[1:]):
        for k in range(per_leg):
            events.append((step, a + (b - a) * (k / per_leg)))
            step += 25
    events.append((step, knots[-1]))
    return events


def main():
    lines = []
    ident = 0
    for step, target in waypoints():
        lines.append(json.dumps({
            "type": "command", "step": step, "id": ident,
            "command": {"type": "grab", "rod": 1, "index": 47,
                        "target": list(np.round(target, 6))},
        }))
        ident += 1
    last = waypoints()[-1][0]
    lines.append(json.dumps({
        "type": "command", "step": last + 1500, "id": ident,
        "command": {"type": "release", "rod": 1, "index": 47},
    }))
    with open(SESSION, "w") as fh:
        fh.write("\n".join(lines) + "\n")

    from rodsim import scenarios
    table, engine = scenarios.run_scenario(
        "knot_replay", scenarios.default_config("knot_replay"),
        steps=REPLAY_STEPS)
    checksum = float(np.sum(np.abs(engine.world.positions)))
    with open(CHECKSUM, "w") as fh:
        json.dump({"steps": REPLAY_STEPS, "checksum": checksum,
                   "tolerance": 1e-6}, fh, indent=2)
        fh.write("\n")
    print("session:", SESSION)
    print("checksum:", checksum)


if __name__ == "__main__":
    main()
