import { describe, expect, it } from "vitest";
import {
  GrabTracker,
  KeyboardMapper,
  rayPlaneTarget,
} from "../src/input.js";

const config = { insertSpeed: 0.05, rotateSpeed: 2.0 };

describe("KeyboardMapper", () => {
  it("press sends the velocity, release sends zero", () => {
    const mapper = new KeyboardMapper({ ...config });
    expect(mapper.keyDown("ArrowUp")).toEqual({
      type: "insert_velocity",
      rod: 0,
      value: 0.05,
    });
    expect(mapper.keyUp("ArrowUp")).toEqual({
      type: "insert_velocity",
      rod: 0,
      value: 0,
    });
  });

  it("ignores auto-repeat and unmapped keys; idle means no traffic", () => {
    const mapper = new KeyboardMapper({ ...config });
    expect(mapper.keyDown("x")).toBeNull();
    expect(mapper.active).toBe(false);
    expect(mapper.keyDown("ArrowLeft")).not.toBeNull();
    expect(mapper.keyDown("ArrowLeft")).toBeNull(); // auto-repeat
    expect(mapper.keyUp("ArrowLeft")).toEqual({
      type: "rotate_velocity",
      rod: 0,
      value: 0,
    });
    expect(mapper.active).toBe(false);
  });

  it("releasing one of two opposing keys falls back to the held one", () => {
    const mapper = new KeyboardMapper({ ...config });
    mapper.keyDown("ArrowUp");
    mapper.keyDown("ArrowDown");
    expect(mapper.keyUp("ArrowDown")).toEqual({
      type: "insert_velocity",
      rod: 0,
      value: 0.05,
    });
    expect(mapper.keyUp("ArrowUp")?.value).toBe(0);
  });

  it("targets the active rod", () => {
    const mapper = new KeyboardMapper({ ...config }, 1);
    expect(mapper.keyDown("ArrowRight")).toEqual({
      type: "rotate_velocity",
      rod: 1,
      value: 2.0,
    });
  });
});

describe("rayPlaneTarget", () => {
  it("intersects the camera-facing plane through the anchor", () => {
    const hit = rayPlaneTarget([0, 0, -1], [0, 0, 1], [0.2, 0.3, 0.5], [0, 0, 1]);
    expect(hit).toEqual([0, 0, 0.5]);
  });

  it("returns null for parallel or backward rays", () => {
    expect(rayPlaneTarget([0, 0, 0], [1, 0, 0], [0, 0, 1], [0, 0, 1])).toBeNull();
    expect(rayPlaneTarget([0, 0, 2], [0, 0, 1], [0, 0, 1], [0, 0, 1])).toBeNull();
  });
});

describe("GrabTracker", () => {
  it("two slots: begin, retarget, release", () => {
    const grabs = new GrabTracker();
    const g0 = grabs.begin(0, 10, [0, 0, 0.1], [0, 0, 1]);
    expect(g0).toEqual({ type: "grab", rod: 0, index: 10, target: [0, 0, 0.1] });
    const g1 = grabs.begin(1, 47, [0, 0.02, 0.1], [0, 0, 1]);
    expect(g1?.index).toBe(47);
    // a third simultaneous grab has no slot
    expect(grabs.begin(0, 3, [0, 0, 0], [0, 0, 1])).toBeNull();

    const move = grabs.move(0, [0.05, 0, 0], [0, 0, 1]);
    expect(move).toEqual({ type: "grab", rod: 0, index: 10, target: [0.05, 0, 0.1] });

    expect(grabs.end(0)).toEqual({ type: "release", rod: 0, index: 10 });
    expect(grabs.end(0)).toBeNull(); // already free
    expect(grabs.slotFor(1, 47)).toBe(1);
  });
});
