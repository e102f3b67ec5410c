/** Maps keyboard/mouse input to steering commands.
 *
 * Press-and-hold: keydown sends the configured velocity, keyup sends 0.
 * Mouse drag on a rod point sends a grab whose target follows the pointer
 * ray intersected with a camera-facing plane through the grabbed point;
 * mouse-up releases.  Two grab slots allow both loose ends of a knot to be
 * held at once (e.g. from two browsers or two pointers).
 */

import type { Command } from "./protocol.js";

export interface InputConfig {
  insertSpeed: number; // m/s, configurable slider
  rotateSpeed: number; // rad/s
}

export const DEFAULT_KEYS: Record<string, { kind: "insert" | "rotate"; sign: 1 | -1 }> = {
  ArrowUp: { kind: "insert", sign: 1 },
  ArrowDown: { kind: "insert", sign: -1 },
  ArrowLeft: { kind: "rotate", sign: -1 },
  ArrowRight: { kind: "rotate", sign: 1 },
};

export class KeyboardMapper {
  private held = new Map<string, { kind: "insert" | "rotate"; sign: 1 | -1 }>();

  constructor(
    public config: InputConfig,
    public activeRod = 0,
    private keys = DEFAULT_KEYS,
  ) {}

  /** Command for a keydown, or null if unmapped or an auto-repeat. */
  keyDown(key: string): Command | null {
    const binding = this.keys[key];
    if (!binding || this.held.has(key)) return null; // ignore auto-repeat
    this.held.set(key, binding);
    return this.command(binding.kind, binding.sign);
  }

  /** Command for a keyup: zero the velocity unless an opposing key of the
   * same kind is still held. */
  keyUp(key: string): Command | null {
    const binding = this.held.get(key);
    if (!binding) return null;
    this.held.delete(key);
    for (const other of this.held.values())
      if (other.kind === binding.kind)
        return this.command(other.kind, other.sign);
    return this.command(binding.kind, 0);
  }

  /** True when any mapped key is held (no traffic otherwise). */
  get active(): boolean {
    return this.held.size > 0;
  }

  private command(kind: "insert" | "rotate", sign: number): Command {
    const speed = kind === "insert" ? this.config.insertSpeed : this.config.rotateSpeed;
    return {
      type: kind === "insert" ? "insert_velocity" : "rotate_velocity",
      rod: this.activeRod,
      value: sign * speed,
    };
  }
}

export type Vec3 = [number, number, number];

/** Intersect a pointer ray with the plane through `anchor` with normal
 * `planeNormal` (typically the camera view direction); null when parallel
 * or behind the ray origin. */
export function rayPlaneTarget(
  rayOrigin: Vec3,
  rayDir: Vec3,
  anchor: Vec3,
  planeNormal: Vec3,
): Vec3 | null {
  const denom =
    rayDir[0] * planeNormal[0] + rayDir[1] * planeNormal[1] + rayDir[2] * planeNormal[2];
  if (Math.abs(denom) < 1e-12) return null;
  const diff: Vec3 = [
    anchor[0] - rayOrigin[0],
    anchor[1] - rayOrigin[1],
    anchor[2] - rayOrigin[2],
  ];
  const t =
    (diff[0] * planeNormal[0] + diff[1] * planeNormal[1] + diff[2] * planeNormal[2]) / denom;
  if (t < 0) return null;
  return [
    rayOrigin[0] + t * rayDir[0],
    rayOrigin[1] + t * rayDir[1],
    rayOrigin[2] + t * rayDir[2],
  ];
}

export interface GrabSlot {
  rod: number;
  index: number;
  anchor: Vec3;
  planeNormal: Vec3;
}

/** Two-slot grab tracker for drag interactions. */
export class GrabTracker {
  slots: (GrabSlot | null)[] = [null, null];

  /** Begin a drag; returns the grab command or null when both slots busy. */
  begin(rod: number, index: number, anchor: Vec3, planeNormal: Vec3): Command | null {
    const free = this.slots.findIndex((s) => s === null);
    if (free < 0) return null;
    this.slots[free] = { rod, index, anchor, planeNormal };
    return { type: "grab", rod, index, target: [...anchor] as Vec3 };
  }

  /** Move the pointer: retarget the grab along the anchor plane. */
  move(slot: number, rayOrigin: Vec3, rayDir: Vec3): Command | null {
    const s = this.slots[slot];
    if (!s) return null;
    const target = rayPlaneTarget(rayOrigin, rayDir, s.anchor, s.planeNormal);
    if (!target) return null;
    return { type: "grab", rod: s.rod, index: s.index, target };
  }

  /** End a drag; returns the release command. */
  end(slot: number): Command | null {
    const s = this.slots[slot];
    if (!s) return null;
    this.slots[slot] = null;
    return { type: "release", rod: s.rod, index: s.index };
  }

  slotFor(rod: number, index: number): number {
    return this.slots.findIndex((s) => s !== null && s.rod === rod && s.index === index);
  }
}
