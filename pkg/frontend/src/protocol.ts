/** Wire protocol: JSON text messages tagged by `type`.
 *
 * Server to client: hello, state_frame, ack, error.
 * Client to server: command envelopes carrying one of insert_velocity,
 * rotate_velocity, grab, release, set_params.
 */

export const PROTOCOL_VERSION = 1;

export interface RodSummary {
  num_points: number;
  radius: number;
  contact_radius: number;
}

export interface SceneSummary {
  rods: RodSummary[];
  dt: number;
  stream_stride: number;
  gravity: [number, number, number];
  mesh_url?: string;
}

export interface HelloMessage {
  type: "hello";
  protocol_version: number;
  scene: SceneSummary;
}

export interface StateFrame {
  type: "state_frame";
  sequence: number;
  step_index: number;
  /** positions[rod][point] = [x, y, z], stride-decimated, tip included */
  positions: number[][][];
  frames?: number[][];
}

export interface AckMessage {
  type: "ack";
  id: number;
  apply_step: number;
}

export interface ErrorMessage {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = HelloMessage | StateFrame | AckMessage | ErrorMessage;

export type Command =
  | { type: "insert_velocity"; rod?: number; value: number }
  | { type: "rotate_velocity"; rod?: number; value: number }
  | { type: "grab"; rod?: number; index: number; target: [number, number, number] }
  | { type: "release"; rod?: number; index: number }
  | { type: "set_params"; dt?: number; iterations?: number; batch?: number };

export interface CommandEnvelope {
  type: "command";
  id: number;
  command: Command;
}

const isVec3 = (v: unknown): v is [number, number, number] =>
  Array.isArray(v) && v.length === 3 && v.every((x) => typeof x === "number");

/** Parse one server message; returns null for anything malformed. */
export function parseServerMessage(raw: string): ServerMessage | null {
  let msg: unknown;
  try {
    msg = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof msg !== "object" || msg === null) return null;
  const m = msg as Record<string, unknown>;
  switch (m.type) {
    case "hello": {
      const scene = m.scene as SceneSummary | undefined;
      if (typeof m.protocol_version !== "number" || !scene) return null;
      if (!Array.isArray(scene.rods)) return null;
      return m as unknown as HelloMessage;
    }
    case "state_frame":
      if (typeof m.sequence !== "number" || typeof m.step_index !== "number")
        return null;
      if (!Array.isArray(m.positions)) return null;
      return m as unknown as StateFrame;
    case "ack":
      if (typeof m.id !== "number" || typeof m.apply_step !== "number")
        return null;
      return m as unknown as AckMessage;
    case "error":
      if (typeof m.code !== "string" || typeof m.message !== "string")
        return null;
      return m as unknown as ErrorMessage;
    default:
      return null;
  }
}

/** Schema check mirroring the service-side validation. */
export function validateCommand(cmd: Command): string | null {
  switch (cmd.type) {
    case "insert_velocity":
    case "rotate_velocity":
      if (typeof cmd.value !== "number" || !Number.isFinite(cmd.value))
        return "numeric 'value' required";
      return null;
    case "grab":
      if (!Number.isInteger(cmd.index) || cmd.index < 0)
        return "index must be a non-negative integer";
      if (!isVec3(cmd.target)) return "grab target must be [x, y, z]";
      return null;
    case "release":
      if (!Number.isInteger(cmd.index) || cmd.index < 0)
        return "index must be a non-negative integer";
      return null;
    case "set_params": {
      const keys = Object.keys(cmd).filter((k) => k !== "type");
      if (keys.length === 0) return "set_params needs at least one field";
      for (const k of keys)
        if (!["dt", "iterations", "batch"].includes(k))
          return `set_params does not accept '${k}'`;
      return null;
    }
  }
}

export function envelope(id: number, command: Command): CommandEnvelope {
  const problem = validateCommand(command);
  if (problem !== null) throw new Error(problem);
  return { type: "command", id, command };
}
