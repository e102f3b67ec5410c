/** Client-side view of the simulation: the latest-frame slot plus
 * selection and connection status.  The network reader writes frames in;
 * the renderer reads the latest only, so rendering never blocks the
 * protocol reader and stale frames (sequence <= last accepted) are dropped.
 */

import type { SceneSummary, StateFrame } from "./protocol.js";

export type ConnectionStatus =
  | "connecting"
  | "connected"
  | "disconnected"
  | "version_mismatch";

export interface Selection {
  rod: number;
  point: number; // index into the decimated polyline
}

export class ViewState {
  scene: SceneSummary | null = null;
  status: ConnectionStatus = "connecting";
  latestSequence = -1;
  stepIndex = -1;
  /** polylines[rod][point] = [x, y, z] */
  polylines: number[][][] = [];
  selection: Selection | null = null;
  framesReceived = 0;
  framesDropped = 0;

  /** Accept a frame unless its sequence is stale; returns acceptance. */
  applyFrame(frame: StateFrame): boolean {
    if (frame.sequence <= this.latestSequence) {
      this.framesDropped += 1;
      return false;
    }
    this.latestSequence = frame.sequence;
    this.stepIndex = frame.step_index;
    this.polylines = frame.positions;
    this.framesReceived += 1;
    return true;
  }

  reset(): void {
    this.latestSequence = -1;
    this.stepIndex = -1;
    this.polylines = [];
    this.selection = null;
  }

  /** Map a decimated polyline index back to the rod's point index. */
  pointIndex(rod: number, polylinePoint: number): number {
    if (!this.scene) return polylinePoint;
    const info = this.scene.rods[rod];
    const stride = this.scene.stream_stride;
    const index = polylinePoint * stride;
    // the final decimated entry is always the tip
    return Math.min(index, info.num_points - 1);
  }
}
