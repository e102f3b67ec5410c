import { describe, expect, it } from "vitest";
import { SteerClient, SocketLike } from "../src/connection.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  closedByClient = false;
  onopen: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onerror: ((ev?: unknown) => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closedByClient = true;
    this.onclose?.();
  }

  // test helpers
  open(): void {
    this.onopen?.();
  }
  receive(msg: unknown): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }
  drop(): void {
    this.onclose?.();
  }
}

const hello = (version = 1) => ({
  type: "hello",
  protocol_version: version,
  scene: {
    rods: [{ num_points: 24, radius: 1e-3, contact_radius: 1e-3 }],
    dt: 1e-4,
    stream_stride: 1,
    gravity: [0, -9.81, 0],
  },
});

function harness(options: Record<string, unknown> = {}) {
  const sockets: FakeSocket[] = [];
  const timers: { fn: () => void; ms: number }[] = [];
  const client = new SteerClient("ws://test/ws", {
    backoffMs: 100,
    socketFactory: () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket;
    },
    setTimeoutFn: (fn: () => void, ms: number) => timers.push({ fn, ms }),
    ...options,
  });
  return { client, sockets, timers };
}

describe("SteerClient", () => {
  it("handshakes and feeds frames into the view state", () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].receive(hello());
    expect(client.view.status).toBe("connected");
    expect(client.view.scene?.rods[0].num_points).toBe(24);

    sockets[0].receive({
      type: "state_frame",
      sequence: 1,
      step_index: 20,
      positions: [[[0, 0, 0]]],
    });
    expect(client.view.latestSequence).toBe(1);
    // injected sequence regression is dropped without touching the view
    sockets[0].receive({
      type: "state_frame",
      sequence: 1,
      step_index: 40,
      positions: [[[9, 9, 9]]],
    });
    expect(client.view.stepIndex).toBe(20);
    expect(client.view.framesDropped).toBe(1);
  });

  it("resolves command acks by id", async () => {
    const { client, sockets } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].receive(hello());
    const ackPromise = client.send({ type: "insert_velocity", value: 0.05 });
    const sent = JSON.parse(sockets[0].sent[0]);
    expect(sent).toMatchObject({
      type: "command",
      command: { type: "insert_velocity", value: 0.05 },
    });
    sockets[0].receive({ type: "ack", id: sent.id, apply_step: 120 });
    await expect(ackPromise).resolves.toMatchObject({ apply_step: 120 });
  });

  it("rejects sends while disconnected", async () => {
    const { client } = harness();
    await expect(
      client.send({ type: "insert_velocity", value: 0.01 }),
    ).rejects.toThrow("not connected");
  });

  it("reconnects with exponential backoff after a drop", () => {
    const statuses: string[] = [];
    const { client, sockets, timers } = harness({
      onStatus: (status: string) => statuses.push(status),
    });
    client.connect();
    sockets[0].open();
    sockets[0].receive(hello());
    sockets[0].drop();
    expect(client.view.status).toBe("disconnected");
    expect(timers[0].ms).toBe(100);
    timers[0].fn(); // retry #1
    sockets[1].drop();
    expect(timers[1].ms).toBe(200); // doubled
    timers[1].fn(); // retry #2 succeeds
    sockets[2].open();
    sockets[2].receive(hello());
    expect(client.view.status).toBe("connected");
    // the view starts in "connecting", so no initial change event fires
    expect(statuses).toEqual([
      "connected",
      "disconnected",
      "connecting",
      "disconnected",
      "connecting",
      "connected",
    ]);
  });

  it("surfaces a protocol version mismatch and stops retrying", () => {
    const { client, sockets, timers } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].receive(hello(2));
    expect(client.view.status).toBe("version_mismatch");
    expect(sockets[0].closedByClient).toBe(true);
    expect(timers).toHaveLength(0);
  });

  it("close() rejects pending acks and stops the retry loop", async () => {
    const { client, sockets, timers } = harness();
    client.connect();
    sockets[0].open();
    sockets[0].receive(hello());
    const pending = client.send({ type: "release", index: 3 });
    client.close();
    await expect(pending).rejects.toThrow();
    expect(timers).toHaveLength(0);
  });
});
