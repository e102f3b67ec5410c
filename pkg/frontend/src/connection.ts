/** Websocket session: hello handshake, latest-frame delivery into the
 * view state, command acks, and auto-reconnect with exponential backoff.
 *
 * The socket callbacks only stash data and resolve promises; rendering
 * happens elsewhere on the animation loop, so a network stall never
 * freezes the UI event loop.
 */

import {
  AckMessage,
  Command,
  ErrorMessage,
  HelloMessage,
  PROTOCOL_VERSION,
  envelope,
  parseServerMessage,
} from "./protocol.js";
import { ViewState } from "./viewstate.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  /** initial reconnect delay (ms); doubles up to maxBackoffMs */
  backoffMs?: number;
  maxBackoffMs?: number;
  socketFactory?: SocketFactory;
  setTimeoutFn?: (fn: () => void, ms: number) => unknown;
  onHello?: (hello: HelloMessage) => void;
  onFrame?: () => void;
  onError?: (error: ErrorMessage) => void;
  onStatus?: (status: ViewState["status"]) => void;
}

interface Pending {
  resolve: (ack: AckMessage) => void;
  reject: (err: Error) => void;
}

export class SteerClient {
  readonly view = new ViewState();
  private socket: SocketLike | null = null;
  private nextId = 0;
  private pending = new Map<number, Pending>();
  private backoff: number;
  private closed = false;
  commandsSent = 0;

  constructor(
    private url: string,
    private options: ClientOptions = {},
  ) {
    this.backoff = options.backoffMs ?? 500;
  }

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    const factory =
      this.options.socketFactory ??
      ((u: string) => new WebSocket(u) as unknown as SocketLike);
    this.setStatus("connecting");
    const socket = factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoff = this.options.backoffMs ?? 500;
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    socket.onerror = () => undefined; // onclose follows and handles retry
    socket.onclose = () => {
      this.socket = null;
      this.failPending(new Error("connection closed"));
      if (this.closed || this.view.status === "version_mismatch") return;
      this.setStatus("disconnected");
      this.view.reset();
      const wait = this.backoff;
      this.backoff = Math.min(
        this.backoff * 2,
        this.options.maxBackoffMs ?? 10000,
      );
      const later = this.options.setTimeoutFn ?? setTimeout;
      later(() => {
        if (!this.closed) this.open();
      }, wait);
    };
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
    this.socket = null;
    this.failPending(new Error("client closed"));
  }

  private handleMessage(raw: string): void {
    const msg = parseServerMessage(raw);
    if (!msg) return;
    switch (msg.type) {
      case "hello":
        if (msg.protocol_version !== PROTOCOL_VERSION) {
          this.setStatus("version_mismatch");
          this.socket?.close();
          return;
        }
        this.view.scene = msg.scene;
        this.setStatus("connected");
        this.options.onHello?.(msg);
        break;
      case "state_frame":
        if (this.view.applyFrame(msg)) this.options.onFrame?.();
        break;
      case "ack": {
        const waiter = this.pending.get(msg.id);
        if (waiter) {
          this.pending.delete(msg.id);
          waiter.resolve(msg);
        }
        break;
      }
      case "error":
        this.options.onError?.(msg);
        break;
    }
  }

  /** Send one command; resolves with its ack. */
  send(command: Command): Promise<AckMessage> {
    if (!this.socket || this.view.status !== "connected")
      return Promise.reject(new Error("not connected"));
    const id = this.nextId++;
    const message = envelope(id, command);
    this.socket.send(JSON.stringify(message));
    this.commandsSent += 1;
    return new Promise((resolve, reject) => {
      this.pending.set(id, { resolve, reject });
    });
  }

  private failPending(err: Error): void {
    for (const waiter of this.pending.values()) waiter.reject(err);
    this.pending.clear();
  }

  private setStatus(status: ViewState["status"]): void {
    if (this.view.status !== status) {
      this.view.status = status;
      this.options.onStatus?.(status);
    }
  }
}
