// Connection and input handling for one teleop session. Everything
// protocol-visible lives here, behind injectable socket and clock seams,
// so the whole client can run against a fake server in tests. The DOM
// layer only implements SessionView.

import {
  Atom,
  ControlOp,
  Pose,
  commandMessage,
  controlMessage,
  keyToAtom,
  parseServerMessage,
} from "./protocol.js";

export type ConnectionStatus = "connecting" | "connected" | "error" | "closed";

/** Sink for everything the session wants shown. */
export interface SessionView {
  status(state: ConnectionStatus, detail: string): void;
  frame(step: number, pngBase64: string): void;
  state(pose: Pose, recording: boolean, collisions: number): void;
  serverError(reason: string): void;
}

// Shape-compatible with a browser WebSocket.
export interface SocketLike {
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
  send(data: string): void;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface Scheduler {
  now(): number;
  /** Run fn after delayMs; the returned function cancels. */
  schedule(fn: () => void, delayMs: number): () => void;
}

export const realScheduler: Scheduler = {
  now: () => Date.now(),
  schedule: (fn, delayMs) => {
    const id = setTimeout(fn, delayMs);
    return () => clearTimeout(id);
  },
};

export interface TeleopOptions {
  /** Websocket endpoint, for example ws://127.0.0.1:8765/ws. */
  url: string;
  session: string;
  view: SessionView;
  socketFactory: SocketFactory;
  scheduler?: Scheduler;
  /** Server tick period; at most one command is sent per tick. */
  tickMs?: number;
  /** Delay before a reconnect attempt after a lost connection. */
  reconnectMs?: number;
}

export class TeleopClient {
  readonly session: string;
  private readonly url: string;
  private readonly view: SessionView;
  private readonly factory: SocketFactory;
  private readonly clock: Scheduler;
  private readonly tickMs: number;
  private readonly reconnectMs: number;

  private socket: SocketLike | null = null;
  private connected = false;
  private closedByUser = false;
  private lastStep = -1;
  private lastSendAt = -Infinity;
  private pendingAtom: Atom | null = null;
  private cancelFlush: (() => void) | null = null;
  private cancelReconnect: (() => void) | null = null;

  constructor(opts: TeleopOptions) {
    this.url = opts.url;
    this.session = opts.session;
    this.view = opts.view;
    this.factory = opts.socketFactory;
    this.clock = opts.scheduler ?? realScheduler;
    this.tickMs = opts.tickMs ?? 100;
    this.reconnectMs = opts.reconnectMs ?? 1000;
  }

  connect(): void {
    if (this.cancelReconnect !== null) {
      this.cancelReconnect();
      this.cancelReconnect = null;
    }
    this.closedByUser = false;
    this.view.status("connecting", this.url);
    const socket = this.factory(
      `${this.url}?session=${encodeURIComponent(this.session)}`,
    );
    this.socket = socket;
    socket.onopen = () => {
      this.connected = true;
      // a restarted server numbers its frames from 1 again
      this.lastStep = -1;
      this.view.status("connected", `session ${this.session}`);
    };
    socket.onmessage = (ev) => this.receive(String(ev.data));
    socket.onerror = () => {
      // the close event that follows carries the retry logic
    };
    socket.onclose = () => {
      const wasConnected = this.connected;
      this.connected = false;
      this.socket = null;
      this.dropPending();
      if (this.closedByUser) {
        this.view.status("closed", "");
        return;
      }
      this.view.status(
        "error",
        wasConnected ? "connection lost, retrying" : "unreachable, retrying",
      );
      this.cancelReconnect = this.clock.schedule(
        () => this.connect(),
        this.reconnectMs,
      );
    };
  }

  close(): void {
    this.closedByUser = true;
    if (this.cancelReconnect !== null) {
      this.cancelReconnect();
      this.cancelReconnect = null;
    }
    this.dropPending();
    if (this.socket !== null) {
      this.socket.close();
    } else {
      this.view.status("closed", "");
    }
  }

  /** Keyboard entry point. Returns whether the key mapped to an atom. */
  pressKey(code: string): boolean {
    const atom = keyToAtom(code);
    if (atom === null) {
      return false;
    }
    this.sendAtom(atom);
    return true;
  }

  startDemo(): void {
    this.sendControl("start_demo");
  }

  stopDemo(): void {
    this.sendControl("stop_demo");
  }

  reset(): void {
    this.sendControl("reset");
  }

  // At most one command per tick period; key repeats inside a period
  // collapse to the latest atom, mirroring the server's own tick loop.
  private sendAtom(atom: Atom): void {
    if (!this.connected || this.socket === null) {
      return;
    }
    const wait = this.lastSendAt + this.tickMs - this.clock.now();
    if (wait <= 0) {
      this.sendNow(JSON.stringify(commandMessage(this.session, atom)));
      return;
    }
    this.pendingAtom = atom;
    if (this.cancelFlush === null) {
      this.cancelFlush = this.clock.schedule(() => this.flushPending(), wait);
    }
  }

  private flushPending(): void {
    this.cancelFlush = null;
    const atom = this.pendingAtom;
    this.pendingAtom = null;
    if (atom !== null && this.connected && this.socket !== null) {
      this.sendNow(JSON.stringify(commandMessage(this.session, atom)));
    }
  }

  private sendControl(op: ControlOp): void {
    if (!this.connected || this.socket === null) {
      return;
    }
    this.socket.send(JSON.stringify(controlMessage(op)));
  }

  private sendNow(text: string): void {
    this.lastSendAt = this.clock.now();
    this.socket!.send(text);
  }

  private receive(text: string): void {
    const msg = parseServerMessage(text);
    if (msg === null) {
      return;
    }
    switch (msg.type) {
      case "frame":
        // stale frames are dropped so displayed steps never go backwards
        if (msg.step < this.lastStep) {
          return;
        }
        this.lastStep = msg.step;
        this.view.frame(msg.step, msg.png_base64);
        return;
      case "state":
        this.view.state(msg.pose, msg.recording, msg.collisions);
        return;
      case "error":
        this.view.serverError(msg.reason);
        return;
    }
  }

  private dropPending(): void {
    this.pendingAtom = null;
    if (this.cancelFlush !== null) {
      this.cancelFlush();
      this.cancelFlush = null;
    }
  }
}
