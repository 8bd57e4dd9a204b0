// Deterministic stand-ins for the browser seams: a socket the tests
// drive by hand, a clock the tests advance by hand, and a view that
// records every call.

import { Pose } from "../src/protocol.js";
import {
  ConnectionStatus,
  Scheduler,
  SessionView,
  SocketLike,
  TeleopClient,
  TeleopOptions,
} from "../src/session.js";

export class FakeSocket implements SocketLike {
  onopen: ((ev: any) => void) | null = null;
  onmessage: ((ev: any) => void) | null = null;
  onclose: ((ev: any) => void) | null = null;
  onerror: ((ev: any) => void) | null = null;
  sent: string[] = [];
  closeCalls = 0;

  constructor(readonly url: string) {}

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.closeCalls += 1;
    this.onclose?.({});
  }

  // test-side controls
  open(): void {
    this.onopen?.({});
  }

  deliver(msg: unknown): void {
    const data = typeof msg === "string" ? msg : JSON.stringify(msg);
    this.onmessage?.({ data });
  }

  drop(): void {
    this.onerror?.({});
    this.onclose?.({});
  }

  sentJson(): unknown[] {
    return this.sent.map((text) => JSON.parse(text));
  }
}

interface Task {
  at: number;
  seq: number;
  fn: () => void;
}

export class ManualScheduler implements Scheduler {
  private t = 0;
  private seq = 0;
  private tasks: Task[] = [];

  now(): number {
    return this.t;
  }

  schedule(fn: () => void, delayMs: number): () => void {
    const task = { at: this.t + delayMs, seq: this.seq++, fn };
    this.tasks.push(task);
    return () => {
      this.tasks = this.tasks.filter((other) => other !== task);
    };
  }

  advance(ms: number): void {
    const target = this.t + ms;
    for (;;) {
      const due = this.tasks
        .filter((task) => task.at <= target)
        .sort((a, b) => a.at - b.at || a.seq - b.seq)[0];
      if (due === undefined) {
        break;
      }
      this.tasks = this.tasks.filter((task) => task !== due);
      this.t = Math.max(this.t, due.at);
      due.fn();
    }
    this.t = target;
  }

  pendingCount(): number {
    return this.tasks.length;
  }
}

export class RecordingView implements SessionView {
  statuses: { state: ConnectionStatus; detail: string }[] = [];
  frames: { step: number; png: string }[] = [];
  states: { pose: Pose; recording: boolean; collisions: number }[] = [];
  errors: string[] = [];

  status(state: ConnectionStatus, detail: string): void {
    this.statuses.push({ state, detail });
  }

  frame(step: number, pngBase64: string): void {
    this.frames.push({ step, png: pngBase64 });
  }

  state(pose: Pose, recording: boolean, collisions: number): void {
    this.states.push({ pose, recording, collisions });
  }

  serverError(reason: string): void {
    this.errors.push(reason);
  }

  lastStatus(): ConnectionStatus | undefined {
    return this.statuses[this.statuses.length - 1]?.state;
  }
}

export interface Harness {
  client: TeleopClient;
  sockets: FakeSocket[];
  scheduler: ManualScheduler;
  view: RecordingView;
}

export function makeClient(overrides: Partial<TeleopOptions> = {}): Harness {
  const sockets: FakeSocket[] = [];
  const scheduler = new ManualScheduler();
  const view = new RecordingView();
  const client = new TeleopClient({
    url: "ws://testhost/ws",
    session: "ui",
    view,
    socketFactory: (url) => {
      const socket = new FakeSocket(url);
      sockets.push(socket);
      return socket;
    },
    scheduler,
    tickMs: 100,
    reconnectMs: 1000,
    ...overrides,
  });
  return { client, sockets, scheduler, view };
}
