// DOM rendering for a teleop session. The text helpers are pure and
// exported on their own so the panel wording stays testable without a
// browser; DomView wires them to elements from index.html.

import { Pose } from "./protocol.js";
import { ConnectionStatus, SessionView } from "./session.js";

export interface RunOutcome {
  success: boolean;
  steps: number;
}

export function statusText(state: ConnectionStatus, detail: string): string {
  return detail === "" ? state : `${state} (${detail})`;
}

export function poseText(pose: Pose): string {
  return `(${pose[0]}, ${pose[1]}) facing ${pose[2]}`;
}

export function recordingText(recording: boolean): string {
  return recording ? "recording" : "idle";
}

export function bannerText(outcome: RunOutcome): string {
  return outcome.success
    ? `run succeeded in ${outcome.steps} steps`
    : `run failed after ${outcome.steps} steps`;
}

export class DomView implements SessionView {
  private readonly statusEl: HTMLElement;
  private readonly frameEl: HTMLImageElement;
  private readonly stepEl: HTMLElement;
  private readonly poseEl: HTMLElement;
  private readonly recordingEl: HTMLElement;
  private readonly collisionsEl: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly bannerEl: HTMLElement;
  private readonly trailEl: HTMLCanvasElement;
  private trail: Pose[] = [];

  constructor(doc: Document) {
    const pick = (id: string): HTMLElement => {
      const el = doc.getElementById(id);
      if (el === null) {
        throw new Error(`missing element #${id}`);
      }
      return el;
    };
    this.statusEl = pick("status");
    this.frameEl = pick("frame") as HTMLImageElement;
    this.stepEl = pick("step");
    this.poseEl = pick("pose");
    this.recordingEl = pick("recording");
    this.collisionsEl = pick("collisions");
    this.errorEl = pick("error");
    this.bannerEl = pick("banner");
    this.trailEl = pick("trail") as HTMLCanvasElement;
  }

  status(state: ConnectionStatus, detail: string): void {
    this.statusEl.textContent = statusText(state, detail);
    this.statusEl.dataset.state = state;
  }

  frame(step: number, pngBase64: string): void {
    this.frameEl.src = `data:image/png;base64,${pngBase64}`;
    this.stepEl.textContent = `step ${step}`;
  }

  state(pose: Pose, recording: boolean, collisions: number): void {
    this.poseEl.textContent = poseText(pose);
    this.recordingEl.textContent = recordingText(recording);
    this.recordingEl.dataset.recording = String(recording);
    this.collisionsEl.textContent = String(collisions);
    this.trail.push(pose);
    this.drawTrail();
  }

  serverError(reason: string): void {
    this.errorEl.textContent = reason; // surfaced verbatim
  }

  showOutcome(outcome: RunOutcome): void {
    this.bannerEl.textContent = bannerText(outcome);
    this.bannerEl.dataset.success = String(outcome.success);
    this.bannerEl.hidden = false;
  }

  clearOutcome(): void {
    this.bannerEl.hidden = true;
    this.bannerEl.textContent = "";
  }

  resetTrail(): void {
    this.trail = [];
    this.drawTrail();
  }

  // Overlay of every pose reported so far, scaled to the largest grid
  // coordinate seen, with a marker on the current cell.
  private drawTrail(): void {
    const ctx = this.trailEl.getContext("2d");
    if (ctx === null) {
      return;
    }
    const side = this.trailEl.width;
    ctx.clearRect(0, 0, side, this.trailEl.height);
    if (this.trail.length === 0) {
      return;
    }
    let extent = 4;
    for (const [x, y] of this.trail) {
      extent = Math.max(extent, x, y);
    }
    const cell = side / (extent + 2);
    const cx = (p: Pose) => (p[0] + 1) * cell;
    const cy = (p: Pose) => (p[1] + 1) * cell;
    ctx.strokeStyle = "#7aa2f7";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(cx(this.trail[0]), cy(this.trail[0]));
    for (const pose of this.trail.slice(1)) {
      ctx.lineTo(cx(pose), cy(pose));
    }
    ctx.stroke();
    const last = this.trail[this.trail.length - 1];
    ctx.fillStyle = "#f7768e";
    ctx.beginPath();
    ctx.arc(cx(last), cy(last), Math.max(3, cell / 4), 0, 2 * Math.PI);
    ctx.fill();
  }
}
