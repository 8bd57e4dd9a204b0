// Wire protocol of the teleoperation service: JSON text messages over a
// single websocket. The field names below are normative on both sides;
// everything the client sends or accepts goes through this module.

export type Atom = "forward" | "backward" | "turn_left" | "turn_right";
export type ControlOp = "start_demo" | "stop_demo" | "reset";

export interface CommandMessage {
  type: "command";
  session: string;
  atom: Atom;
}

export interface ControlMessage {
  type: "control";
  op: ControlOp;
}

export type ClientMessage = CommandMessage | ControlMessage;

/** Grid position plus heading letter (N, E, S or W). */
export type Pose = [number, number, string];

export interface FrameMessage {
  type: "frame";
  session: string;
  step: number;
  png_base64: string;
}

export interface StateMessage {
  type: "state";
  pose: Pose;
  recording: boolean;
  collisions: number;
}

export interface ErrorMessage {
  type: "error";
  reason: string;
}

export type ServerMessage = FrameMessage | StateMessage | ErrorMessage;

const KEY_ATOMS: Record<string, Atom> = {
  ArrowUp: "forward",
  ArrowDown: "backward",
  ArrowLeft: "turn_left",
  ArrowRight: "turn_right",
};

/** Map a KeyboardEvent.code to an atom movement; unmapped keys give null. */
export function keyToAtom(code: string): Atom | null {
  return KEY_ATOMS[code] ?? null;
}

export function commandMessage(session: string, atom: Atom): CommandMessage {
  return { type: "command", session, atom };
}

export function controlMessage(op: ControlOp): ControlMessage {
  return { type: "control", op };
}

function isPose(value: unknown): value is Pose {
  return (
    Array.isArray(value) &&
    value.length === 3 &&
    typeof value[0] === "number" &&
    typeof value[1] === "number" &&
    typeof value[2] === "string"
  );
}

/**
 * Parse one server message. Anything off contract (bad JSON, unknown
 * type, missing or mistyped fields) gives null; the caller drops it.
 * The result is rebuilt field by field so no extra properties leak in.
 */
export function parseServerMessage(text: string): ServerMessage | null {
  let raw: unknown;
  try {
    raw = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    return null;
  }
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "frame":
      if (
        typeof msg.session === "string" &&
        typeof msg.step === "number" &&
        Number.isFinite(msg.step) &&
        typeof msg.png_base64 === "string"
      ) {
        return {
          type: "frame",
          session: msg.session,
          step: msg.step,
          png_base64: msg.png_base64,
        };
      }
      return null;
    case "state":
      if (
        isPose(msg.pose) &&
        typeof msg.recording === "boolean" &&
        typeof msg.collisions === "number"
      ) {
        return {
          type: "state",
          pose: [msg.pose[0], msg.pose[1], msg.pose[2]],
          recording: msg.recording,
          collisions: msg.collisions,
        };
      }
      return null;
    case "error":
      if (typeof msg.reason === "string") {
        return { type: "error", reason: msg.reason };
      }
      return null;
    default:
      return null;
  }
}
