// Wire protocol: every message is a JSON object with "op" and a
// non-negative integer "seq".  Over WebSocket each message is one text
// frame; the TCP transport adds a length prefix we never see here.

export const PROTOCOL_OPS = [
  "HELLO", "ADVERTISE", "SUBSCRIBE", "UNSUBSCRIBE", "PUBLISH", "CALL",
  "REPLY", "ERROR", "LIST_TOPICS", "LIST_CLIENTS", "TOPICS", "CLIENTS",
  "PING", "PONG",
] as const;

export type Op = (typeof PROTOCOL_OPS)[number];

export interface ProtocolMessage {
  op: Op;
  seq: number;
  [field: string]: unknown;
}

export interface PoseTopic {
  t: number;
  x: number;
  y: number;
  yaw: number;
  z: number;
  pitch: number;
  roll: number;
  v: number;
  omega: number;
}

export interface ScanTopic {
  stamp: number;
  pose: { x: number; y: number; yaw: number };
  angle_min: number;
  angle_max: number;
  ranges: number[];
}

export interface WheelInfo {
  x: number;
  y: number;
  radius: number;
  width: number;
}

export interface VehicleInfo {
  name: string;
  kinematics: string;
  chassis: [number, number][];
  wheels: WheelInfo[];
  pose: { x: number; y: number; yaw: number };
}

export interface BlockInfo {
  name: string;
  static: boolean;
  vertices: [number, number][];
  pose: { x: number; y: number; yaw: number };
}

export interface WorldInfo {
  ok: boolean;
  dt: number;
  gravity: number;
  realtime_factor: number;
  t: number;
  vehicles: VehicleInfo[];
  blocks: BlockInfo[];
  elevation: unknown;
}

const OP_SET: ReadonlySet<string> = new Set(PROTOCOL_OPS);

// Returns null when the value is a well-formed protocol message,
// otherwise a description of the first problem found.  The connection
// runs every inbound and outbound message through this.
export function messageProblem(value: unknown): string | null {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    return "message must be a JSON object";
  }
  const m = value as Record<string, unknown>;
  if (typeof m.op !== "string" || !OP_SET.has(m.op)) {
    return `unknown op ${JSON.stringify(m.op)}`;
  }
  const seq = m.seq;
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 0) {
    return "seq must be a non-negative integer";
  }
  return null;
}

export function encodeMessage(message: ProtocolMessage): string {
  const problem = messageProblem(message);
  if (problem !== null) {
    throw new Error(`refusing to send: ${problem}`);
  }
  return JSON.stringify(message);
}

export function decodeMessage(text: string): ProtocolMessage {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch {
    throw new Error("message is not valid JSON");
  }
  const problem = messageProblem(value);
  if (problem !== null) {
    throw new Error(problem);
  }
  return value as ProtocolMessage;
}
