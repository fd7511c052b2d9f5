// Wire protocol of the teleop service: JSON text messages over a websocket,
// discriminated by a `type` field. Field names mirror the server exactly.

export interface PoseFields {
  x: number;
  y: number;
  z: number;
  yaw: number;
}

export interface FrameMessage {
  type: 'frame';
  tick: number;
  rgb: string; // base64 PNG
  depth_preview: string; // base64 PNG, 8-bit normalized
  h_now: number;
  h_next: number | null; // null on fallback ticks (no prediction rendered)
  intervention: number;
  safe: boolean;
  fallback_used: boolean;
  pose: PoseFields;
  speed: number;
  d_min_rendered: number;
}

export interface ErrorMessage {
  type: 'error';
  message: string;
}

export type ServerMessage = FrameMessage | ErrorMessage;

export interface CommandMessage {
  type: 'command';
  axes: [number, number];
  yaw_axis: number;
  timestamp_ms: number;
}

export type ControlMessage =
  | CommandMessage
  | { type: 'pause' }
  | { type: 'resume' }
  | { type: 'reset' };

function isFiniteNumber(v: unknown): v is number {
  return typeof v === 'number' && Number.isFinite(v);
}

function isPose(v: unknown): v is PoseFields {
  if (typeof v !== 'object' || v === null) return false;
  const p = v as Record<string, unknown>;
  return (
    isFiniteNumber(p.x) &&
    isFiniteNumber(p.y) &&
    isFiniteNumber(p.z) &&
    isFiniteNumber(p.yaw)
  );
}

/** Parse one server message; returns null for anything malformed. */
export function parseServerMessage(text: string): ServerMessage | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof data !== 'object' || data === null) return null;
  const m = data as Record<string, unknown>;
  if (m.type === 'error') {
    return typeof m.message === 'string'
      ? { type: 'error', message: m.message }
      : null;
  }
  if (m.type !== 'frame') return null;
  const hNextOk = m.h_next === null || isFiniteNumber(m.h_next);
  if (
    !isFiniteNumber(m.tick) ||
    typeof m.rgb !== 'string' ||
    typeof m.depth_preview !== 'string' ||
    !isFiniteNumber(m.h_now) ||
    !hNextOk ||
    !isFiniteNumber(m.intervention) ||
    typeof m.safe !== 'boolean' ||
    typeof m.fallback_used !== 'boolean' ||
    !isPose(m.pose) ||
    !isFiniteNumber(m.speed) ||
    !isFiniteNumber(m.d_min_rendered)
  ) {
    return null;
  }
  return {
    type: 'frame',
    tick: m.tick,
    rgb: m.rgb,
    depth_preview: m.depth_preview,
    h_now: m.h_now,
    h_next: m.h_next as number | null,
    intervention: m.intervention,
    safe: m.safe,
    fallback_used: m.fallback_used,
    pose: m.pose,
    speed: m.speed,
    d_min_rendered: m.d_min_rendered,
  };
}
