// Keyboard (and optional gamepad) steering. Held keys map to body-frame
// axes in [-1, 1]: +x forward, +y left, yaw axis positive
// counter-clockwise. Opposing keys cancel; components clamp per axis, the
// server does the actuator scaling. The console never modifies or filters
// commands: identical key sequences produce identical payloads.

import { CommandMessage } from './protocol.js';

export const KEY_AXES: Record<string, readonly [number, number]> = {
  KeyW: [1, 0],
  ArrowUp: [1, 0],
  KeyS: [-1, 0],
  ArrowDown: [-1, 0],
  KeyA: [0, 1],
  ArrowLeft: [0, 1],
  KeyD: [0, -1],
  ArrowRight: [0, -1],
};

export const KEY_YAW: Record<string, number> = {
  KeyQ: 1,
  KeyE: -1,
};

const clamp = (v: number) => Math.max(-1, Math.min(1, v));

export class InputState {
  private held = new Set<string>();

  keyDown(code: string): void {
    if (code in KEY_AXES || code in KEY_YAW) this.held.add(code);
  }

  keyUp(code: string): void {
    this.held.delete(code);
  }

  releaseAll(): void {
    this.held.clear();
  }

  axes(): [number, number] {
    let ax = 0;
    let ay = 0;
    for (const code of this.held) {
      const a = KEY_AXES[code];
      if (a) {
        ax += a[0];
        ay += a[1];
      }
    }
    return [clamp(ax), clamp(ay)];
  }

  yawAxis(): number {
    let yaw = 0;
    for (const code of this.held) yaw += KEY_YAW[code] ?? 0;
    return clamp(yaw);
  }

  /** Merge a standard gamepad's left stick / triggers into the command. */
  withGamepad(pad: Gamepad | null, timestampMs: number): CommandMessage {
    const base = this.command(timestampMs);
    if (!pad) return base;
    const [kx, ky] = base.axes;
    const gx = -(pad.axes[1] ?? 0); // stick up = forward
    const gy = -(pad.axes[0] ?? 0); // stick left = +y
    const gyaw = -(pad.axes[2] ?? 0);
    return {
      type: 'command',
      axes: [clamp(kx + gx), clamp(ky + gy)],
      yaw_axis: clamp(base.yaw_axis + gyaw),
      timestamp_ms: timestampMs,
    };
  }

  command(timestampMs: number): CommandMessage {
    return {
      type: 'command',
      axes: this.axes(),
      yaw_axis: this.yawAxis(),
      timestamp_ms: timestampMs,
    };
  }
}
