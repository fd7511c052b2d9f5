// Console-side state: the latest frame plus a bounded telemetry history
// feeding the strip chart. Values are stored bit-for-bit as received;
// the console never smooths, predicts, or filters anything.

import { FrameMessage } from './protocol.js';

export interface TelemetryPoint {
  tick: number;
  h: number;
  intervention: number;
  dMin: number;
}

/** Fixed-capacity ring; push evicts the oldest entry. */
export class HistoryRing {
  private buf: TelemetryPoint[] = [];
  private start = 0;

  constructor(readonly capacity = 600) {
    if (capacity < 1) throw new Error('capacity must be >= 1');
  }

  get length(): number {
    return this.buf.length;
  }

  push(p: TelemetryPoint): void {
    if (this.buf.length < this.capacity) {
      this.buf.push(p);
    } else {
      this.buf[this.start] = p;
      this.start = (this.start + 1) % this.capacity;
    }
  }

  toArray(): TelemetryPoint[] {
    return this.buf
      .slice(this.start)
      .concat(this.buf.slice(0, this.start));
  }
}

export type ConnectionStatus = 'disconnected' | 'connecting' | 'connected';

export class ConsoleState {
  connection: ConnectionStatus = 'disconnected';
  lastFrame: FrameMessage | null = null;
  malformedCount = 0;
  errorText = '';
  readonly history: HistoryRing;

  constructor(historyCapacity = 600) {
    this.history = new HistoryRing(historyCapacity);
  }

  applyFrame(frame: FrameMessage): void {
    this.lastFrame = frame;
    this.history.push({
      tick: frame.tick,
      h: frame.h_now,
      intervention: frame.intervention,
      dMin: frame.d_min_rendered,
    });
  }
}
