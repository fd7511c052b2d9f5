import { describe, expect, it } from 'vitest';

import { parseServerMessage } from '../src/protocol.js';

const FRAME = {
  type: 'frame',
  tick: 12,
  rgb: 'aGk=',
  depth_preview: 'aGk=',
  h_now: -2.4,
  h_next: -2.3,
  intervention: 0.0,
  safe: true,
  fallback_used: false,
  pose: { x: 0.5, y: 0.0, z: 0.5, yaw: 0.0 },
  speed: 1.0,
  d_min_rendered: 2.52,
};

describe('parseServerMessage', () => {
  it('accepts a well-formed frame verbatim', () => {
    const msg = parseServerMessage(JSON.stringify(FRAME));
    expect(msg).toEqual(FRAME);
  });

  it('accepts a fallback frame with null prediction', () => {
    const msg = parseServerMessage(
      JSON.stringify({ ...FRAME, h_next: null, fallback_used: true }),
    );
    expect(msg && msg.type === 'frame' && msg.h_next).toBeNull();
  });

  it('accepts error messages', () => {
    expect(parseServerMessage('{"type":"error","message":"boom"}')).toEqual({
      type: 'error',
      message: 'boom',
    });
  });

  it.each([
    ['not json', 'garbage'],
    ['missing type', JSON.stringify({ tick: 1 })],
    ['unknown type', JSON.stringify({ type: 'telemetry' })],
    ['missing field', JSON.stringify({ ...FRAME, h_now: undefined })],
    ['non-numeric field', JSON.stringify({ ...FRAME, speed: 'fast' })],
    ['bad pose', JSON.stringify({ ...FRAME, pose: { x: 1 } })],
  ])('rejects %s', (_label, text) => {
    expect(parseServerMessage(text)).toBeNull();
  });
});
