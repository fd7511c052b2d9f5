// Console wiring: websocket client, frame rendering, steering capture.
// Commands go out on a fixed cadence matching the server tick rate; the
// server's zero-order hold makes anything faster pointless.

import { barGeometry, barStyle } from './bar.js';
import { autoRange, polyline, ruleY } from './chart.js';
import { InputState } from './input.js';
import { FrameMessage, parseServerMessage } from './protocol.js';
import { ConsoleState } from './state.js';

const COMMAND_CADENCE_MS = 100;
const BAR_RANGE = 2.5; // |h| meters mapped to the half gauge

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function drawRaster(canvas: HTMLCanvasElement, b64: string): void {
  const img = new Image();
  img.onload = () => {
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
  };
  img.src = `data:image/png;base64,${b64}`;
}

function drawBar(canvas: HTMLCanvasElement, frame: FrameMessage): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = '#1c1f26';
  ctx.fillRect(0, 0, width, height);
  const style = barStyle(frame.intervention, frame.fallback_used);
  const geom = barGeometry(frame.h_now, BAR_RANGE, height);
  ctx.fillStyle = style.color;
  ctx.fillRect(4, geom.y, width - 8, Math.max(geom.height, 2));
  ctx.strokeStyle = '#e8e8e8';
  ctx.beginPath();
  ctx.moveTo(0, geom.centerY);
  ctx.lineTo(width, geom.centerY);
  ctx.stroke();
  el<HTMLSpanElement>('fallback-badge').style.visibility = style.warning
    ? 'visible'
    : 'hidden';
}

const CHART_SERIES: Array<{
  key: 'h' | 'intervention' | 'dMin';
  color: string;
  label: string;
}> = [
  { key: 'h', color: '#4da3ff', label: 'h' },
  { key: 'intervention', color: '#ff6a5e', label: 'Δu' },
  { key: 'dMin', color: '#7ddc82', label: 'd_min' },
];

function drawChart(canvas: HTMLCanvasElement, state: ConsoleState): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  const { width, height } = canvas;
  ctx.clearRect(0, 0, width, height);
  ctx.fillStyle = '#14161b';
  ctx.fillRect(0, 0, width, height);
  const points = state.history.toArray();
  if (points.length === 0) return;
  const all = points.flatMap((p) => [p.h, p.intervention, p.dMin]);
  const range = autoRange(all);
  const zero = ruleY(0, height, range);
  ctx.strokeStyle = '#3a3f4a';
  ctx.beginPath();
  ctx.moveTo(0, zero);
  ctx.lineTo(width, zero);
  ctx.stroke();
  for (const series of CHART_SERIES) {
    const line = polyline(points.map((p) => p[series.key]), width, height,
      range);
    ctx.strokeStyle = series.color;
    ctx.beginPath();
    line.forEach(([x, y], i) => (i === 0 ? ctx.moveTo(x, y) : ctx.lineTo(x, y)));
    ctx.stroke();
  }
}

function fmt(v: number | null, digits = 3): string {
  return v === null ? '—' : v.toFixed(digits);
}

function renderFrame(state: ConsoleState, frame: FrameMessage): void {
  state.applyFrame(frame);
  drawRaster(el<HTMLCanvasElement>('rgb-view'), frame.rgb);
  drawRaster(el<HTMLCanvasElement>('depth-view'), frame.depth_preview);
  drawBar(el<HTMLCanvasElement>('cbf-bar'), frame);
  drawChart(el<HTMLCanvasElement>('strip-chart'), state);
  el('telemetry').textContent = [
    `tick ${frame.tick}`,
    `h ${fmt(frame.h_now)}`,
    `h_next ${fmt(frame.h_next)}`,
    `Δu ${fmt(frame.intervention)}`,
    `d_min ${fmt(frame.d_min_rendered, 2)} m`,
    `v ${fmt(frame.speed, 2)} m/s`,
    `pose (${frame.pose.x.toFixed(2)}, ${frame.pose.y.toFixed(2)}, ` +
      `yaw ${frame.pose.yaw.toFixed(2)})`,
  ].join('   ');
}

export function startConsole(): void {
  const state = new ConsoleState();
  const input = new InputState();
  let ws: WebSocket | null = null;
  let sendTimer: number | null = null;

  const status = el<HTMLSpanElement>('status');

  function setStatus(text: string): void {
    status.textContent = text;
  }

  function disconnect(): void {
    if (sendTimer !== null) window.clearInterval(sendTimer);
    sendTimer = null;
    ws?.close();
    ws = null;
    state.connection = 'disconnected';
    setStatus('disconnected');
  }

  function connect(): void {
    disconnect();
    const url = el<HTMLInputElement>('server-url').value;
    state.connection = 'connecting';
    setStatus(`connecting to ${url}…`);
    ws = new WebSocket(url);
    ws.onopen = () => {
      state.connection = 'connected';
      setStatus('connected');
      sendTimer = window.setInterval(() => {
        if (ws?.readyState === WebSocket.OPEN) {
          const pads = navigator.getGamepads ? navigator.getGamepads() : [];
          ws.send(JSON.stringify(
            input.withGamepad(pads[0] ?? null, Date.now())));
        }
      }, COMMAND_CADENCE_MS);
    };
    ws.onmessage = (event: MessageEvent) => {
      const msg = parseServerMessage(String(event.data));
      if (msg === null) {
        state.malformedCount += 1;
        return;
      }
      if (msg.type === 'error') {
        state.errorText = msg.message;
        setStatus(`server error: ${msg.message}`);
        return;
      }
      renderFrame(state, msg);
    };
    ws.onclose = () => disconnect();
    ws.onerror = () => setStatus('connection error');
  }

  el<HTMLButtonElement>('connect').onclick = connect;
  for (const kind of ['pause', 'resume', 'reset'] as const) {
    el<HTMLButtonElement>(kind).onclick = () => {
      if (kind === 'reset') input.releaseAll();
      ws?.send(JSON.stringify({ type: kind }));
    };
  }
  window.addEventListener('keydown', (e) => {
    if ((e.target as HTMLElement)?.tagName !== 'INPUT') input.keyDown(e.code);
  });
  window.addEventListener('keyup', (e) => input.keyUp(e.code));
  window.addEventListener('blur', () => input.releaseAll());
}

startConsole();
