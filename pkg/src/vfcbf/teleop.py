"""Live teleoperation session: the observe/fuse/filter/step loop running at
the control rate, streaming frames and filter telemetry over a websocket
and taking human steering commands as the nominal policy.

One background thread owns the mutable session (single writer). Inbound
commands and outbound frames cross the network boundary through
newest-wins slots, so a slow client can never stall the tick loop.
"""
from __future__ import annotations

import base64
import collections
import io
import json
import math
import threading
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from PIL import Image

from .experiments import ScenarioConfig, ScenarioRun
from .geometry import RgbdImage
from .world import ControlInput

PROTOCOL_TYPES = ("command", "frame", "pause", "resume", "reset", "error")


@dataclass(frozen=True)
class CommandMessage:
    """Human steering input: planar axes and yaw axis in [-1, 1] (scaled to
    the actuator bounds server-side), stamped by the client clock."""

    axes: tuple[float, float]
    yaw_axis: float
    timestamp_ms: float

    @classmethod
    def from_payload(cls, data: dict) -> "CommandMessage":
        try:
            ax = [float(v) for v in data["axes"]]
            if len(ax) != 2 or not all(math.isfinite(v) for v in ax):
                raise ValueError
            yaw = float(data.get("yaw_axis", 0.0))
            ts = float(data.get("timestamp_ms", 0.0))
            if not (math.isfinite(yaw) and math.isfinite(ts)):
                raise ValueError
        except (KeyError, TypeError, ValueError):
            raise ValueError("malformed command message")
        clip = lambda v: min(max(v, -1.0), 1.0)
        return cls(axes=(clip(ax[0]), clip(ax[1])), yaw_axis=clip(yaw),
                   timestamp_ms=ts)


def _png_b64(array: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(array).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def encode_frame_rasters(image: RgbdImage, max_range: float) -> tuple[str, str]:
    """Lossless rgb raster plus an 8-bit normalized depth preview."""
    rgb8 = np.clip(image.rgb * 255.0, 0, 255).astype(np.uint8)
    depth8 = np.clip(image.depth / max_range * 255.0, 0, 255).astype(np.uint8)
    return _png_b64(rgb8), _png_b64(depth8)


@dataclass(frozen=True)
class Ack:
    accepted: bool
    reason: str = ""


class TeleopSession:
    """Interactive scenario session with zero-order hold on commands.

    ``tick()`` runs one full observe -> fuse -> filter -> step cycle and
    returns the frame payload; the loop thread (see ``SessionLoop``) calls
    it at the configured rate. Telemetry in each frame is exactly the
    filter decision of that tick.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self._lock = threading.Lock()
        self._held: CommandMessage | None = None
        self.paused = False
        self.connected_clients = 0
        self._sinks: list[Callable[[dict], None]] = []
        self._run = ScenarioRun(cfg)
        self._run.pre_explore()

    @property
    def tick_index(self) -> int:
        return self._run.tick_index

    @property
    def run(self) -> ScenarioRun:
        return self._run

    def add_sink(self, sink: Callable[[dict], None]) -> None:
        self._sinks.append(sink)

    def apply_command(self, msg: CommandMessage) -> Ack:
        """Install a command as the nominal input for subsequent ticks.
        Stale commands (older client timestamp than the held one) are
        discarded."""
        with self._lock:
            if self._held is not None and msg.timestamp_ms < self._held.timestamp_ms:
                return Ack(accepted=False, reason="stale timestamp")
            self._held = msg
        return Ack(accepted=True)

    def _nominal(self) -> ControlInput:
        with self._lock:
            held = self._held
        if held is None:
            return ControlInput()
        u_max = self.cfg.limits.u_max
        return ControlInput(
            u=np.array([held.axes[0] * u_max, held.axes[1] * u_max]),
            yaw_rate=held.yaw_axis * self.cfg.limits.yaw_rate_max)

    def pause(self) -> None:
        self.paused = True

    def resume(self) -> None:
        if not self._run.collided:
            self.paused = False

    def reset(self) -> None:
        self._run = ScenarioRun(self.cfg)
        self._run.pre_explore()
        with self._lock:
            self._held = None
        self.paused = False

    def tick(self) -> dict:
        """One control cycle; broadcasts and returns the frame payload."""
        tick_no = self._run.tick_index
        try:
            record = self._run.step(self._nominal())
            observation = self._run.last_observation
            decision = self._run.decisions[-1]
        except Exception as e:  # internal errors pause the session
            self.paused = True
            frame = {"type": "error", "message": f"tick failed: {e}"}
            self._broadcast(frame)
            return frame
        rgb_b64, depth_b64 = encode_frame_rasters(
            observation, self.cfg.intrinsics.max_range)
        pose = self._run.state.pose
        # NaN (fallback ticks carry no prediction) is not valid JSON
        h_next = record.h_next if math.isfinite(record.h_next) else None
        frame = {
            "type": "frame",
            "tick": tick_no,
            "rgb": rgb_b64,
            "depth_preview": depth_b64,
            "h_now": record.h_now,
            "h_next": h_next,
            "intervention": record.delta_u,
            "safe": decision.safe,
            "fallback_used": decision.fallback_used,
            "pose": {"x": pose.position[0], "y": pose.position[1],
                     "z": pose.position[2], "yaw": pose.yaw},
            "speed": record.speed,
            "d_min_rendered": record.d_min_rendered,
        }
        if self._run.collided:
            self.paused = True
        self._broadcast(frame)
        return frame

    def _broadcast(self, frame: dict) -> None:
        for sink in list(self._sinks):
            try:
                sink(frame)
            except Exception:
                pass  # a failing sink never stalls the loop


class SessionLoop(threading.Thread):
    """Fixed-rate driver for a session. If a tick overruns its deadline the
    schedule slips (the simulation clock slows) rather than skipping the
    filter."""

    def __init__(self, session: TeleopSession):
        super().__init__(daemon=True)
        self.session = session
        self._stop = threading.Event()

    def stop(self) -> None:
        self._stop.set()

    def run(self) -> None:
        dt = self.session.cfg.dt
        deadline = time.monotonic() + dt
        while not self._stop.is_set():
            if not self.session.paused:
                self.session.tick()
            now = time.monotonic()
            if deadline > now:
                time.sleep(deadline - now)
                deadline += dt
            else:
                deadline = now + dt  # overran: slow down, never skip


def start_session(cfg: ScenarioConfig) -> tuple[TeleopSession, SessionLoop]:
    """Spawn a session with its tick loop running."""
    session = TeleopSession(cfg)
    loop = SessionLoop(session)
    loop.start()
    return session, loop


class _ClientSlot:
    """Newest-wins frame slot for one client: a slow reader only ever
    drops stale frames."""

    def __init__(self):
        self._frames = collections.deque(maxlen=1)
        self._event = threading.Event()

    def push(self, frame: dict) -> None:
        self._frames.append(frame)
        self._event.set()

    def pop(self, timeout: float) -> dict | None:
        if not self._event.wait(timeout):
            return None
        try:
            frame = self._frames.popleft()
        except IndexError:
            frame = None
        if not self._frames:
            self._event.clear()
        return frame


def create_app(session: TeleopSession) -> FastAPI:
    """FastAPI app exposing the bidirectional message channel at /ws."""
    from starlette.concurrency import run_in_threadpool

    app = FastAPI(title="vfcbf teleop")
    app.state.session = session

    @app.get("/healthz")
    def healthz():
        return {"tick": session.tick_index, "paused": session.paused,
                "clients": session.connected_clients}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        slot = _ClientSlot()
        session.add_sink(slot.push)
        session.connected_clients += 1

        async def pump_frames():
            while True:
                frame = await run_in_threadpool(slot.pop, 0.25)
                if frame is not None:
                    await ws.send_text(json.dumps(frame))

        import asyncio
        pump = asyncio.ensure_future(pump_frames())
        try:
            while True:
                text = await ws.receive_text()
                try:
                    data = json.loads(text)
                    if not isinstance(data, dict) or "type" not in data:
                        raise ValueError("missing type")
                except ValueError:
                    # protocol violation: drop this connection only
                    await ws.close(code=1008, reason="malformed message")
                    break
                mtype = data["type"]
                if mtype == "command":
                    try:
                        session.apply_command(CommandMessage.from_payload(data))
                    except ValueError as e:
                        await ws.send_text(json.dumps(
                            {"type": "error", "message": str(e)}))
                elif mtype == "pause":
                    session.pause()
                elif mtype == "resume":
                    session.resume()
                elif mtype == "reset":
                    session.reset()
                else:
                    await ws.send_text(json.dumps(
                        {"type": "error",
                         "message": f"unknown message type {mtype!r}"}))
        except WebSocketDisconnect:
            pass
        finally:
            pump.cancel()
            session.connected_clients -= 1
            if slot.push in session._sinks:
                session._sinks.remove(slot.push)

    return app


def serve(cfg: ScenarioConfig, port: int = 8765, host: str = "127.0.0.1") -> None:
    """Run the teleop service until interrupted."""
    import uvicorn

    session, loop = start_session(cfg)
    app = create_app(session)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    finally:
        loop.stop()
