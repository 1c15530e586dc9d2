"""WebSocket service for the browser control panel.

One endpoint, /ws, speaking versioned JSON with a `type` discriminator:
inbound `joystick` / `command` / `acoustic` messages feed the firmware
channel, outbound `telemetry` snapshots leave at the vision rate.  A
`hello` message with scenario geometry is sent on connect.  Malformed
input gets an `error` frame and the connection stays up; the simulation
does not depend on any client being connected.
"""

import asyncio
import json
import queue
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .control import JoystickInput
from .field_synth import CommandError, FieldCommand, FieldMode, GradientAxis
from .harness import Engine
from .scenario import Scenario

PROTOCOL_VERSION = 1
CLIENT_QUEUE_LIMIT = 4096
MAX_ACOUSTIC_HZ = 40e6  # signal generator ceiling


def error_msg(message: str) -> dict:
    return {"type": "error", "v": PROTOCOL_VERSION, "message": message}


def parse_joystick(msg: dict) -> JoystickInput:
    def pair(name):
        v = msg.get(name, [0.0, 0.0])
        if not isinstance(v, (list, tuple)) or len(v) != 2:
            raise ValueError(f"{name} must be [x, y]")
        return (float(v[0]), float(v[1]))

    rx, ry = pair("right_stick")
    lx, ly = pair("left_stick")
    if max(abs(rx), abs(ry), abs(lx), abs(ly)) > 1.0 + 1e-9:
        raise ValueError("stick magnitudes must stay within 1")
    return JoystickInput(
        right_stick=(rx, ry),
        left_stick=(lx, ly),
        l_trigger=float(msg.get("l_trigger", 0.0)),
        r_trigger=float(msg.get("r_trigger", 0.0)),
        square=bool(msg.get("square", False)),
        circle=bool(msg.get("circle", False)),
    )


def parse_command(msg: dict) -> FieldCommand:
    axis = msg.get("gradient_axis")
    return FieldCommand(
        mode=FieldMode(msg.get("mode", "Off")),
        alpha=float(msg.get("alpha", 0.0)),
        gamma=float(msg.get("gamma", 90.0)),
        freq=float(msg.get("freq", 0.0)),
        amplitude=float(msg.get("amplitude", 1.0)),
        gradient_axis=GradientAxis(axis) if axis else None,
        z_bias=float(msg.get("z_bias", 0.0)),
    ).validate()


class UiServer:
    """Bridges a running engine to websocket clients."""

    def __init__(self, engine: Engine):
        self.engine = engine
        self._clients: list = []
        self._lock = threading.Lock()
        engine.listeners.append(self._broadcast)

    def _broadcast(self, snapshot: dict) -> None:
        with self._lock:
            clients = list(self._clients)
        for q in clients:
            try:
                q.put_nowait(snapshot)
            except queue.Full:
                try:  # drop the oldest snapshot, keep the stream fresh
                    q.get_nowait()
                    q.put_nowait(snapshot)
                except (queue.Empty, queue.Full):
                    pass

    def register(self) -> "queue.Queue":
        q: queue.Queue = queue.Queue(maxsize=CLIENT_QUEUE_LIMIT)
        with self._lock:
            self._clients.append(q)
        return q

    def unregister(self, q) -> None:
        with self._lock:
            if q in self._clients:
                self._clients.remove(q)

    def hello(self) -> dict:
        scenario = self.engine.scenario
        optics = self.engine.optics
        trajectory = (
            [[x, y] for x, y in scenario.trajectory.nodes]
            if scenario.trajectory is not None
            else []
        )
        return {
            "type": "hello",
            "v": PROTOCOL_VERSION,
            "scenario": scenario.name,
            "frame_width": optics.frame_width,
            "frame_height": optics.frame_height,
            "um_per_px": optics.scale,
            "fps": optics.fps,
            "trajectory": trajectory,
        }

    def handle_message(self, raw: str) -> Optional[dict]:
        """Apply one inbound message; returns an error frame or None."""
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError as e:
            return error_msg(f"bad json: {e}")
        if not isinstance(msg, dict) or "type" not in msg:
            return error_msg("message must be an object with a type")
        kind = msg["type"]
        try:
            if kind == "joystick":
                self.engine.post_joystick(parse_joystick(msg))
            elif kind == "command":
                self.engine.firmware.post(parse_command(msg))
            elif kind == "acoustic":
                f = float(msg.get("freq_hz", 0.0))
                if not 0.0 <= f <= MAX_ACOUSTIC_HZ:
                    raise ValueError(f"acoustic frequency outside [0, {MAX_ACOUSTIC_HZ:g}]")
                self.engine.acoustic_f = f
            else:
                return error_msg(f"unknown message type {kind!r}")
        except (ValueError, CommandError) as e:
            return error_msg(str(e))
        return None


def create_app(
    engine: Engine,
    autostart: bool = True,
    static_dir: Optional[str] = None,
) -> FastAPI:
    app = FastAPI()
    server = UiServer(engine)
    app.state.server = server
    app.state.engine_thread = None

    @app.on_event("startup")
    def _start_engine():
        if autostart and app.state.engine_thread is None:
            t = threading.Thread(target=engine.run, daemon=True)
            app.state.engine_thread = t
            t.start()

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        q = server.register()
        await ws.send_json(server.hello())

        async def reader():
            while True:
                raw = await ws.receive_text()
                err = server.handle_message(raw)
                if err is not None:
                    await ws.send_json(err)

        async def writer():
            while True:
                try:
                    snapshot = q.get_nowait()
                except queue.Empty:
                    await asyncio.sleep(0.001)
                    continue
                await ws.send_json(snapshot)

        reader_task = asyncio.create_task(reader())
        writer_task = asyncio.create_task(writer())
        try:
            done, pending = await asyncio.wait(
                {reader_task, writer_task}, return_when=asyncio.FIRST_EXCEPTION
            )
            for task in pending:
                task.cancel()
        except WebSocketDisconnect:
            pass
        finally:
            reader_task.cancel()
            writer_task.cancel()
            server.unregister(q)

    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app


def serve_ui(
    scenario: Scenario,
    port: int,
    host: str = "127.0.0.1",
    pace_s: float = 0.0,
    static_dir: Optional[str] = None,
) -> None:
    """Run the scenario with the UI bridge attached (blocks)."""
    import uvicorn

    engine = Engine(scenario, pace_s=pace_s)
    app = create_app(engine, autostart=True, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
