"""Live session host: streams frames and stats, accepts field commands.

One process owns one authoritative :class:`SimulationSession`.  Clients
connect over WebSocket and exchange JSON messages (schema in
docs/wire-protocol-v1.md).  The simulation loop applies queued commands
only between frame advances, broadcasts every frame with a gapless frame
index, and emits scene statistics once per simulated second.  Slow clients
drop stale frames (latest wins) but never stats or errors.
"""

from __future__ import annotations

import argparse
import asyncio
import base64
import json
import math
import os
from collections import deque
from dataclasses import asdict, dataclass, field

import websockets

from . import __version__, scenes
from .magnetics import FIELD_ROTATING, FieldCommand
from .navigation import SOURCE_GROUND_TRUTH, SOURCE_IMAGE, Waypoint, close_loop
from .session import SimulationSession
from .sonography import ContrastModelParams, ProbeSpec

SCHEMA_VERSION = "1"
LISTEN_ENV_VAR = "SONOSWARM_LISTEN"


@dataclass(frozen=True)
class ServiceLimits:
    max_field_t: float = 20e-3
    max_pitch_rad: float = math.radians(15.0)


@dataclass
class _Client:
    """Outbound state for one connection.

    Messages leave in sequence order; when a new frame arrives while an
    older one is still undelivered, the stale frame is replaced in place
    (latest wins) so slow clients drop frames but never stats or errors.
    """

    socket: object
    outbox: deque = field(default_factory=deque)
    wake: asyncio.Event = field(default_factory=asyncio.Event)

    def push(self, message: dict) -> None:
        if message["type"] == "Frame":
            stale = [m for m in self.outbox if m["type"] == "Frame"]
            for m in stale:
                self.outbox.remove(m)
        self.outbox.append(message)
        self.wake.set()


class SimService:
    """Session host fanning frames out to any number of clients."""

    def __init__(
        self,
        session: SimulationSession,
        time_scale: float = 1.0,
        limits: ServiceLimits | None = None,
        session_id: str | None = None,
    ):
        if time_scale <= 0:
            raise ValueError("time_scale must be positive")
        self.session = session
        self.time_scale = time_scale
        self.limits = limits if limits is not None else ServiceLimits()
        self.session_id = session_id or f"session-{session.seed}"
        self.paused = True
        self._seq = 0
        self._clients: dict[object, _Client] = {}
        self._commands: asyncio.Queue = asyncio.Queue()
        self._stop = asyncio.Event()
        self._stats_every = max(1, int(round(session.probe.frame_rate)))

    # ------------------------------------------------------------------
    # message plumbing
    # ------------------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _envelope(self, msg_type: str, payload: dict) -> dict:
        return {
            "type": msg_type,
            "session": self.session_id,
            "seq": self._next_seq(),
            "payload": payload,
        }

    def _broadcast(self, msg_type: str, payload: dict) -> None:
        message = self._envelope(msg_type, payload)
        for client in self._clients.values():
            client.push(message)

    def _hello_payload(self) -> dict:
        probe = self.session.probe
        return {
            "schema_version": SCHEMA_VERSION,
            "server_version": __version__,
            "limits": {
                "max_field_t": self.limits.max_field_t,
                "max_pitch_rad": self.limits.max_pitch_rad,
            },
            "probe": asdict(probe),
            "frame_shape": [probe.n_rows, probe.n_cols],
            "paused": self.paused,
            "time_s": self.session.scene.time,
        }

    def _frame_payload(self, frame) -> dict:
        return {
            "frame_index": self.session.frame_index - 1,
            "timestamp_s": frame.timestamp,
            "rows": frame.shape[0],
            "cols": frame.shape[1],
            "pixel_pitch_m": frame.pixel_pitch,
            "encoding": "base64/u8-row-major",
            "data": base64.b64encode(frame.pixels.tobytes()).decode("ascii"),
        }

    # ------------------------------------------------------------------
    # command handling
    # ------------------------------------------------------------------

    def _validate_field(self, payload: dict) -> FieldCommand:
        try:
            cmd = FieldCommand(
                magnitude_b=float(payload["magnitude_b"]),
                yaw_alpha=float(payload.get("yaw_alpha", 0.0)),
                pitch_gamma=float(payload.get("pitch_gamma", 0.0)),
                mode=payload.get("mode", FIELD_ROTATING),
                frequency_f=float(payload.get("frequency_f", 0.0)),
                phase0=float(payload.get("phase0", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise _CommandRejected("invalid_field", f"bad field command: {exc}")
        if cmd.magnitude_b > self.limits.max_field_t:
            raise _CommandRejected(
                "field_too_strong",
                f"magnitude_b {cmd.magnitude_b} exceeds {self.limits.max_field_t} T",
            )
        if cmd.pitch_gamma > self.limits.max_pitch_rad:
            raise _CommandRejected(
                "pitch_too_steep",
                f"pitch_gamma {cmd.pitch_gamma} exceeds {self.limits.max_pitch_rad} rad",
            )
        return cmd

    def _validate_plan(self, payload: dict):
        try:
            waypoints = [
                Waypoint(
                    position=(float(w["x"]), float(w["y"])),
                    tolerance=float(w["tolerance"]),
                )
                for w in payload["waypoints"]
            ]
            source = payload.get("source", SOURCE_GROUND_TRUTH)
        except (KeyError, TypeError, ValueError) as exc:
            raise _CommandRejected("invalid_plan", f"bad nav plan: {exc}")
        if source not in (SOURCE_GROUND_TRUTH, SOURCE_IMAGE):
            raise _CommandRejected("invalid_plan", f"unknown source {source!r}")
        if not waypoints:
            raise _CommandRejected("invalid_plan", "empty waypoint list")
        if payload.get("close_loop", True):
            waypoints = close_loop(waypoints)
        return waypoints, source

    def _apply_one(self, client: _Client, message: dict) -> None:
        msg_type = message.get("type")
        payload = message.get("payload", {})
        try:
            if msg_type == "FieldCommandSet":
                self.session.set_field(self._validate_field(payload))
            elif msg_type == "NavPlanSet":
                plan, source = self._validate_plan(payload)
                self.session.set_nav_plan(plan, source)
            elif msg_type == "Pause":
                self.paused = True
            elif msg_type == "Resume":
                self.paused = False
            else:
                raise _CommandRejected(
                    "unknown_type", f"unsupported message type {msg_type!r}"
                )
        except _CommandRejected as exc:
            self._send_error(client, exc.code, exc.detail)

    def _apply_commands(self) -> None:
        while not self._commands.empty():
            client, message = self._commands.get_nowait()
            self._apply_one(client, message)

    def _send_error(self, client: _Client, code: str, detail: str) -> None:
        client.push(self._envelope("Error", {"code": code, "detail": detail}))

    # ------------------------------------------------------------------
    # tasks
    # ------------------------------------------------------------------

    async def run_sim(self) -> None:
        """Main loop: apply commands, advance one frame, broadcast.

        Commands only ever apply here, between frame advances, so every
        frame reflects a fully applied field command.  While paused the
        loop blocks on the command queue instead of burning time.
        """
        while not self._stop.is_set():
            self._apply_commands()
            if self.paused:
                getter = asyncio.create_task(self._commands.get())
                stopper = asyncio.create_task(self._stop.wait())
                done, pending = await asyncio.wait(
                    {getter, stopper}, return_when=asyncio.FIRST_COMPLETED
                )
                for task in pending:
                    task.cancel()
                if getter in done:
                    client, message = getter.result()
                    self._apply_one(client, message)
                continue
            frame = self.session.observe()
            if frame is not None:
                self._broadcast("Frame", self._frame_payload(frame))
            if (self.session.frame_index - 1) % self._stats_every == 0:
                self._broadcast("SceneStats", self.session.stats())
            self.session.advance()
            await asyncio.sleep(self.session.frame_interval / self.time_scale)

    async def _sender(self, client: _Client) -> None:
        while True:
            await client.wake.wait()
            client.wake.clear()
            while client.outbox:
                await client.socket.send(json.dumps(client.outbox.popleft()))

    async def handler(self, socket) -> None:
        client = _Client(socket=socket)
        self._clients[socket] = client
        sender = asyncio.create_task(self._sender(client))
        try:
            await socket.send(json.dumps(self._envelope("Hello", self._hello_payload())))
            async for raw in socket:
                try:
                    message = json.loads(raw)
                    if not isinstance(message, dict) or "type" not in message:
                        raise ValueError("message must be an object with a type")
                except ValueError as exc:
                    self._send_error(client, "malformed", str(exc))
                    continue
                self._commands.put_nowait((client, message))
        finally:
            sender.cancel()
            del self._clients[socket]

    def stop(self) -> None:
        self._stop.set()

    async def serve(self, host: str = "127.0.0.1", port: int = 8787):
        """Run the listener and the simulation loop until stopped."""
        async with websockets.serve(self.handler, host, port, max_size=None):
            await self.run_sim()


class _CommandRejected(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


def default_session(seed: int = 0, render: bool = True) -> SimulationSession:
    """Self-contained live session: an aggregated swarm under an 8 mT /
    6 Hz rotating drive, ready to steer."""
    scene = scenes.swarm_blob_scene(seed=seed)
    return SimulationSession(
        scene,
        scenes.default_field(),
        ProbeSpec(),
        ContrastModelParams(),
        seed=seed,
        render=render,
    )


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError("listen address must be host:port")
    return host, int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sonoswarm-service",
        description="Serve a live swarm simulation over WebSocket",
    )
    parser.add_argument(
        "--listen",
        default=os.environ.get(LISTEN_ENV_VAR, "127.0.0.1:8787"),
        help=f"host:port (env {LISTEN_ENV_VAR} overrides the default)",
    )
    parser.add_argument("--time-scale", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--start-running",
        action="store_true",
        help="start the clock immediately instead of paused",
    )
    args = parser.parse_args(argv)
    host, port = _parse_listen(args.listen)
    service = SimService(default_session(seed=args.seed), time_scale=args.time_scale)
    if args.start_running:
        service.paused = False
    print(f"sonoswarm-service listening on ws://{host}:{port} (seed={args.seed})")
    try:
        asyncio.run(service.serve(host, port))
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    import sys

    sys.exit(main())
