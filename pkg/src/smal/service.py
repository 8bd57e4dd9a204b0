"""Teleoperation service: live simulation sessions over websockets.

Each session id owns one world and one deterministic tick loop. The
first connection for an id drives the robot; later connections watch.
Incoming atom commands collapse to the latest between ticks, so at most
one atom is applied per tick regardless of key-repeat rate. Every
client has a small bounded outbox; when a client lags, its oldest
pending messages are dropped rather than queued without limit, so the
simulation never waits on a slow reader.

Wire protocol (JSON text messages):
  client -> server
    {"type": "command", "session": ID, "atom": "forward|backward|turn_left|turn_right"}
    {"type": "control", "op": "start_demo|stop_demo|reset"}
  server -> client
    {"type": "frame", "session": ID, "step": N, "png_base64": ...}
    {"type": "state", "pose": [x, y, h], "recording": bool, "collisions": N}
    {"type": "error", "reason": ...}

A writer connection records from the moment it attaches: disconnecting
saves whatever was captured as a truncated demonstration, stop_demo
saves a complete one, and reset discards the recording buffer.
"""

import asyncio
import base64
import json
import logging
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .mdp import AtomMovement
from .pipeline import Demonstration, save_demo, _frame_to_png
from .sim import SimWorld, render, step

__all__ = ["create_app"]

log = logging.getLogger(__name__)

_OUTBOX_LIMIT = 8


class _Client:
    """One connected websocket with a bounded, drop-oldest outbox."""

    def __init__(self, ws: WebSocket):
        self.ws = ws
        self.outbox: asyncio.Queue = asyncio.Queue(maxsize=_OUTBOX_LIMIT)

    def offer(self, text: str) -> None:
        while True:
            try:
                self.outbox.put_nowait(text)
                return
            except asyncio.QueueFull:
                try:
                    self.outbox.get_nowait()
                except asyncio.QueueEmpty:
                    pass

    async def pump(self) -> None:
        while True:
            await self.ws.send_text(await self.outbox.get())


class _Session:
    """World, recording state, and tick loop for one session id."""

    def __init__(self, sid: str, world: SimWorld, tick: float,
                 demo_dir: Optional[Path]):
        self.id = sid
        self.initial = world
        self.world = world
        self.tick = tick
        self.demo_dir = demo_dir
        self.clients: List[_Client] = []
        self.writer: Optional[_Client] = None
        self.pending: Optional[AtomMovement] = None
        self.recording = False
        self.rec_frames: List = []
        self.rec_atoms: List[AtomMovement] = []
        self.frame_seq = 0
        self.demo_count = 0
        self.task: Optional[asyncio.Task] = None

    # -- broadcasting ------------------------------------------------

    def _broadcast(self, payload: Dict) -> None:
        text = json.dumps(payload, sort_keys=True)
        for client in self.clients:
            client.offer(text)

    def announce(self, target: Optional[_Client] = None) -> None:
        """Send the current frame and state, to one client or to all."""
        self.frame_seq += 1
        frame = {
            "type": "frame",
            "session": self.id,
            "step": self.frame_seq,
            "png_base64": base64.b64encode(
                _frame_to_png(render(self.world))).decode("ascii"),
        }
        pose = self.world.robot
        state = {
            "type": "state",
            "pose": [pose.x, pose.y, pose.heading.value],
            "recording": self.recording,
            "collisions": self.world.collision_count,
        }
        if target is not None:
            target.offer(json.dumps(frame, sort_keys=True))
            target.offer(json.dumps(state, sort_keys=True))
        else:
            self._broadcast(frame)
            self._broadcast(state)

    # -- recording ---------------------------------------------------

    def begin_recording(self) -> None:
        self.recording = True
        self.rec_frames = [render(self.world)]
        self.rec_atoms = []

    def finish_recording(self, truncated: bool) -> None:
        if not self.recording:
            return
        self.recording = False
        demo = Demonstration(
            frames=tuple(self.rec_frames),
            k_stream=tuple(self.rec_atoms),
            metadata={"source": "teleop", "session": self.id},
            truncated=truncated,
        )
        self.rec_frames, self.rec_atoms = [], []
        if self.demo_dir is not None:
            self.demo_dir.mkdir(parents=True, exist_ok=True)
            path = self.demo_dir / f"demo-{self.id}-{self.demo_count:03d}.zip"
            self.demo_count += 1
            save_demo(demo, path)
            log.info("session %s: saved %s demo to %s (%d atoms)",
                     self.id, "truncated" if truncated else "complete",
                     path, len(demo.k_stream))

    def discard_recording(self) -> None:
        self.recording = False
        self.rec_frames, self.rec_atoms = [], []

    # -- simulation --------------------------------------------------

    async def run(self) -> None:
        while True:
            await asyncio.sleep(self.tick)
            atom, self.pending = self.pending, None
            if atom is None:
                continue
            self.world = step(self.world, atom)
            if self.recording:
                self.rec_atoms.append(atom)
                self.rec_frames.append(render(self.world))
            self.announce()


def create_app(world: SimWorld, tick_hz: float = 10.0,
               demo_dir=None) -> FastAPI:
    """Service hosting teleop sessions on copies of ``world``.

    Sessions are created on first connect and are fully independent:
    each gets its own copy of the world and its own tick loop. Recorded
    demonstrations are written to ``demo_dir`` when given.
    """
    if tick_hz <= 0:
        raise ValueError("tick_hz must be positive")
    tick = 1.0 / tick_hz
    demo_path = Path(demo_dir) if demo_dir is not None else None
    sessions: Dict[str, _Session] = {}

    @asynccontextmanager
    async def lifespan(_app):
        yield
        for sess in sessions.values():
            if sess.task is not None:
                sess.task.cancel()
            sess.finish_recording(truncated=True)

    app = FastAPI(lifespan=lifespan)

    @app.get("/health")
    async def health():
        return {"status": "ok", "sessions": len(sessions)}

    def handle(sess: _Session, client: _Client, msg: Dict) -> None:
        kind = msg.get("type")
        if kind == "command":
            target = msg.get("session")
            if target != sess.id:
                client.offer(json.dumps(
                    {"type": "error", "reason": f"session not found: {target}"},
                    sort_keys=True))
                return
            if client is not sess.writer:
                client.offer(json.dumps(
                    {"type": "error", "reason": "spectator connections are read-only"},
                    sort_keys=True))
                return
            try:
                atom = AtomMovement(msg.get("atom"))
            except ValueError:
                client.offer(json.dumps(
                    {"type": "error", "reason": f"unknown atom: {msg.get('atom')}"},
                    sort_keys=True))
                return
            sess.pending = atom  # collapse to latest between ticks
        elif kind == "control":
            if client is not sess.writer:
                client.offer(json.dumps(
                    {"type": "error", "reason": "spectator connections are read-only"},
                    sort_keys=True))
                return
            op = msg.get("op")
            if op == "start_demo":
                sess.begin_recording()
                sess.announce()
            elif op == "stop_demo":
                sess.finish_recording(truncated=False)
                sess.announce()
            elif op == "reset":
                sess.discard_recording()
                sess.world = sess.initial
                sess.pending = None
                sess.announce()
            else:
                client.offer(json.dumps(
                    {"type": "error", "reason": f"unknown control op: {op}"},
                    sort_keys=True))
        else:
            client.offer(json.dumps(
                {"type": "error", "reason": f"unknown message type: {kind}"},
                sort_keys=True))

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket, session: str):
        await websocket.accept()
        sess = sessions.get(session)
        if sess is None:
            sess = _Session(session, world, tick, demo_path)
            sessions[session] = sess
            sess.task = asyncio.create_task(sess.run())
        client = _Client(websocket)
        sess.clients.append(client)
        is_writer = sess.writer is None
        if is_writer:
            sess.writer = client
            sess.begin_recording()
        sess.announce(target=client)
        pump = asyncio.create_task(client.pump())
        try:
            while True:
                text = await websocket.receive_text()
                try:
                    msg = json.loads(text)
                    if not isinstance(msg, dict):
                        raise ValueError("not an object")
                except ValueError:
                    client.offer(json.dumps(
                        {"type": "error", "reason": "malformed message"},
                        sort_keys=True))
                    continue
                handle(sess, client, msg)
        except WebSocketDisconnect:
            pass
        finally:
            pump.cancel()
            sess.clients.remove(client)
            if client is sess.writer:
                sess.writer = None
                sess.pending = None
                sess.finish_recording(truncated=True)

    return app
