"""Console gateway: a full-duplex byte stream of newline-delimited frames
in the wire envelope schema, carrying the three gateway-only types
(UI_STATE snapshot, UI_EVENT increments, UI_ACTION console input).

Headless runs can record the stream to a file for replay; live mode serves
it over a local TCP socket (untested plumbing by design - the deterministic
loop never depends on it).
"""

from __future__ import annotations

import socket
import threading

from fleetmux.basestation import BasestationAgent
from fleetmux.discovery import Sender
from fleetmux.errors import MalformedFrame, UnknownType, VersionMismatch
from fleetmux.protocol import decode_message, encode_message


class GatewayStream:
    """Turns one basestation session's UI traffic into envelope lines."""

    def __init__(self, base_id: str):
        # the gateway is its own channel; it does not consume radio seq
        self.sender = Sender(f"{base_id}")

    def snapshot_line(self, session, now_ms: int) -> bytes:
        msg = self.sender.make("UI_STATE", {"session": session.snapshot(now_ms)}, now_ms)
        return encode_message(msg) + b"\n"

    def drain_event_lines(self, session, now_ms: int) -> list[bytes]:
        lines = []
        for ev in session.ui_events:
            msg = self.sender.make("UI_EVENT", ev, now_ms)
            lines.append(encode_message(msg) + b"\n")
        session.ui_events = []
        return lines


def parse_action_line(line: bytes) -> dict | None:
    """UI_ACTION line -> action dict, or None for anything else."""
    try:
        msg = decode_message(line.strip())
    except (MalformedFrame, UnknownType, VersionMismatch):
        return None
    if msg.type != "UI_ACTION":
        return None
    action = msg.body.get("action")
    return action if isinstance(action, dict) else None


class GatewayRecorder:
    """Writes the gateway stream of one basestation to a file: an initial
    UI_STATE, then UI_EVENT lines, then periodic UI_STATE keyframes."""

    def __init__(self, path, base: BasestationAgent, keyframe_ms: int = 10_000):
        self.path = path
        self.base = base
        self.stream = GatewayStream(base.id)
        self.keyframe_ms = keyframe_ms
        self._fh = open(path, "wb")
        self._last_keyframe: int | None = None

    def after_tick(self, now_ms: int) -> None:
        if self._last_keyframe is None or now_ms - self._last_keyframe >= self.keyframe_ms:
            self._fh.write(self.stream.snapshot_line(self.base.session, now_ms))
            self._last_keyframe = now_ms
        for line in self.stream.drain_event_lines(self.base.session, now_ms):
            self._fh.write(line)

    def close(self) -> None:
        self._fh.close()


class TcpGateway:
    """Live console endpoint on localhost; each client gets a UI_STATE on
    connect and the UI_EVENT stream after, and may send UI_ACTION lines."""

    def __init__(self, base: BasestationAgent, host: str = "127.0.0.1", port: int = 8750):
        self.base = base
        self.stream = GatewayStream(base.id)
        self.actions: list[dict] = []
        self._lock = threading.Lock()
        self._clients: list[socket.socket] = []
        self._server = socket.create_server((host, port))
        self._server.settimeout(0.2)
        self.host, self.port = self._server.getsockname()
        self._running = True
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._server.accept()
            except OSError:
                continue
            conn.settimeout(0.05)
            with self._lock:
                self._clients.append(conn)
                try:
                    conn.sendall(self.stream.snapshot_line(self.base.session, 0))
                except OSError:
                    pass
            threading.Thread(target=self._read_loop, args=(conn,), daemon=True).start()

    def _read_loop(self, conn: socket.socket) -> None:
        buf = b""
        while self._running:
            try:
                data = conn.recv(4096)
            except socket.timeout:
                continue
            except OSError:
                return
            if not data:
                return
            buf += data
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                action = parse_action_line(line)
                if action is not None:
                    with self._lock:
                        self.actions.append(action)

    def pump(self, now_ms: int) -> list[dict]:
        """Broadcast pending UI events; collect console actions."""
        lines = self.stream.drain_event_lines(self.base.session, now_ms)
        with self._lock:
            dead = []
            for conn in self._clients:
                try:
                    for line in lines:
                        conn.sendall(line)
                except OSError:
                    dead.append(conn)
            for conn in dead:
                self._clients.remove(conn)
            actions, self.actions = self.actions, []
        return actions

    def close(self) -> None:
        self._running = False
        self._server.close()
        with self._lock:
            for conn in self._clients:
                conn.close()
