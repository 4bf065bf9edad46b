"""Telemetry: one NDJSON message stream for logs, tests, and live dashboards.

Every message is a single JSON object per line:

    {"v": 1, "type": "<kind>", "t": <session_time_s>, "payload": {...}}

``t`` is simulated session time. Messages emitted while a wall clock is
relevant (live serving) may carry an additional ``wall_t`` field; consumers
must ignore fields they do not know. The full schema lives in
``docs/telemetry-protocol.md``.

Delivery: file sinks are lossless and see every message in order; live
observers read from bounded queues that drop the oldest message on overflow,
so a slow dashboard can never stall the control loop.
"""

from __future__ import annotations

import json
import socket
import threading
from collections import deque
from pathlib import Path

from .errors import InvalidInputError

PROTOCOL_VERSION = 1

MESSAGE_TYPES = (
    "posterior",
    "state",
    "calibration_histogram",
    "avatar_position",
    "npc_status",
    "score",
    "session_end",
    "threshold_update",
    "control",
)

#: Actions a client may send upstream on the same socket.
CLIENT_ACTIONS = ("threshold_update", "control")


def make_message(kind: str, t: float, payload: dict, wall_t: float | None = None) -> dict:
    if kind not in MESSAGE_TYPES:
        raise InvalidInputError(f"unknown message type {kind!r}")
    msg = {"v": PROTOCOL_VERSION, "type": kind, "t": round(float(t), 6), "payload": payload}
    if wall_t is not None:
        msg["wall_t"] = round(float(wall_t), 6)
    return msg


class DropOldestQueue:
    """Bounded FIFO whose put never blocks: overflow evicts the oldest item."""

    def __init__(self, maxlen: int = 512):
        self._items: deque = deque(maxlen=maxlen)
        self._cond = threading.Condition()
        self.dropped = 0

    def put(self, item) -> None:
        with self._cond:
            if len(self._items) == self._items.maxlen:
                self.dropped += 1
            self._items.append(item)
            self._cond.notify()

    def get(self, timeout: float | None = None):
        """Pop the next item, or None on timeout."""
        with self._cond:
            if not self._items:
                self._cond.wait(timeout)
            if not self._items:
                return None
            return self._items.popleft()

    def __len__(self) -> int:
        with self._cond:
            return len(self._items)


class TelemetryHub:
    """Fan-out point between the engine and any number of consumers."""

    def __init__(self):
        self._sinks = []
        self._queues: list[DropOldestQueue] = []
        self._lock = threading.Lock()
        self.wall_clock = None  # callable returning wall seconds, set in live mode

    def attach_sink(self, fn) -> None:
        """Register a lossless consumer called synchronously per message."""
        with self._lock:
            self._sinks.append(fn)

    def attach_queue(self, maxlen: int = 512) -> DropOldestQueue:
        """Register a lossy live observer and return its queue."""
        q = DropOldestQueue(maxlen)
        with self._lock:
            self._queues.append(q)
        return q

    def detach_queue(self, q: DropOldestQueue) -> None:
        with self._lock:
            if q in self._queues:
                self._queues.remove(q)

    def publish(self, kind: str, t: float, payload: dict) -> dict:
        wall = self.wall_clock() if self.wall_clock is not None else None
        msg = make_message(kind, t, payload, wall)
        with self._lock:
            sinks, queues = list(self._sinks), list(self._queues)
        for fn in sinks:
            fn(msg)
        for q in queues:
            q.put(msg)
        return msg

    def publish_posterior(
        self, t: float, raw: float, smoothed: float | None, intent: int | None = None
    ) -> dict:
        payload = {"raw": round(raw, 9)}
        if smoothed is not None:
            payload["smoothed"] = round(smoothed, 9)
        if intent is not None:
            payload["intent"] = intent
        return self.publish("posterior", t, payload)


class SessionLogWriter:
    """Lossless NDJSON file sink."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8")

    def __call__(self, msg: dict) -> None:
        self._fh.write(json.dumps(msg, sort_keys=True) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "SessionLogWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_session_log(path: str | Path) -> list[dict]:
    """Parse an NDJSON telemetry log, validating the envelope of each line."""
    messages = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as err:
                raise InvalidInputError(f"{path}:{lineno}: not valid JSON: {err}") from err
            if not isinstance(msg, dict) or "type" not in msg or "t" not in msg:
                raise InvalidInputError(f"{path}:{lineno}: not a telemetry message")
            messages.append(msg)
    return messages


def posterior_trace(messages: list[dict]) -> list[dict]:
    """The posterior payloads of a session log, in order."""
    return [m["payload"] | {"t": m["t"]} for m in messages if m["type"] == "posterior"]


class TelemetryServer:
    """Line-oriented TCP endpoint: telemetry out, client actions in.

    Each connected client gets its own drop-oldest queue and writer thread.
    Inbound lines are parsed as JSON actions; malformed lines are counted
    and dropped, never fatal.
    """

    def __init__(self, hub: TelemetryHub, host: str = "127.0.0.1", port: int = 0):
        self.hub = hub
        self._listener = socket.create_server((host, port))
        self.host, self.port = self._listener.getsockname()[:2]
        self._threads: list[threading.Thread] = []
        self._clients: list[socket.socket] = []
        self._actions: deque = deque()
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self.malformed_lines = 0
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            with self._lock:
                self._clients.append(conn)
            q = self.hub.attach_queue()
            w = threading.Thread(target=self._writer, args=(conn, q), daemon=True)
            r = threading.Thread(target=self._reader, args=(conn,), daemon=True)
            w.start()
            r.start()
            self._threads.extend([w, r])

    def _writer(self, conn: socket.socket, q: DropOldestQueue) -> None:
        try:
            while not self._stopping.is_set():
                msg = q.get(timeout=0.1)
                if msg is None:
                    continue
                conn.sendall((json.dumps(msg, sort_keys=True) + "\n").encode("utf-8"))
        except OSError:
            pass
        finally:
            self.hub.detach_queue(q)

    def _reader(self, conn: socket.socket) -> None:
        buffer = b""
        try:
            while not self._stopping.is_set():
                chunk = conn.recv(4096)
                if not chunk:
                    return
                buffer += chunk
                while b"\n" in buffer:
                    line, buffer = buffer.split(b"\n", 1)
                    self._handle_line(line)
        except OSError:
            pass

    def _handle_line(self, line: bytes) -> None:
        text = line.decode("utf-8", errors="replace").strip()
        if not text:
            return
        try:
            action = json.loads(text)
        except json.JSONDecodeError:
            self.malformed_lines += 1
            return
        if (
            not isinstance(action, dict)
            or action.get("type") not in CLIENT_ACTIONS
            or not isinstance(action.get("payload"), dict)
        ):
            self.malformed_lines += 1
            return
        with self._lock:
            self._actions.append(action)

    def poll_actions(self) -> list[dict]:
        """Drain and return actions received since the last poll."""
        with self._lock:
            out = list(self._actions)
            self._actions.clear()
        return out

    def stop(self) -> None:
        self._stopping.set()
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            clients = list(self._clients)
        for c in clients:
            try:
                c.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                c.close()
            except OSError:
                pass
        self._accept_thread.join(timeout=2.0)
        for t in self._threads:
            t.join(timeout=2.0)
