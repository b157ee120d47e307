"""Robot-side command interface: control-lock arbitration, inbound command
filtering by authority, duplicate suppression, and telemetry egress.

Exactly one basestation may hold a robot's lock. The lock is freed only by
an explicit release from the holder or by the holder expiring from the
registry (operator crash). Every filtering decision lands in an append-only
audit log so authority invariants are checkable after any run.
"""

from __future__ import annotations

from dataclasses import dataclass

from fleetmux.discovery import Registry, Sender
from fleetmux.grid import OccupancyGrid
from fleetmux.netsim import MULTICAST, Envelope
from fleetmux.protocol import WireMessage, encode_message
from fleetmux.protocol.chunks import chunk_grid
from fleetmux.protocol.messages import COMMAND_TYPES, CONVOY_LEADER_TYPES

FORWARDED = "forwarded"
FORWARDED_CONVOY = "forwarded_convoy"  # admitted by convoy-leader delegation
DROPPED_UNAUTHORIZED = "dropped_unauthorized"
DROPPED_DUPLICATE = "dropped_duplicate"

TELEMETRY_MIN_INTERVAL_MS = 500
MAP_INTERVAL_MS = 2000
MAP_DOWNSAMPLE = 4
MAP_CHUNK_PAYLOAD = 16_384

PRIO_CONFLICT = 0  # operator-control conflicts, node death
PRIO_REJECT = 1
PRIO_INFO = 2


@dataclass
class ControlLock:
    holder: str | None = None
    acquired_at: int = 0


@dataclass(frozen=True)
class AuditRecord:
    tick_ms: int
    src: str
    seq: int
    msg_type: str
    verdict: str
    order: int = 0  # global per-robot ordering shared with lock events


@dataclass(frozen=True)
class LockEvent:
    tick_ms: int
    holder: str | None  # holder after the event
    cause: str  # grant | release | expired
    order: int = 0


class CommandArbiter:
    def __init__(self, robot_id: str, sender: Sender):
        self.robot_id = robot_id
        self.sender = sender
        self.lock = ControlLock()
        self.audit: list[AuditRecord] = []
        self.lock_events: list[LockEvent] = []
        self._seen: set[tuple[str, int]] = set()
        self._order = 0

    def _next_order(self) -> int:
        self._order += 1
        return self._order

    # --- duplicate suppression (the network may duplicate) ---

    def is_duplicate(self, msg: WireMessage, now_ms: int) -> bool:
        key = msg.key()
        if key in self._seen:
            if msg.type in COMMAND_TYPES:
                self.audit.append(
                    AuditRecord(now_ms, msg.src, msg.seq, msg.type, DROPPED_DUPLICATE,
                                self._next_order())
                )
            return True
        self._seen.add(key)
        return False

    # --- lock protocol ---

    def handle_control_request(
        self, req: WireMessage, registry: Registry, now_ms: int
    ) -> list[Envelope]:
        """Grant when the lock is free or re-requested by the holder; deny
        otherwise, naming the current holder. The holder is also notified of
        foreign requests (highest-priority operator conflict)."""
        out = []
        if not registry.is_basestation(req.src):
            out.append(self._deny(req.src, self.lock.holder, "unknown operator", now_ms))
            return out
        if self.lock.holder is None or self.lock.holder == req.src:
            first = self.lock.holder is None
            self.lock.holder = req.src
            if first:
                self.lock.acquired_at = now_ms
                self.lock_events.append(
                    LockEvent(now_ms, req.src, "grant", self._next_order())
                )
            body = {"robot": self.robot_id, "holder": req.src, "reason": "granted"}
            msg = self.sender.make("CONTROL_GRANT", body, now_ms)
            out.append(Envelope(frame=encode_message(msg), dst=req.src))
            return out
        out.append(self._deny(req.src, self.lock.holder, "lock held", now_ms))
        notify = self.sender.make(
            "NOTIFY",
            {
                "robot": self.robot_id,
                "priority": PRIO_CONFLICT,
                "text": f"control requested by {req.src}",
            },
            now_ms,
        )
        out.append(Envelope(frame=encode_message(notify), dst=self.lock.holder))
        return out

    def _deny(self, dst: str, holder: str | None, reason: str, now_ms: int) -> Envelope:
        body = {"robot": self.robot_id, "holder": holder, "reason": reason}
        msg = self.sender.make("CONTROL_DENY", body, now_ms)
        return Envelope(frame=encode_message(msg), dst=dst)

    def handle_release(self, msg: WireMessage, now_ms: int) -> bool:
        """Release only by the current holder; anything else is dropped and
        audited. Returns True when the lock changed."""
        if self.lock.holder is not None and msg.src == self.lock.holder:
            self.lock.holder = None
            self.lock_events.append(LockEvent(now_ms, None, "release", self._next_order()))
            return True
        self.audit.append(
            AuditRecord(now_ms, msg.src, msg.seq, msg.type, DROPPED_UNAUTHORIZED,
                        self._next_order())
        )
        return False

    def sweep_holder_liveness(self, registry: Registry, now_ms: int) -> list[Envelope]:
        """Auto-release when the holder expired from the registry."""
        if self.lock.holder is not None and registry.get(self.lock.holder) is None:
            lost = self.lock.holder
            self.lock.holder = None
            self.lock_events.append(LockEvent(now_ms, None, "expired", self._next_order()))
            msg = self.sender.make(
                "NOTIFY",
                {
                    "robot": self.robot_id,
                    "priority": PRIO_CONFLICT,
                    "text": f"operator lost: {lost}",
                },
                now_ms,
            )
            return [Envelope(frame=encode_message(msg), dst=MULTICAST)]
        return []

    # --- inbound command filtering ---

    def filter_inbound(
        self, msg: WireMessage, now_ms: int, convoy_leader: str | None = None
    ) -> bool:
        """Forward iff the sender is the authorized basestation; convoy
        internal messages are additionally accepted from the assignment's
        leader (audited under their own verdict). Every decision is audited."""
        if msg.src == self.lock.holder:
            verdict = FORWARDED
        elif (
            convoy_leader is not None
            and msg.type in CONVOY_LEADER_TYPES
            and msg.src == convoy_leader
        ):
            verdict = FORWARDED_CONVOY
        else:
            verdict = DROPPED_UNAUTHORIZED
        self.audit.append(
            AuditRecord(now_ms, msg.src, msg.seq, msg.type, verdict, self._next_order())
        )
        return verdict in (FORWARDED, FORWARDED_CONVOY)


class TelemetryPublisher:
    """Egress half of the command interface: robot state, behavior-tree
    feedback, and the downsampled map, at bounded rates."""

    def __init__(
        self,
        robot_id: str,
        sender: Sender,
        telemetry_interval_ms: int = TELEMETRY_MIN_INTERVAL_MS,
        map_interval_ms: int = MAP_INTERVAL_MS,
        downsample: int = MAP_DOWNSAMPLE,
        chunk_payload: int = MAP_CHUNK_PAYLOAD,
    ):
        self.robot_id = robot_id
        self.sender = sender
        self.telemetry_interval_ms = telemetry_interval_ms
        self.map_interval_ms = map_interval_ms
        self.downsample = downsample
        self.chunk_payload = chunk_payload
        self._last_telem: tuple[int, str] | None = None  # (ms, fingerprint)
        self._last_bt: tuple[int, str] | None = None
        self._last_map_ms: int | None = None

    def _due(self, last: tuple[int, str] | None, fingerprint: str, now_ms: int) -> bool:
        if last is None:
            return True
        last_ms, last_fp = last
        return fingerprint != last_fp or now_ms - last_ms >= self.telemetry_interval_ms

    def build(
        self,
        now_ms: int,
        telemetry_body: dict,
        bt_state_body: dict,
        grid: OccupancyGrid,
    ) -> list[Envelope]:
        out = []
        fp = repr(sorted(telemetry_body.items()))
        if self._due(self._last_telem, fp, now_ms):
            msg = self.sender.make("TELEMETRY", telemetry_body, now_ms)
            out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            self._last_telem = (now_ms, fp)
        bt_fp = repr(sorted(bt_state_body.items()))
        if self._due(self._last_bt, bt_fp, now_ms):
            msg = self.sender.make("BT_STATE", bt_state_body, now_ms)
            out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            self._last_bt = (now_ms, bt_fp)
        if self._last_map_ms is None or now_ms - self._last_map_ms >= self.map_interval_ms:
            small = grid.downsample(self.downsample)
            for body in chunk_grid(small, self.chunk_payload, self.robot_id):
                msg = self.sender.make("MAP_CHUNK", body, now_ms)
                out.append(Envelope(frame=encode_message(msg), dst=MULTICAST))
            self._last_map_ms = now_ms
        return out
