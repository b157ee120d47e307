"""Host discovery: multicast request, unicast response, liveness registry.

Every agent runs one of these. Requests piggyback the requester's own
record so a single round is bidirectional; registries expire records that
stay silent for a few periods and report removals so dependents (lock
arbiter, operator panels) can react to membership changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from fleetmux.netsim import MULTICAST, Envelope
from fleetmux.protocol import (
    AgentRecord,
    WireMessage,
    encode_message,
    record_from_body,
    record_to_body,
)

log = logging.getLogger(__name__)

DISCOVER_PERIOD_MS = 2000
EXPIRY_PERIODS = 3

REGISTRY_MSG_TYPES = ("DISCOVER_REQ", "DISCOVER_RESP", "AGENT_LIST")


class Sender:
    """Mints wire messages with a per-run monotonic sequence counter."""

    def __init__(self, src: str):
        self.src = src
        self._seq = 0

    def make(self, msg_type: str, body: dict, ts: int) -> WireMessage:
        msg = WireMessage(type=msg_type, seq=self._seq, src=self.src, ts=ts, body=body)
        self._seq += 1
        return msg


@dataclass
class Registry:
    """Membership view of one agent. Never stores the owner's own record;
    generation bumps exactly on membership change (add/remove)."""

    own_id: str
    records: dict[str, AgentRecord] = field(default_factory=dict)
    generation: int = 0
    skipped_malformed: int = 0

    def upsert(self, rec: AgentRecord, now_ms: int) -> bool:
        """Insert or refresh a record; returns True on membership change."""
        if rec.id == self.own_id:
            return False
        prev = self.records.get(rec.id)
        last_seen = now_ms if prev is None else max(prev.last_seen, now_ms)
        self.records[rec.id] = AgentRecord(rec.id, rec.caps, last_seen)
        if prev is None:
            self.generation += 1
            return True
        return False

    def expire(self, now_ms: int, expiry_ms: int) -> list[str]:
        removed = [
            rid for rid, rec in self.records.items() if now_ms - rec.last_seen > expiry_ms
        ]
        for rid in removed:
            del self.records[rid]
            self.generation += 1
        return removed

    def get(self, agent_id: str) -> AgentRecord | None:
        return self.records.get(agent_id)

    def ids(self) -> list[str]:
        return sorted(self.records)

    def is_basestation(self, agent_id: str) -> bool:
        rec = self.records.get(agent_id)
        return rec is not None and rec.caps.kind == "basestation"

    def robots(self) -> list[str]:
        return sorted(r.id for r in self.records.values() if r.caps.kind == "robot")


def make_discover_request(record: AgentRecord, sender: Sender, now_ms: int) -> Envelope:
    """Multicast DISCOVER_REQ carrying the requester's own record, so
    responders also learn the requester."""
    msg = sender.make("DISCOVER_REQ", {"record": record_to_body(record)}, now_ms)
    return Envelope(frame=encode_message(msg), dst=MULTICAST, posted_at=0)


def handle_discover_request(
    record: AgentRecord, req: WireMessage, sender: Sender, registry: Registry, now_ms: int
) -> Envelope:
    """Unicast DISCOVER_RESP back to the requester; upserts the requester."""
    update_registry(registry, req, now_ms)
    msg = sender.make("DISCOVER_RESP", {"record": record_to_body(record)}, now_ms)
    return Envelope(frame=encode_message(msg), dst=req.src, posted_at=0)


def update_registry(registry: Registry, msg: WireMessage, now_ms: int) -> list[str]:
    """Upsert the record(s) carried by a discovery-family message.

    Malformed records are skipped and counted, never fatal. Returns the ids
    newly added (membership changes)."""
    bodies = []
    if msg.type in ("DISCOVER_REQ", "DISCOVER_RESP"):
        bodies = [msg.body["record"]]
    elif msg.type == "AGENT_LIST":
        bodies = msg.body["records"]
    else:
        raise ValueError(f"not a discovery message: {msg.type}")
    added = []
    for body in bodies:
        try:
            rec = record_from_body(body)
        except (KeyError, ValueError, TypeError):
            registry.skipped_malformed += 1
            log.debug("skipping malformed record in %s from %s", msg.type, msg.src)
            continue
        if registry.upsert(rec, now_ms):
            added.append(rec.id)
    return added


class DiscoveryService:
    """Periodic requester + responder + expiry sweeper for one agent."""

    def __init__(
        self,
        record: AgentRecord,
        sender: Sender,
        period_ms: int = DISCOVER_PERIOD_MS,
        expiry_periods: int = EXPIRY_PERIODS,
    ):
        self.record = record
        self.sender = sender
        self.registry = Registry(own_id=record.id)
        self.period_ms = period_ms
        self.expiry_ms = expiry_periods * period_ms
        self._last_request_ms: int | None = None

    def handle(self, msg: WireMessage, now_ms: int) -> list[Envelope]:
        """Feed one inbound discovery message; returns any replies."""
        if msg.type == "DISCOVER_REQ":
            return [handle_discover_request(self.record, msg, self.sender, self.registry, now_ms)]
        update_registry(self.registry, msg, now_ms)
        return []

    def periodic(self, now_ms: int) -> tuple[list[Envelope], list[str]]:
        """Run the per-tick housekeeping: emit a request when the period is
        due and expire silent agents. Returns (outbound, removed ids)."""
        out = []
        if self._last_request_ms is None or now_ms - self._last_request_ms >= self.period_ms:
            out.append(make_discover_request(self.record, self.sender, now_ms))
            self._last_request_ms = now_ms
        removed = self.registry.expire(now_ms, self.expiry_ms)
        return out, removed
