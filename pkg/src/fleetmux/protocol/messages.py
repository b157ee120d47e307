"""Wire message envelope, body schemas, and the canonical byte codec.

Every datagram on the (simulated) network is one UTF-8 JSON object with
lexicographically sorted keys and no insignificant whitespace:

    {"body":{...},"seq":N,"src":S,"ts":MS,"type":T,"v":1}

Equal messages encode to equal bytes, which is what makes golden fixtures
and whole-run log diffing possible. See PROTOCOL.md for the frozen schemas.

Senders may put extra fields in a body (they are encoded); receivers keep
only the fields named in the schema, so unknown fields are dropped on
decode. Round-trip identity therefore holds for schema-exact messages.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from fleetmux.errors import MalformedFrame, OversizeMessage, UnknownType, VersionMismatch

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 60_000

AGENT_ID_RE = re.compile(r"^[a-z0-9_-]{1,32}$")

AGENT_KINDS = ("robot", "basestation")
PLATFORMS = ("wheeled", "legged", "simulated")

MODE_NAMES = (
    "Idle",
    "Manual",
    "SmartJoystick",
    "Waypoint",
    "Exploration",
    "ConvoyLeader",
    "ConvoyFollower",
    "GetOutOfWay",
)

HEALTH_STATUSES = ("ok", "degraded", "dead")

# Command species a robot's command interface filters by control authority.
COMMAND_TYPES = frozenset(
    {
        "MODE_REQ",
        "TELEOP_CMD",
        "WAYPOINT_CMD",
        "CONVOY_START",
        "CONVOY_STOP",
        "CONVOY_PEELOFF",
        "CONVOY_GOAL",
        "RESTART_CMD",
    }
)

# Convoy-internal types a member additionally accepts from its convoy leader.
CONVOY_LEADER_TYPES = frozenset({"CONVOY_GOAL", "CONVOY_STOP", "CONVOY_PEELOFF"})

GATEWAY_TYPES = frozenset({"UI_STATE", "UI_EVENT", "UI_ACTION"})


def valid_agent_id(value) -> bool:
    return isinstance(value, str) and bool(AGENT_ID_RE.match(value))


@dataclass(frozen=True)
class Capabilities:
    kind: str
    platform: str = "simulated"
    modes: tuple = ()
    services: tuple = ()

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"bad agent kind {self.kind!r}")
        if self.platform not in PLATFORMS:
            raise ValueError(f"bad platform {self.platform!r}")
        object.__setattr__(self, "modes", tuple(sorted(self.modes)))
        object.__setattr__(self, "services", tuple(sorted(self.services)))
        for m in self.modes:
            if m not in MODE_NAMES:
                raise ValueError(f"unknown mode {m!r}")
        if self.kind == "robot" and not self.modes:
            raise ValueError("robots must list at least one mode")
        if self.kind == "basestation" and self.modes:
            raise ValueError("basestations list zero modes")


@dataclass(frozen=True)
class AgentRecord:
    id: str
    caps: Capabilities
    last_seen: int = 0

    def __post_init__(self):
        if not valid_agent_id(self.id):
            raise ValueError(f"bad agent id {self.id!r}")


def record_to_body(rec: AgentRecord) -> dict:
    return {
        "id": rec.id,
        "kind": rec.caps.kind,
        "platform": rec.caps.platform,
        "modes": list(rec.caps.modes),
        "services": list(rec.caps.services),
    }


def record_from_body(obj: dict) -> AgentRecord:
    return AgentRecord(
        id=obj["id"],
        caps=Capabilities(
            kind=obj["kind"],
            platform=obj["platform"],
            modes=tuple(obj["modes"]),
            services=tuple(obj["services"]),
        ),
    )


# --- body field validators -------------------------------------------------

def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _v_record(v):
    if not isinstance(v, dict):
        return False
    try:
        record_from_body(v)
    except (KeyError, ValueError, TypeError):
        return False
    return True


def _v_record_list(v):
    return isinstance(v, list) and all(_v_record(r) for r in v)


def _v_goal(v):
    return (
        isinstance(v, dict)
        and _is_num(v.get("x"))
        and _is_num(v.get("y"))
        and _is_num(v.get("tolerance"))
        and v["tolerance"] > 0
    )


def _v_goal_opt(v):
    return v is None or _v_goal(v)


def _v_convoy_assign_opt(v):
    if v is None:
        return True
    return (
        isinstance(v, dict)
        and isinstance(v.get("convoy_id"), str)
        and valid_agent_id(v.get("leader", ""))
        and _is_int(v.get("index"))
        and _is_num(v.get("spacing"))
    )


def _v_bt_convoy_opt(v):
    if v is None:
        return True
    return (
        isinstance(v, dict)
        and isinstance(v.get("convoy_id"), str)
        and v.get("role") in ("leader", "follower")
        and _is_int(v.get("index"))
    )


def _v_vec2(v):
    return isinstance(v, list) and len(v) == 2 and all(_is_num(c) for c in v)


def _v_pose3(v):
    return isinstance(v, list) and len(v) == 3 and all(_is_num(c) for c in v)


def _v_path(v):
    return isinstance(v, list) and all(_v_vec2(p) for p in v)


def _v_markers(v):
    return isinstance(v, list) and all(
        isinstance(m, dict)
        and isinstance(m.get("kind"), str)
        and _is_num(m.get("x"))
        and _is_num(m.get("y"))
        for m in v
    )


def _v_ids(v):
    return isinstance(v, list) and all(valid_agent_id(i) for i in v)


def _v_targets(v):
    if not isinstance(v, dict):
        return False
    for rid, t in v.items():
        if not valid_agent_id(rid):
            return False
        if not (_v_goal(t) and _is_int(t.get("index"))):
            return False
    return True


def _v_str_list(v):
    return isinstance(v, list) and all(isinstance(s, str) for s in v)


def _v_str_map(v):
    return isinstance(v, dict) and all(
        isinstance(k, str) and isinstance(val, str) for k, val in v.items()
    )


def _v_mode(v):
    return v in MODE_NAMES


def _v_mode_or_unknown(v):
    # MODE_REQ may carry a mode this build does not know; the behavior tree
    # answers UnknownMode instead of the codec rejecting the frame.
    return isinstance(v, str) and 1 <= len(v) <= 64


def _v_any(_v):
    return True


_V = {
    "id": valid_agent_id,
    "id?": lambda v: v is None or valid_agent_id(v),
    "str": lambda v: isinstance(v, str),
    "int": _is_int,
    "num": _is_num,
    "bool": lambda v: isinstance(v, bool),
    "null": lambda v: v is None,
    "record": _v_record,
    "records": _v_record_list,
    "goal": _v_goal,
    "goal?": _v_goal_opt,
    "convoy_assign?": _v_convoy_assign_opt,
    "bt_convoy?": _v_bt_convoy_opt,
    "vec2": _v_vec2,
    "pose3": _v_pose3,
    "path": _v_path,
    "markers": _v_markers,
    "ids": _v_ids,
    "targets": _v_targets,
    "strs": _v_str_list,
    "strmap": _v_str_map,
    "mode": _v_mode,
    "mode_req": _v_mode_or_unknown,
    "status": lambda v: v in HEALTH_STATUSES,
    "any": _v_any,
}

# type tag -> {field: validator key}. All fields are required; validators
# whose key ends in '?' accept null. Unknown body fields are dropped on
# decode (forward compatibility).
BODY_SCHEMAS = {
    "DISCOVER_REQ": {"record": "record"},
    "DISCOVER_RESP": {"record": "record"},
    "AGENT_LIST": {"records": "records", "generation": "int"},
    "CONTROL_REQ": {"robot": "id"},
    "CONTROL_GRANT": {"robot": "id", "holder": "id", "reason": "str"},
    "CONTROL_DENY": {"robot": "id", "holder": "id?", "reason": "str"},
    "CONTROL_RELEASE": {"robot": "id"},
    "MODE_REQ": {
        "robot": "id",
        "mode": "mode_req",
        "goal": "goal?",
        "convoy": "convoy_assign?",
    },
    "MODE_ACK": {"robot": "id", "mode": "mode"},
    "MODE_REJECT": {"robot": "id", "mode": "mode_req", "reason": "str"},
    "TELEOP_CMD": {"robot": "id", "fwd": "num", "turn": "num", "smart": "bool"},
    "WAYPOINT_CMD": {"robot": "id", "goal": "goal"},
    "CONVOY_START": {
        "convoy_id": "str",
        "order": "ids",
        "spacing": "num",
        "leader_submode": "str",
    },
    "CONVOY_STOP": {"convoy_id": "str"},
    "CONVOY_PEELOFF": {"convoy_id": "str", "robot": "id"},
    "CONVOY_GOAL": {"convoy_id": "str", "leader_s": "num", "targets": "targets"},
    "BT_STATE": {
        "robot": "id",
        "mode": "mode",
        "authorized": "id?",
        "convoy": "bt_convoy?",
        "offered": "strs",
        "guard_failures": "strmap",
    },
    "TELEMETRY": {
        "robot": "id",
        "pose": "pose3",
        "twist": "vec2",
        "mode": "mode",
        "battery_ok": "bool",
        "signal": "num",
        "cam": "null",
        "path": "path",
        "markers": "markers",
    },
    "MAP_CHUNK": {
        "robot": "id",
        "index": "int",
        "count": "int",
        "row_start": "int",
        "row_end": "int",
        "width": "int",
        "height": "int",
        "resolution": "num",
        "origin": "vec2",
        "offset": "int",
        "cells": "str",
    },
    "NOTIFY": {"robot": "id", "priority": "int", "text": "str"},
    "HEALTH": {"robot": "id", "node": "str", "status": "status", "restart_count": "int"},
    "RESTART_CMD": {"robot": "id", "node": "str"},
    # Gateway-only types (console <-> basestation byte stream, never radio).
    "UI_STATE": {"session": "any"},
    "UI_EVENT": {"kind": "str", "data": "any"},
    "UI_ACTION": {"action": "any"},
}

ALL_TYPES = tuple(sorted(BODY_SCHEMAS))


@dataclass(frozen=True)
class WireMessage:
    type: str
    seq: int
    src: str
    ts: int
    body: dict = field(default_factory=dict)
    v: int = PROTOCOL_VERSION

    def key(self) -> tuple:
        """Duplicate-suppression key: the network may duplicate frames."""
        return (self.src, self.seq)


def _check_body(msg_type: str, body: dict) -> None:
    schema = BODY_SCHEMAS[msg_type]
    for name, vkey in schema.items():
        if name not in body:
            raise MalformedFrame(f"{msg_type}: missing body field {name!r}")
        if not _V[vkey](body[name]):
            raise MalformedFrame(f"{msg_type}: bad value for body field {name!r}")


def encode_message(msg: WireMessage) -> bytes:
    """Canonical bytes for a well-formed message.

    Deterministic: equal messages encode to equal bytes. Raises
    OversizeMessage past MAX_FRAME_BYTES (the caller must chunk instead)."""
    if msg.v != PROTOCOL_VERSION:
        raise VersionMismatch(f"cannot encode v={msg.v}")
    if msg.type not in BODY_SCHEMAS:
        raise UnknownType(msg.type)
    if not valid_agent_id(msg.src):
        raise MalformedFrame(f"bad src {msg.src!r}")
    if not (_is_int(msg.seq) and msg.seq >= 0 and _is_int(msg.ts) and msg.ts >= 0):
        raise MalformedFrame("seq/ts must be non-negative integers")
    _check_body(msg.type, msg.body)
    obj = {
        "v": msg.v,
        "type": msg.type,
        "seq": msg.seq,
        "src": msg.src,
        "ts": msg.ts,
        "body": msg.body,
    }
    try:
        data = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise MalformedFrame(f"body not serializable: {exc}") from exc
    if len(data) > MAX_FRAME_BYTES:
        raise OversizeMessage(f"{len(data)} bytes > {MAX_FRAME_BYTES}")
    return data


def decode_message(data: bytes) -> WireMessage:
    """Parse canonical bytes back into a message.

    Unknown body fields are ignored (forward compatibility); unknown type
    tags and foreign protocol versions are rejected."""
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedFrame("frame is not an object")
    try:
        v = obj["v"]
        msg_type = obj["type"]
        seq = obj["seq"]
        src = obj["src"]
        ts = obj["ts"]
        body = obj["body"]
    except KeyError as exc:
        raise MalformedFrame(f"missing envelope field {exc}") from exc
    if not _is_int(v):
        raise MalformedFrame("v must be an integer")
    if v != PROTOCOL_VERSION:
        raise VersionMismatch(f"v={v}")
    if not isinstance(msg_type, str):
        raise MalformedFrame("type must be a string")
    if msg_type not in BODY_SCHEMAS:
        raise UnknownType(msg_type)
    if not valid_agent_id(src):
        raise MalformedFrame(f"bad src {src!r}")
    if not (_is_int(seq) and seq >= 0 and _is_int(ts) and ts >= 0):
        raise MalformedFrame("seq/ts must be non-negative integers")
    if not isinstance(body, dict):
        raise MalformedFrame("body must be an object")
    _check_body(msg_type, body)
    known = {k: body[k] for k in BODY_SCHEMAS[msg_type] if k in body}
    return WireMessage(type=msg_type, seq=seq, src=src, ts=ts, body=known, v=v)
