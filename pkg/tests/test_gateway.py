"""Console gateway: ND-JSON stream framing, snapshots, events, recording."""

from fleetmux.basestation import OperatorSession
from fleetmux.discovery import Registry, Sender
from fleetmux.gateway import GatewayRecorder, GatewayStream, parse_action_line
from fleetmux.protocol import AgentRecord, Capabilities, WireMessage, decode_message, encode_message

ROBOT_CAPS = Capabilities(kind="robot", modes=("Idle", "Manual", "Waypoint"))


def _session():
    reg = Registry(own_id="base1")
    reg.upsert(AgentRecord("r1", ROBOT_CAPS), 0)
    return OperatorSession("base1", Sender("base1"), reg)


def test_snapshot_line_is_ui_state_envelope():
    s = _session()
    stream = GatewayStream("base1")
    line = stream.snapshot_line(s, 500)
    assert line.endswith(b"\n")
    msg = decode_message(line.strip())
    assert msg.type == "UI_STATE"
    assert msg.body["session"]["base"] == "base1"


def test_event_lines_drain_in_order_with_increasing_seq():
    s = _session()
    stream = GatewayStream("base1")
    s.select(["r1"])
    s._note(1, "r1", "hello", 10)
    lines = stream.drain_event_lines(s, 600)
    assert s.ui_events == []  # drained
    msgs = [decode_message(l.strip()) for l in lines]
    assert all(m.type == "UI_EVENT" for m in msgs)
    seqs = [m.seq for m in msgs]
    assert seqs == sorted(seqs)
    kinds = [m.body["kind"] for m in msgs]
    assert "selection" in kinds and "notification" in kinds


def test_parse_action_line():
    msg = WireMessage(
        type="UI_ACTION", seq=0, src="base1", ts=0,
        body={"action": {"tag": "stop", "robot": "r1"}},
    )
    assert parse_action_line(encode_message(msg) + b"\n") == {"tag": "stop", "robot": "r1"}
    assert parse_action_line(b"garbage\n") is None
    other = WireMessage(type="NOTIFY", seq=0, src="r1", ts=0,
                        body={"robot": "r1", "priority": 1, "text": "x"})
    assert parse_action_line(encode_message(other)) is None


def test_recorder_writes_keyframe_then_events(tmp_path):
    class FakeBase:
        def __init__(self):
            self.id = "base1"
            self.session = _session()

    base = FakeBase()
    path = tmp_path / "ui.ndjson"
    rec = GatewayRecorder(path, base, keyframe_ms=10_000)
    rec.after_tick(0)
    base.session.select(["r1"])
    rec.after_tick(50)
    rec.after_tick(10_050)  # next keyframe due
    rec.close()
    lines = path.read_bytes().splitlines()
    msgs = [decode_message(l) for l in lines]
    assert msgs[0].type == "UI_STATE"
    assert any(m.type == "UI_EVENT" for m in msgs)
    assert sum(1 for m in msgs if m.type == "UI_STATE") == 2
