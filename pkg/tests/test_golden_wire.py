"""Golden wire fixtures: one recorded frame per message type, frozen.

Any codec change that alters bytes on the wire breaks these on purpose.
"""

from pathlib import Path

import pytest

from fleetmux.protocol import decode_message, encode_message
from fleetmux.protocol.messages import ALL_TYPES

FIXTURE_DIR = Path(__file__).parent / "fixtures" / "wire"


def test_every_type_has_a_fixture():
    have = {p.stem for p in FIXTURE_DIR.glob("*.bin")}
    assert have == set(ALL_TYPES)


@pytest.mark.parametrize("msg_type", sorted(ALL_TYPES))
def test_fixture_decodes_and_reencodes_byte_identical(msg_type):
    data = (FIXTURE_DIR / f"{msg_type}.bin").read_bytes()
    msg = decode_message(data)
    assert msg.type == msg_type
    assert msg.v == 1
    assert encode_message(msg) == data
