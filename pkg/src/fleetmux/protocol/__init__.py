from fleetmux.protocol.messages import (
    ALL_TYPES,
    COMMAND_TYPES,
    GATEWAY_TYPES,
    MAX_FRAME_BYTES,
    PROTOCOL_VERSION,
    AgentRecord,
    Capabilities,
    WireMessage,
    decode_message,
    encode_message,
    record_from_body,
    record_to_body,
    valid_agent_id,
)
from fleetmux.protocol.chunks import chunk_grid, grid_from_chunks, reassemble_grid

__all__ = [
    "ALL_TYPES",
    "COMMAND_TYPES",
    "GATEWAY_TYPES",
    "MAX_FRAME_BYTES",
    "PROTOCOL_VERSION",
    "AgentRecord",
    "Capabilities",
    "WireMessage",
    "decode_message",
    "encode_message",
    "record_from_body",
    "record_to_body",
    "valid_agent_id",
    "chunk_grid",
    "grid_from_chunks",
    "reassemble_grid",
]
