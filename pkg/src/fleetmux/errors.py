"""Exception types shared across the stack."""


class FleetmuxError(Exception):
    """Base class for all fleetmux errors."""


# --- wire protocol ---

class OversizeMessage(FleetmuxError):
    """Encoding would exceed the per-datagram byte cap; caller must chunk."""


class MalformedFrame(FleetmuxError):
    """Bytes are not a valid frame (bad JSON, bad envelope, bad body)."""


class UnknownType(FleetmuxError):
    """Frame carries an unrecognized message-type tag."""


class VersionMismatch(FleetmuxError):
    """Frame protocol version is not the one this stack speaks."""


class IncompleteGrid(FleetmuxError):
    """Grid reassembly is missing one or more chunks."""


# --- network simulator ---

class UnknownAgent(FleetmuxError):
    """Agent id is not registered on the network."""


class NonMonotonicTick(FleetmuxError):
    """step() was called with a tick that does not strictly increase."""


# --- planning ---

class BadParams(FleetmuxError):
    """Trajectory library parameters violate their invariants."""


# --- convoy ---

class TooFewRobots(FleetmuxError):
    """A convoy needs at least two robots."""


class RobotUnavailable(FleetmuxError):
    """A selected robot cannot join the convoy; the whole start aborts."""

    def __init__(self, robot, reason):
        super().__init__(f"{robot}: {reason}")
        self.robot = robot
        self.reason = reason


class NotInConvoy(FleetmuxError):
    """Referenced robot is not a member of the convoy."""


# --- simulation / basestation ---

class UnknownNode(FleetmuxError):
    """Named health node does not exist on this robot."""


class InvalidAction(FleetmuxError):
    """Operator action is not in the currently valid set; never transmitted."""


class ScenarioParseError(FleetmuxError):
    """Scenario or world file is malformed."""


class AssertionFailed(FleetmuxError):
    """A scenario assertion did not hold."""

    def __init__(self, name, detail=""):
        super().__init__(f"{name}: {detail}" if detail else name)
        self.name = name
        self.detail = detail
