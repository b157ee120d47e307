"""fleetmux: deterministic multi-robot coordination stack and fleet simulator.

Multicast host discovery, single-authority control locks, behavior-tree
guarded mode switching with a mux as the sole gateway to navigation,
trajectory-library local planning, convoying, and an operator basestation
with a context-valid action set.
"""

__version__ = "0.1.0"
