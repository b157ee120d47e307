"""Deterministic discrete-time network between agents.

One owner advances the network: agents hand frames to post() during a tick
and the harness collects deliveries with step(). Loss, duplication and
latency are drawn from a single seeded stream, so (seed, post trace) fully
determines the delivery trace. Receivers are visited in sorted-id order to
keep the draw sequence stable.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass

from fleetmux.errors import NonMonotonicTick, UnknownAgent

DEFAULT_TICK_MS = 50


@dataclass
class NetConfig:
    seed: int = 0
    latency_ms: tuple[float, float] = (0.0, 0.0)
    loss_prob: float = 0.0
    dup_prob: float = 0.0
    bandwidth_bytes_per_tick: int = 0  # per directed link; 0 = unlimited
    tick_ms: int = DEFAULT_TICK_MS

    def __post_init__(self):
        lo, hi = self.latency_ms
        if lo > hi:
            raise ValueError("latency min > max")
        if not (0.0 <= self.loss_prob < 1.0 or self.loss_prob == 1.0):
            raise ValueError("loss_prob out of range")
        if not (0.0 <= self.dup_prob <= 1.0):
            raise ValueError("dup_prob out of range")
        if self.tick_ms <= 0:
            raise ValueError("tick_ms must be positive")


MULTICAST = "*"


@dataclass
class Envelope:
    """A frame offered to the network. dst=MULTICAST fans out to everyone
    but the sender; otherwise it is a unicast to one agent id."""

    frame: bytes
    dst: str = MULTICAST
    posted_at: int = 0


@dataclass
class NetStats:
    posted: int = 0
    rejected: int = 0
    lost: int = 0
    duplicated: int = 0
    delivered: int = 0
    copies_dropped_bandwidth: int = 0


class Network:
    def __init__(self, config: NetConfig | None = None):
        self.config = config or NetConfig()
        self._rng = random.Random(self.config.seed)
        self._agents: list[str] = []
        self._queue: list[tuple[int, int, str, bytes]] = []
        self._insert_seq = 0
        self._last_step_tick: int | None = None
        self._usage_tick: int | None = None
        self._usage: dict[tuple[str, str], int] = {}
        self.stats = NetStats()

    def register(self, agent_id: str) -> None:
        if agent_id not in self._agents:
            self._agents.append(agent_id)
            self._agents.sort()

    def unregister(self, agent_id: str) -> None:
        if agent_id in self._agents:
            self._agents.remove(agent_id)

    @property
    def agents(self) -> tuple[str, ...]:
        return tuple(self._agents)

    def _link_allows(self, src: str, dst: str, nbytes: int, tick: int) -> bool:
        cap = self.config.bandwidth_bytes_per_tick
        if cap <= 0:
            return True
        if self._usage_tick != tick:
            self._usage_tick = tick
            self._usage = {}
        used = self._usage.get((src, dst), 0)
        if used + nbytes > cap:
            return False
        self._usage[(src, dst)] = used + nbytes
        return True

    def _schedule_copy(self, dst: str, frame: bytes, posted_at: int) -> None:
        lo, hi = self.config.latency_ms
        latency = self._rng.uniform(lo, hi)
        ticks = max(1, math.ceil(latency / self.config.tick_ms))
        heapq.heappush(self._queue, (posted_at + ticks, self._insert_seq, dst, frame))
        self._insert_seq += 1

    def _offer_copy(self, src: str, dst: str, frame: bytes, posted_at: int) -> bool:
        if not self._link_allows(src, dst, len(frame), posted_at):
            self.stats.copies_dropped_bandwidth += 1
            return False
        if self._rng.random() < self.config.loss_prob:
            self.stats.lost += 1
            return True
        self._schedule_copy(dst, frame, posted_at)
        if self._rng.random() < self.config.dup_prob:
            self.stats.duplicated += 1
            self._schedule_copy(dst, frame, posted_at)
        return True

    def post(self, src: str, env: Envelope) -> bool:
        """Schedule a frame. Unicast returns False only when the link's
        bandwidth budget for this tick is exhausted; multicast fans copies
        out per receiver link (saturated links drop their copy)."""
        if src not in self._agents:
            raise UnknownAgent(src)
        self.stats.posted += 1
        if env.dst == MULTICAST:
            for dst in self._agents:
                if dst == src:
                    continue
                self._offer_copy(src, dst, env.frame, env.posted_at)
            return True
        accepted = self._offer_copy(src, env.dst, env.frame, env.posted_at)
        if not accepted:
            self.stats.rejected += 1
        return accepted

    def step(self, now_tick: int) -> list[tuple[str, bytes]]:
        """Collect every frame due by now_tick, ordered by (delivery tick,
        insertion order). now_tick must strictly increase across calls."""
        if self._last_step_tick is not None and now_tick <= self._last_step_tick:
            raise NonMonotonicTick(f"{now_tick} after {self._last_step_tick}")
        self._last_step_tick = now_tick
        out = []
        while self._queue and self._queue[0][0] <= now_tick:
            _, _, dst, frame = heapq.heappop(self._queue)
            if dst in self._agents:
                out.append((dst, frame))
                self.stats.delivered += 1
        return out
