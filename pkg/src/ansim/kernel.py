"""Discrete-event kernel: millisecond clock, ordered event queue, link model,
fault injection and trace emission.

Determinism contract: the kernel owns the only random number generator in a
run. Event ordering is lexicographic on (time, sequence number), so two runs
with the same seed and the same call sequence produce byte-identical traces.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional

from .model import (
    BROADCAST,
    DATA_PACKET_KINDS,
    Envelope,
    SimError,
)


class SchedulingInPast(SimError):
    pass


class UnknownReceiver(SimError):
    pass


@dataclass(frozen=True)
class Deliver:
    env: Envelope


@dataclass(frozen=True)
class TimerFire:
    owner: int
    tag: str
    data: int = 0


class FaultKind(Enum):
    DROP_NEXT_N = "drop_next_n"
    CRASH = "crash"
    RESTORE = "restore"


@dataclass(frozen=True)
class FaultSpec:
    """A scheduled fault against one node.

    drop_next_n: the node's radio drops its next ``n`` outbound data packets
    (sensor data and status broadcasts only). The defect is considered present
    until an explicit restore, even after the counter is exhausted, which is
    what keeps diagnostic probes unanswered in the meantime.
    crash: the node stops sending and processing entirely.
    restore: clears any crash or drop defect.
    """

    target: int
    kind: FaultKind
    at: int
    n: int = 0

    def __post_init__(self) -> None:
        if self.kind is FaultKind.DROP_NEXT_N and self.n <= 0:
            raise SimError("drop_next_n fault requires n > 0")


@dataclass(frozen=True)
class Event:
    at: int
    seq: int
    body: object


@dataclass(frozen=True)
class LinkSpec:
    latency_ms: int = 10
    jitter_ms: int = 0
    loss_probability: float = 0.0


class LinkModel:
    """Per-directed-pair link parameters with a uniform default."""

    def __init__(self, default: LinkSpec,
                 overrides: Optional[dict[tuple[int, int], LinkSpec]] = None):
        self.default = default
        self.overrides = dict(overrides or {})

    def spec(self, sender: int, receiver: int) -> LinkSpec:
        return self.overrides.get((sender, receiver), self.default)


@dataclass
class _NodeFault:
    crashed: bool = False
    defect_present: bool = False
    drop_remaining: int = 0


@dataclass
class KernelStats:
    scheduled: int = 0
    dispatched: int = 0


class Engine:
    """Event loop plus the physical layer (links, faults, randomness)."""

    def __init__(self, seed: int, links: LinkModel,
                 node_ids: Iterable[int], recorder=None,
                 trace: Optional[list[str]] = None):
        self.now = 0
        self.rng = random.Random(seed)
        self.links = links
        self.recorder = recorder
        self.trace = trace
        self.stats = KernelStats()
        self._heap: list[tuple[int, int, Event]] = []
        self._seq = 0
        self._send_seq = 0
        self._known: set[int] = set(node_ids)
        self._faults: dict[int, _NodeFault] = {n: _NodeFault() for n in self._known}
        # test hook: (sender, receiver) -> number of upcoming sends to lose
        self._forced_losses: dict[tuple[int, int], int] = {}
        self.on_deliver: Callable[[Envelope], None] = lambda env: None
        self.on_timer: Callable[[int, str, int], None] = lambda o, t, d: None

    # ---------------------------------------------------------------- queue

    def schedule(self, at: int, body: object) -> Event:
        if at < self.now:
            raise SchedulingInPast(
                f"cannot schedule at t={at}, clock is at t={self.now}")
        ev = Event(at=at, seq=self._seq, body=body)
        self._seq += 1
        heapq.heappush(self._heap, (ev.at, ev.seq, ev))
        self.stats.scheduled += 1
        return ev

    def schedule_timer(self, at: int, owner: int, tag: str, data: int = 0) -> Event:
        return self.schedule(at, TimerFire(owner=owner, tag=tag, data=data))

    def pending(self) -> int:
        return len(self._heap)

    def run_until(self, t_end: int) -> None:
        """Dispatch every event with time <= t_end, then advance the clock."""
        while self._heap and self._heap[0][0] <= t_end:
            _, _, ev = heapq.heappop(self._heap)
            self.now = ev.at
            self._dispatch(ev)
        if t_end > self.now:
            self.now = t_end

    def _dispatch(self, ev: Event) -> None:
        self.stats.dispatched += 1
        body = ev.body
        if isinstance(body, Deliver):
            self._trace_deliver(ev, body.env)
            self.on_deliver(body.env)
        elif isinstance(body, TimerFire):
            self._trace_line(ev, f"timer/{body.tag}", body.owner, "-", 0)
            self.on_timer(body.owner, body.tag, body.data)
        elif isinstance(body, FaultSpec):
            self._trace_line(ev, f"fault/{body.kind.value}", body.target, "-", 0)
            self._apply_fault(body)
        else:
            raise SimError(f"unknown event body {body!r}")

    # ---------------------------------------------------------------- links

    def send(self, env: Envelope) -> bool:
        """Transmit one wrapped envelope.

        Returns True when a delivery was scheduled, False when the envelope
        was lost (radio defect or probabilistic loss). A crashed sender
        transmits nothing at all and nothing is recorded for it.
        """
        if env.receiver != BROADCAST and env.receiver not in self._known:
            raise UnknownReceiver(f"receiver {env.receiver} is not a known node")
        if env.wire_len < env.payload_len:
            raise SimError("envelope must be wrapped before sending")

        fault = self._faults.get(env.sender)
        if fault is not None and fault.crashed:
            return False

        self._send_seq += 1
        seq = self._send_seq

        if (fault is not None and fault.drop_remaining > 0
                and env.kind in DATA_PACKET_KINDS):
            fault.drop_remaining -= 1
            self._record(seq, env, delivered=False)
            return False

        forced = self._forced_losses.get((env.sender, env.receiver), 0)
        if forced > 0:
            self._forced_losses[(env.sender, env.receiver)] = forced - 1
            self._record(seq, env, delivered=False)
            return False

        spec = self.links.spec(env.sender, env.receiver)
        if spec.loss_probability > 0 and self.rng.random() < spec.loss_probability:
            self._record(seq, env, delivered=False)
            return False

        latency = spec.latency_ms
        if spec.jitter_ms > 0:
            latency += self.rng.randint(0, spec.jitter_ms)
        self.schedule(self.now + latency, Deliver(env=env))
        self._record(seq, env, delivered=True)
        return True

    def _record(self, seq: int, env: Envelope, delivered: bool) -> None:
        if self.recorder is not None:
            self.recorder.record_send(seq, env, delivered)

    def force_lose_next(self, sender: int, receiver: int, count: int = 1) -> None:
        """Fault-injection hook: lose the next ``count`` sends on a pair."""
        self._forced_losses[(sender, receiver)] = (
            self._forced_losses.get((sender, receiver), 0) + count)

    # ---------------------------------------------------------------- faults

    def inject(self, fault: FaultSpec) -> None:
        self.schedule(fault.at, fault)

    def _apply_fault(self, fault: FaultSpec) -> None:
        state = self._faults.setdefault(fault.target, _NodeFault())
        if fault.kind is FaultKind.DROP_NEXT_N:
            state.defect_present = True
            state.drop_remaining += fault.n
        elif fault.kind is FaultKind.CRASH:
            state.crashed = True
            state.defect_present = True
        elif fault.kind is FaultKind.RESTORE:
            state.crashed = False
            state.defect_present = False
            state.drop_remaining = 0

    def is_crashed(self, node: int) -> bool:
        state = self._faults.get(node)
        return state is not None and state.crashed

    def is_responsive(self, node: int) -> bool:
        """A node answers diagnostics only while free of any injected defect."""
        state = self._faults.get(node)
        return state is None or not (state.crashed or state.defect_present)

    # ---------------------------------------------------------------- trace

    def _trace_deliver(self, ev: Event, env: Envelope) -> None:
        recv = "*" if env.receiver == BROADCAST else str(env.receiver)
        self._trace_line(ev, env.kind.value, env.sender, recv, env.wire_len)

    def _trace_line(self, ev: Event, kind: str, sender: int,
                    receiver: str, wire_len: int) -> None:
        if self.trace is not None:
            self.trace.append(
                f"{ev.at}\t{ev.seq}\t{kind}\t{sender}\t{receiver}\t{wire_len}")
