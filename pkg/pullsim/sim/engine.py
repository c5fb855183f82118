"""
Deterministic discrete-event core.

Events are ordered by (time, seq); ties run in scheduling order. Between two
events every registered fluid participant (node runtimes) is advanced
analytically under the rates fixed at the earlier event.
"""
import enum
import hashlib
import heapq
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Protocol

from .exceptions import SchedulingInPast

logger = logging.getLogger('pullsim.engine')

# Completion-time equality tolerance in seconds.
TIME_EPSILON = 1e-9


class EventKind(str, enum.Enum):
    API_REQUEST = 'ApiRequest'
    PULL_QUEUED = 'PullQueued'
    SOCKET_OPENED = 'SocketOpened'
    LAYER_DONE = 'LayerDone'
    IMAGE_DONE = 'ImageDone'
    UNPACK_DONE = 'UnpackDone'
    GC_SCAN = 'GcScan'
    EVICTION_SCAN = 'EvictionScan'
    ATTACK_STEP = 'AttackStep'
    MAGI_ALERT = 'MagiAlert'
    MAGI_KILL = 'MagiKill'
    WORKLOAD_DONE = 'WorkloadDone'
    METRICS_SAMPLE = 'MetricsSample'
    # record-only kinds
    PULL_STARTED = 'PullStarted'
    PULL_CANCELLED = 'PullCancelled'
    MANIFEST_FETCHED = 'ManifestFetched'
    POD_RUNNING = 'PodRunning'
    POD_GONE = 'PodGone'
    AUDIT = 'Audit'
    GC_DELETE = 'GcDelete'
    POD_EVICTED = 'PodEvicted'
    MAGI_DECISION = 'MagiDecision'


@dataclass
class SimEvent:
    time: float
    kind: EventKind
    action: Callable[[], None] = field(repr=False)
    payload: Dict[str, Any] = field(default_factory=dict)
    periodic: bool = False
    seq: int = -1


@dataclass(frozen=True)
class LogRecord:
    time: float
    seq: int
    kind: str
    payload: Dict[str, Any]

    def render(self) -> str:
        summary = ' '.join(f"{key}={_render_value(value)}" for key, value in self.payload.items())
        return f"{self.time:.6f}\t{self.seq}\t{self.kind}\t{summary}"


def _render_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, (list, tuple)):
        return ','.join(_render_value(v) for v in value)
    return str(value)


class FluidParticipant(Protocol):
    busy: bool

    def advance(self, dt: float) -> None:
        ...


class EventQueue:
    """Heap of SimEvents ordered by (time, seq)."""

    def __init__(self):
        self._heap = []
        self._next_seq = 0
        self._regular_pending = 0
        self.last_popped_time = 0.0

    def push(self, event: SimEvent) -> SimEvent:
        event.seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._heap, (event.time, event.seq, event))
        if not event.periodic:
            self._regular_pending += 1
        return event

    def pop(self) -> SimEvent:
        _, _, event = heapq.heappop(self._heap)
        if not event.periodic:
            self._regular_pending -= 1
        self.last_popped_time = event.time
        return event

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    @property
    def regular_pending(self) -> int:
        return self._regular_pending

    def __len__(self):
        return len(self._heap)


class Simulation:
    def __init__(self, name: str = 'sim'):
        self.name = name
        self.clock = 0.0
        self.queue = EventQueue()
        self.log: List[LogRecord] = []
        self.participants: List[FluidParticipant] = []
        self.processed = 0

    # scheduling

    def schedule(self, time: float, kind: EventKind, action: Callable[[], None],
                 payload: Optional[Dict[str, Any]] = None, periodic: bool = False) -> SimEvent:
        if time < self.clock:
            raise SchedulingInPast(time, self.clock)
        return self.queue.push(SimEvent(time, EventKind(kind), action, payload or {}, periodic))

    def schedule_in(self, delay: float, kind: EventKind, action: Callable[[], None],
                    payload: Optional[Dict[str, Any]] = None, periodic: bool = False) -> SimEvent:
        return self.schedule(self.clock + max(0.0, delay), kind, action, payload, periodic)

    def every(self, interval: float, kind: EventKind, action: Callable[[], None],
              start: Optional[float] = None, payload: Optional[Dict[str, Any]] = None):
        """Run ``action`` periodically for as long as the simulation is busy."""
        if interval <= 0:
            raise ValueError("interval must be positive")

        def tick():
            action()
            if self.busy():
                self.schedule_in(interval, kind, tick, payload, periodic=True)

        self.schedule(self.clock if start is None else start, kind, tick, payload, periodic=True)

    def add_participant(self, participant: FluidParticipant):
        self.participants.append(participant)

    # recording

    def record(self, kind, **payload) -> LogRecord:
        kind = kind.value if isinstance(kind, enum.Enum) else str(kind)
        entry = LogRecord(self.clock, len(self.log), kind, payload)
        self.log.append(entry)
        return entry

    def records(self, kind) -> List[LogRecord]:
        kind = kind.value if isinstance(kind, enum.Enum) else str(kind)
        return [entry for entry in self.log if entry.kind == kind]

    def log_text(self) -> str:
        return ''.join(entry.render() + '\n' for entry in self.log)

    def log_digest(self) -> str:
        return hashlib.sha256(self.log_text().encode()).hexdigest()

    def export_log(self, path) -> Path:
        path = Path(path)
        path.write_text(self.log_text())
        return path

    # running

    def busy(self) -> bool:
        return self.queue.regular_pending > 0 or any(p.busy for p in self.participants)

    def _advance_to(self, time: float):
        dt = time - self.clock
        if dt > 0:
            for participant in self.participants:
                participant.advance(dt)
            self.clock = time

    def step(self) -> SimEvent:
        event = self.queue.pop()
        self._advance_to(event.time)
        event.action()
        self.processed += 1
        return event

    def run_until(self, t_end: float) -> int:
        if t_end < self.clock:
            raise SchedulingInPast(t_end, self.clock)
        count = 0
        while self.queue and self.queue.peek_time() <= t_end:
            self.step()
            count += 1
        self._advance_to(t_end)
        return count

    def run(self, horizon: Optional[float] = None) -> int:
        """Process events until the queue drains (or the horizon is reached)."""
        count = 0
        while self.queue:
            if horizon is not None and self.queue.peek_time() > horizon:
                logger.warning(f"{self.name}: horizon {horizon:.0f}s reached with "
                               f"{len(self.queue)} events pending")
                self._advance_to(horizon)
                break
            self.step()
            count += 1
        return count
