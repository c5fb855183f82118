"""
MAGI mitigation: a master that correlates audit events with unfinished pulls,
and a node agent that kills or blacklists the orphaned downloads.
"""
import enum
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence

from .control_plane import ApiServer, AuditEvent, AuditVerb
from .domain import CostModel, ImageSpec, NodeConfig, PodSpec, PullPolicy
from .engine import EventKind, Simulation
from .runtime import ACTIVE_STATES, NodeRuntime, PullRequest, PullState

logger = logging.getLogger('pullsim.magi')

DEFAULT_REACT_LATENCY = 2.0

# Measured footprint of the agents; reported alongside results, not simulated.
OVERHEAD_ANNOTATION = {'cpu_pct': 0.8, 'memory_mb': 400}


class MagiOutcome(str, enum.Enum):
    KILL_SCHEDULED = 'kill_scheduled'
    KILLED = 'killed'
    BLACKLISTED = 'blacklisted'
    KILLED_ON_DEQUEUE = 'killed_on_dequeue'
    TOO_LATE = 'too_late'
    MISSED = 'missed'
    SPARED_LIVE_REQUESTER = 'spared_live_requester'


FINAL_OUTCOMES = (MagiOutcome.KILLED, MagiOutcome.KILLED_ON_DEQUEUE, MagiOutcome.TOO_LATE,
                  MagiOutcome.MISSED, MagiOutcome.SPARED_LIVE_REQUESTER)


class BlacklistScope(str, enum.Enum):
    ANY_QUEUED = 'any_queued'
    BEHIND_QUEUED = 'behind_queued'


@dataclass
class PendingPull:
    pod_id: str
    image_name: str
    node_id: str
    pull_complete: bool = False


class PendingPullTable:
    def __init__(self):
        self.entries: Dict[str, PendingPull] = {}

    def insert(self, pod_id: str, image_name: str, node_id: str):
        self.entries[pod_id] = PendingPull(pod_id, image_name, node_id)

    def complete(self, pod_id: str):
        self.entries.pop(pod_id, None)

    def pop(self, pod_id: str) -> Optional[PendingPull]:
        return self.entries.pop(pod_id, None)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, pod_id):
        return pod_id in self.entries


@dataclass(frozen=True)
class MagiAlert:
    time: float
    node_id: str
    image_name: str
    pod_id: str


@dataclass(frozen=True)
class MagiDecision:
    time: float
    node_id: str
    image_name: str
    outcome: MagiOutcome


class MagiNode:
    """Node agent: mirrors the pull queue and cancels alerted downloads."""

    def __init__(self, node: NodeRuntime, api: ApiServer,
                 react_latency: float = DEFAULT_REACT_LATENCY,
                 blacklist_scope: BlacklistScope = BlacklistScope.ANY_QUEUED):
        if react_latency < 0:
            raise ValueError("react_latency must be >= 0")
        self.node = node
        self.api = api
        self.react_latency = react_latency
        self.blacklist_scope = BlacklistScope(blacklist_scope)
        self.queue_mirror: List[str] = []
        self.blacklist = set()
        self.decisions: List[MagiDecision] = []
        node.listeners.append(self)
        node.dequeue_hooks.append(self._on_dequeue)

    def _decide(self, image_name: str, outcome: MagiOutcome) -> MagiOutcome:
        self.decisions.append(MagiDecision(self.node.now, self.node.node_id, image_name, outcome))
        self.node.sim.record(EventKind.MAGI_DECISION, node=self.node.node_id, image=image_name,
                             outcome=outcome)
        return outcome

    def _requester_live(self, request: PullRequest) -> bool:
        return any(self.api.pod_live(pod_id) for pod_id in request.requesters)

    def _queued_ahead(self, image_name: str) -> bool:
        for name in self.queue_mirror:
            if name == image_name:
                return False
            req = self.node.find_request(name)
            if req is not None and req.state == PullState.QUEUED:
                return True
        return False

    def node_on_alert(self, image_name: str, now: float) -> MagiOutcome:
        req = self.node.find_request(image_name)
        if req is None:
            return self._decide(image_name, MagiOutcome.TOO_LATE)
        if self._requester_live(req):
            return self._decide(image_name, MagiOutcome.SPARED_LIVE_REQUESTER)
        if req.state in ACTIVE_STATES:
            self.node.sim.schedule(now + self.react_latency, EventKind.MAGI_KILL,
                                   partial(self._kill, image_name),
                                   {'node': self.node.node_id, 'image': image_name})
            return self._decide(image_name, MagiOutcome.KILL_SCHEDULED)
        if self.blacklist_scope == BlacklistScope.BEHIND_QUEUED and not self._queued_ahead(image_name):
            return self._decide(image_name, MagiOutcome.MISSED)
        self.blacklist.add(image_name)
        return self._decide(image_name, MagiOutcome.BLACKLISTED)

    def _kill(self, image_name: str) -> MagiOutcome:
        # flows finishing exactly now count as completed
        self.node.settle()
        req = self.node.find_request(image_name)
        if req is None or req.state not in ACTIVE_STATES or req.download_complete:
            return self._decide(image_name, MagiOutcome.TOO_LATE)
        if self._requester_live(req):
            return self._decide(image_name, MagiOutcome.SPARED_LIVE_REQUESTER)
        self.node.cancel_pull(image_name, reason='magi_killed')
        return self._decide(image_name, MagiOutcome.KILLED)

    def _on_dequeue(self, request: PullRequest) -> bool:
        if request.name not in self.blacklist:
            return False
        self.blacklist.discard(request.name)
        if self._requester_live(request):
            self._decide(request.name, MagiOutcome.SPARED_LIVE_REQUESTER)
            return False
        self._decide(request.name, MagiOutcome.KILLED_ON_DEQUEUE)
        return True

    def outcome_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for decision in self.decisions:
            counts[decision.outcome.value] = counts.get(decision.outcome.value, 0) + 1
        return counts

    # queue mirror

    def on_pull_queued(self, node: NodeRuntime, request: PullRequest):
        if request.name not in self.queue_mirror:
            self.queue_mirror.append(request.name)

    def on_pull_started(self, node: NodeRuntime, request: PullRequest):
        pass

    def on_pull_finished(self, node: NodeRuntime, request: PullRequest):
        if request.name in self.queue_mirror:
            self.queue_mirror.remove(request.name)

    on_pull_cancelled = on_pull_finished


class MagiMaster:
    """Cluster-wide tracker of pods whose image pull has not completed."""

    def __init__(self, sim: Simulation, api: ApiServer, agents: Dict[str, MagiNode],
                 audit_delay: float = 0.0):
        self.sim = sim
        self.api = api
        self.agents = agents
        self.audit_delay = audit_delay
        self.table = PendingPullTable()
        self.alerts: List[MagiAlert] = []
        api.audit_subscribers.append(self.master_on_audit)
        for node in api.nodes.values():
            node.listeners.append(self)

    def master_on_audit(self, event: AuditEvent) -> Optional[MagiAlert]:
        if event.verb == AuditVerb.CREATE:
            if event.pull_pending and event.node_id:
                self.table.insert(event.object_id, event.image_name, event.node_id)
            return None
        if event.verb not in (AuditVerb.DELETE, AuditVerb.FORCE_DELETE):
            return None
        entry = self.table.pop(event.object_id)
        if entry is None or entry.pull_complete:
            return None

        alert = MagiAlert(event.time, entry.node_id, entry.image_name, entry.pod_id)
        self.alerts.append(alert)
        agent = self.agents.get(entry.node_id)
        if agent is not None:
            self.sim.schedule(event.time + self.audit_delay, EventKind.MAGI_ALERT,
                              lambda: agent.node_on_alert(alert.image_name, self.sim.clock),
                              {'node': alert.node_id, 'image': alert.image_name})
        return alert

    def on_pull_queued(self, node: NodeRuntime, request: PullRequest):
        pass

    def on_pull_started(self, node: NodeRuntime, request: PullRequest):
        pass

    def on_pull_finished(self, node: NodeRuntime, request: PullRequest):
        for pod_id in request.requesters:
            self.table.complete(pod_id)

    def on_pull_cancelled(self, node: NodeRuntime, request: PullRequest):
        pass


def install_magi(sim: Simulation, api: ApiServer, react_latency: float = DEFAULT_REACT_LATENCY,
                 blacklist_scope: BlacklistScope = BlacklistScope.ANY_QUEUED,
                 audit_delay: float = 0.0) -> MagiMaster:
    agents = {node_id: MagiNode(node, api, react_latency, blacklist_scope)
              for node_id, node in api.nodes.items()}
    return MagiMaster(sim, api, agents, audit_delay)


@dataclass(frozen=True)
class CutoffPoint:
    compressed_bytes: int
    outcome: MagiOutcome
    downloaded_bytes: int


@dataclass
class CutoffResult:
    throughput: float
    react_latency: float
    points: List[CutoffPoint] = field(default_factory=list)

    @property
    def boundary_bytes(self) -> Optional[int]:
        """Smallest image that was killed."""
        killed = [p.compressed_bytes for p in self.points if p.outcome == MagiOutcome.KILLED]
        return min(killed) if killed else None

    @property
    def largest_completed(self) -> Optional[int]:
        done = [p.compressed_bytes for p in self.points if p.outcome == MagiOutcome.TOO_LATE]
        return max(done) if done else None


def cutoff_sweep(images: Sequence[ImageSpec], throughput: float = 125e6,
                 react_latency: float = DEFAULT_REACT_LATENCY,
                 config: Optional[NodeConfig] = None) -> CutoffResult:
    """
    Pull each image alone on a fresh node, delete its pod right after creation
    and let MAGI react. With a constant per-image throughput the image is
    killed exactly when its download outlasts the reaction latency.
    """
    config = (config or NodeConfig.local_testbed()).with_overrides(net_bw=throughput, manifest_fetch_delay=0.0)
    costs = CostModel(registry_per_socket_cap=throughput)
    result = CutoffResult(throughput, react_latency)
    for image in images:
        sim = Simulation(f"cutoff-{image.total_compressed}")
        node = NodeRuntime('node-1', config, costs, sim)
        api = ApiServer(sim, {'node-1': node})
        master = install_magi(sim, api, react_latency)
        agent = master.agents['node-1']

        def attack(image=image, api=api):
            api.create_pod(PodSpec('cutoff-pod', image, PullPolicy.ALWAYS, 'node-1'))
            api.delete_pod('cutoff-pod', force=True)

        sim.schedule(0.0, EventKind.ATTACK_STEP, attack)
        sim.run()
        final = [d.outcome for d in agent.decisions if d.outcome in FINAL_OUTCOMES]
        request = node.requests[0]
        result.points.append(CutoffPoint(image.total_compressed, final[-1] if final else MagiOutcome.TOO_LATE,
                                         int(round(request.downloaded_bytes))))
    logger.info(f"cutoff sweep at {throughput / 1e6:.2f} MB/s, L={react_latency}s: "
                f"boundary {result.boundary_bytes}")
    return result
