"""
API server and kubelet request path: pods, deployments and the audit stream.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .domain import ImageSpec, PodSpec, PullPolicy
from .engine import EventKind, Simulation
from .exceptions import UnknownNode, UnknownObject
from .runtime import IN_FLIGHT_STATES, NodeRuntime, PullRequest

logger = logging.getLogger('pullsim.control_plane')

DEFAULT_TEARDOWN_DELAY = 1.0


class ObjectKind(str, enum.Enum):
    POD = 'Pod'
    DEPLOYMENT = 'Deployment'


class Phase(str, enum.Enum):
    PENDING = 'Pending'
    RUNNING = 'Running'
    TERMINATING = 'Terminating'
    GONE = 'Gone'


class AuditVerb(str, enum.Enum):
    CREATE = 'Create'
    DELETE = 'Delete'
    FORCE_DELETE = 'ForceDelete'
    PATCH = 'Patch'


@dataclass(frozen=True)
class DeploymentSpec:
    name: str
    replicas: int
    image: ImageSpec
    node_spread: Tuple[str, ...]
    pull_policy: PullPolicy = PullPolicy.IF_NOT_PRESENT
    labels: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("a deployment needs at least one replica")
        if not self.node_spread:
            raise ValueError("node_spread must name at least one node")
        object.__setattr__(self, 'node_spread', tuple(self.node_spread))

    def node_for(self, replica: int) -> str:
        return self.node_spread[replica % len(self.node_spread)]


@dataclass
class ApiObject:
    object_id: str
    kind: ObjectKind
    spec: object
    phase: Phase = Phase.PENDING
    created_at: float = 0.0
    running_at: Optional[float] = None
    gone_at: Optional[float] = None
    owner: Optional[str] = None
    pull_request: Optional[PullRequest] = None
    holds_image: bool = False
    children: List[str] = field(default_factory=list)
    generation: int = 0

    @property
    def node_id(self) -> Optional[str]:
        return self.spec.node_selector if self.kind == ObjectKind.POD else None

    @property
    def live(self) -> bool:
        return self.phase in (Phase.PENDING, Phase.RUNNING)


@dataclass(frozen=True)
class AuditEvent:
    time: float
    seq: int
    verb: AuditVerb
    object_id: str
    image_name: str
    node_id: str
    pull_pending: bool = False
    reason: str = ''


class ApiServer:
    """
    Pod and Deployment objects plus the kubelet side of pod creation.

    The API answers without waiting for image pulls; pods turn Running when
    the node reports the image done.
    """

    def __init__(self, sim: Simulation, nodes: Dict[str, NodeRuntime],
                 api_latency: float = 0.0, teardown_delay: float = DEFAULT_TEARDOWN_DELAY):
        self.sim = sim
        self.nodes = nodes
        self.api_latency = api_latency
        self.teardown_delay = teardown_delay
        self.objects: Dict[str, ApiObject] = {}
        self.audit: List[AuditEvent] = []
        self.audit_subscribers: List[Callable[[AuditEvent], None]] = []
        for node in nodes.values():
            node.listeners.append(self)

    # plumbing

    def node(self, node_id: str) -> NodeRuntime:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"no node named {node_id!r}") from None

    def get(self, object_id: str) -> ApiObject:
        obj = self.objects.get(object_id)
        if obj is None:
            raise UnknownObject(f"no object named {object_id!r}")
        return obj

    def submit(self, action: Callable[[], object], **payload):
        """Run an API request now, or after the configured API latency."""
        if self.api_latency <= 0:
            return action()
        self.sim.schedule_in(self.api_latency, EventKind.API_REQUEST, action, payload)
        return None

    def _emit(self, verb: AuditVerb, obj: ApiObject, image_name: str, node_id: str,
              pull_pending: bool = False, reason: str = '') -> AuditEvent:
        event = AuditEvent(self.sim.clock, len(self.audit), verb, obj.object_id, image_name,
                           node_id, pull_pending, reason)
        self.audit.append(event)
        self.sim.record(EventKind.AUDIT, verb=verb, object=obj.object_id, image=image_name,
                        node=node_id, pull_pending=pull_pending, reason=reason)
        for subscriber in list(self.audit_subscribers):
            subscriber(event)
        return event

    # pods

    def create_pod(self, spec: PodSpec, owner: Optional[str] = None) -> str:
        node = self.node(spec.node_selector)
        if spec.pod_id in self.objects:
            raise ValueError(f"object {spec.pod_id} already exists")
        obj = ApiObject(spec.pod_id, ObjectKind.POD, spec, created_at=self.sim.clock, owner=owner)
        self.objects[obj.object_id] = obj

        needs_pull = spec.pull_policy == PullPolicy.ALWAYS or not node.has_image(spec.image)
        self._emit(AuditVerb.CREATE, obj, spec.image.name, node.node_id, pull_pending=needs_pull)
        if needs_pull:
            obj.pull_request = node.submit_pull(spec.image, obj.object_id)
        elif obj.phase == Phase.PENDING:
            self._mark_running(obj)
        return obj.object_id

    def _mark_running(self, obj: ApiObject):
        node = self.nodes[obj.node_id]
        node.cache.acquire(obj.spec.image.name)
        obj.holds_image = True
        obj.phase = Phase.RUNNING
        obj.running_at = self.sim.clock
        self.sim.record(EventKind.POD_RUNNING, pod=obj.object_id, node=obj.node_id, image=obj.spec.image.name)

    def _release(self, obj: ApiObject):
        if obj.holds_image:
            self.nodes[obj.node_id].cache.release(obj.spec.image.name)
            obj.holds_image = False

    def _gone(self, obj: ApiObject):
        obj.phase = Phase.GONE
        obj.gone_at = self.sim.clock
        self.sim.record(EventKind.POD_GONE, pod=obj.object_id, node=obj.node_id)

    def delete_pod(self, object_id: str, force: bool = False, reason: str = 'user'):
        obj = self.get(object_id)
        if obj.phase == Phase.GONE or obj.kind != ObjectKind.POD:
            raise UnknownObject(f"pod {object_id!r} does not exist")
        if obj.phase == Phase.TERMINATING and not force:
            return

        req = obj.pull_request
        pull_pending = req is not None and req.state in IN_FLIGHT_STATES
        verb = AuditVerb.FORCE_DELETE if force else AuditVerb.DELETE
        self._emit(verb, obj, obj.spec.image.name, obj.node_id, pull_pending=pull_pending, reason=reason)
        self._release(obj)
        if force:
            # API bindings vanish; the runtime is never told.
            self._gone(obj)
            return

        obj.phase = Phase.TERMINATING

        def teardown():
            if obj.phase == Phase.TERMINATING:
                self._gone(obj)

        self.sim.schedule_in(self.teardown_delay, EventKind.API_REQUEST, teardown,
                             {'object': obj.object_id, 'op': 'teardown'})

    def evict_pod(self, object_id: str):
        obj = self.get(object_id)
        self.sim.record(EventKind.POD_EVICTED, pod=object_id, node=obj.node_id, image=obj.spec.image.name)
        self.delete_pod(object_id, force=False, reason='evicted')

    # deployments

    def create_deployment(self, spec: DeploymentSpec) -> str:
        if spec.name in self.objects:
            raise ValueError(f"object {spec.name} already exists")
        for node_id in spec.node_spread:
            self.node(node_id)
        obj = ApiObject(spec.name, ObjectKind.DEPLOYMENT, spec, created_at=self.sim.clock)
        self.objects[obj.object_id] = obj
        self._emit(AuditVerb.CREATE, obj, spec.image.name, '')
        self._roll_out(obj)
        return obj.object_id

    def _roll_out(self, obj: ApiObject):
        spec: DeploymentSpec = obj.spec
        obj.children = []
        for replica in range(spec.replicas):
            pod = PodSpec(f"{spec.name}-{obj.generation}-{replica}", spec.image, spec.pull_policy,
                          spec.node_for(replica), dict(spec.labels))
            obj.children.append(self.create_pod(pod, owner=obj.object_id))

    def patch_deployment(self, object_id: str, new_image: ImageSpec):
        obj = self.get(object_id)
        if obj.kind != ObjectKind.DEPLOYMENT:
            raise UnknownObject(f"{object_id!r} is not a deployment")
        spec: DeploymentSpec = obj.spec
        self._emit(AuditVerb.PATCH, obj, new_image.name, '')
        if new_image.name == spec.image.name:
            return
        # all replicas are replaced at once
        for pod_id in obj.children:
            if self.objects[pod_id].phase not in (Phase.TERMINATING, Phase.GONE):
                self.delete_pod(pod_id, force=False, reason='rollout')
        obj.spec = DeploymentSpec(spec.name, spec.replicas, new_image, spec.node_spread,
                                  spec.pull_policy, dict(spec.labels))
        obj.generation += 1
        self._roll_out(obj)

    # queries

    def pods(self) -> List[ApiObject]:
        return [obj for obj in self.objects.values() if obj.kind == ObjectKind.POD]

    def running_pods(self, node_id: str) -> List[ApiObject]:
        return [obj for obj in self.pods() if obj.node_id == node_id and obj.phase == Phase.RUNNING]

    def pod_live(self, object_id: str) -> bool:
        obj = self.objects.get(object_id)
        return obj is not None and obj.live

    def live_pods(self, label: Optional[Tuple[str, str]] = None) -> List[ApiObject]:
        pods = [obj for obj in self.pods() if obj.live]
        if label is not None:
            key, value = label
            pods = [obj for obj in pods if obj.spec.labels.get(key) == value]
        return pods

    # runtime notifications

    def on_pull_queued(self, node: NodeRuntime, request: PullRequest):
        pass

    def on_pull_started(self, node: NodeRuntime, request: PullRequest):
        pass

    def on_pull_finished(self, node: NodeRuntime, request: PullRequest):
        for obj in self.pods():
            if obj.phase == Phase.PENDING and obj.node_id == node.node_id \
                    and obj.spec.image.name == request.name:
                self._mark_running(obj)

    def on_pull_cancelled(self, node: NodeRuntime, request: PullRequest):
        pass
