"""
Attack workloads: scripted pod churn against the API server, and the
per-node bookkeeping that turns the resulting pulls into an attack window.
"""
import enum
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Tuple

import numpy as np

from .control_plane import ApiServer, DeploymentSpec
from .domain import ImageSet, ImageSpec, PodSpec, PullPolicy
from .engine import EventKind, Simulation
from .exceptions import EmptyImageSet
from .runtime import NodeRuntime, PullRequest

logger = logging.getLogger('pullsim.attacker')

ROLE_LABEL = ('role', 'attacker')


class AttackStrategy(str, enum.Enum):
    FORCE_DELETE_CYCLE = 'ForceDeleteCycle'
    SEQUENTIAL_CYCLE = 'SequentialCycle'
    DEPLOYMENT_PATCH = 'DeploymentPatch'
    NO_DELETE = 'NoDelete'


@dataclass(frozen=True)
class AttackPlan:
    strategy: AttackStrategy
    image_set: ImageSet
    inter_step_wait: float = 2.0
    shuffle_seed: Optional[int] = None
    target_nodes: Tuple[str, ...] = ('node-1',)
    start_time: float = 0.0
    patch_interval: float = 30.0
    pull_policy: PullPolicy = PullPolicy.ALWAYS

    def __post_init__(self):
        object.__setattr__(self, 'strategy', AttackStrategy(self.strategy))
        object.__setattr__(self, 'target_nodes', tuple(self.target_nodes))
        object.__setattr__(self, 'pull_policy', PullPolicy(self.pull_policy))
        if not self.target_nodes:
            raise ValueError("an attack needs at least one target node")
        if self.inter_step_wait < 0 or self.patch_interval <= 0:
            raise ValueError("inter_step_wait must be >= 0 and patch_interval > 0")

    def ordered_images(self) -> List[ImageSpec]:
        if self.strategy == AttackStrategy.SEQUENTIAL_CYCLE:
            return self.image_set.sorted_by_size()
        images = list(self.image_set.images)
        if self.strategy == AttackStrategy.FORCE_DELETE_CYCLE and self.shuffle_seed is not None:
            order = np.random.default_rng(self.shuffle_seed).permutation(len(images))
            images = [images[i] for i in order]
        return images


@dataclass(frozen=True)
class AttackStep:
    time: float
    action: str
    target: str
    image: ImageSpec
    node_id: str = ''
    force: bool = False


def run_attack(plan: AttackPlan) -> List[AttackStep]:
    """The attack as a time-ordered script of API calls."""
    if len(plan.image_set) == 0:
        raise EmptyImageSet("attack plan has no images")
    images = plan.ordered_images()
    steps = []
    t = plan.start_time

    if plan.strategy == AttackStrategy.DEPLOYMENT_PATCH:
        steps.append(AttackStep(t, 'create_deployment', 'attack-deploy', images[0]))
        for image in images[1:]:
            t += plan.patch_interval
            steps.append(AttackStep(t, 'patch', 'attack-deploy', image))
        return steps

    for i, image in enumerate(images):
        for node_id in plan.target_nodes:
            steps.append(AttackStep(t, 'create', f"attack-{i}-{node_id}", image, node_id))
        t += plan.inter_step_wait
        if plan.strategy != AttackStrategy.NO_DELETE:
            # delete lands before the next create: one live attack pod at a time
            for node_id in plan.target_nodes:
                steps.append(AttackStep(t, 'delete', f"attack-{i}-{node_id}", image, node_id, force=True))
    return steps


class AttackExecutor:
    """Replays an attack script through the API server."""

    def __init__(self, sim: Simulation, api: ApiServer, plan: AttackPlan,
                 tracker: Optional['AttackTracker'] = None):
        self.sim = sim
        self.api = api
        self.plan = plan
        self.tracker = tracker
        self.steps = run_attack(plan)

    def schedule(self):
        for step in self.steps:
            self.sim.schedule(step.time, EventKind.ATTACK_STEP, partial(self._apply, step),
                              {'action': step.action, 'target': step.target})
        logger.debug(f"scheduled {len(self.steps)} attack steps ({self.plan.strategy.value})")

    def _apply(self, step: AttackStep):
        self.sim.record(EventKind.ATTACK_STEP, action=step.action, target=step.target,
                        image=step.image.name, node=step.node_id or '*')
        if self.tracker is not None:
            nodes = [step.node_id] if step.node_id else list(self.plan.target_nodes)
            for node_id in nodes:
                self.tracker.note_step(node_id, self.sim.clock)

        labels = dict([ROLE_LABEL])
        if step.action == 'create':
            spec = PodSpec(step.target, step.image, self.plan.pull_policy, step.node_id, labels)
            self.api.submit(partial(self.api.create_pod, spec), op='create', object=step.target)
        elif step.action == 'delete':
            self.api.submit(partial(self.api.delete_pod, step.target, step.force),
                            op='delete', object=step.target)
        elif step.action == 'create_deployment':
            spec = DeploymentSpec(step.target, len(self.plan.target_nodes), step.image,
                                  self.plan.target_nodes, self.plan.pull_policy, labels)
            self.api.submit(partial(self.api.create_deployment, spec), op='create', object=step.target)
        elif step.action == 'patch':
            self.api.submit(partial(self.api.patch_deployment, step.target, step.image),
                            op='patch', object=step.target)


@dataclass
class NodeAttackWindow:
    start: Optional[float] = None
    end: Optional[float] = None
    compressed_bytes: float = 0.0
    pending: int = 0
    requests: List[int] = field(default_factory=list)

    @property
    def duration(self) -> float:
        if self.start is None or self.end is None:
            return 0.0
        return self.end - self.start


class AttackTracker:
    """
    Attack window per node: from the first attack step until the last
    attack-attributed pull leaves the queued/active states.
    """

    def __init__(self, api: ApiServer, nodes: Dict[str, NodeRuntime]):
        self.api = api
        self.windows: Dict[str, NodeAttackWindow] = {node_id: NodeAttackWindow() for node_id in nodes}
        self._tracked: Dict[Tuple[str, int], PullRequest] = {}
        for node in nodes.values():
            node.listeners.append(self)

    def note_step(self, node_id: str, now: float):
        window = self.windows[node_id]
        if window.start is None:
            window.start = now

    def is_attack(self, request: PullRequest) -> bool:
        for requester in request.requesters:
            obj = self.api.objects.get(requester)
            if obj is not None and obj.spec.labels.get(ROLE_LABEL[0]) == ROLE_LABEL[1]:
                return True
        return False

    def window(self, node_id: str) -> NodeAttackWindow:
        return self.windows[node_id]

    def attacked_nodes(self) -> List[str]:
        return [node_id for node_id, w in self.windows.items() if w.start is not None]

    def on_pull_queued(self, node: NodeRuntime, request: PullRequest):
        key = (node.node_id, request.request_id)
        if key in self._tracked or not self.is_attack(request):
            return
        self._tracked[key] = request
        window = self.windows[node.node_id]
        window.pending += 1
        window.requests.append(request.request_id)

    def on_pull_started(self, node: NodeRuntime, request: PullRequest):
        pass

    def _closed(self, node: NodeRuntime, request: PullRequest):
        if self._tracked.pop((node.node_id, request.request_id), None) is None:
            return
        window = self.windows[node.node_id]
        window.pending -= 1
        window.compressed_bytes += request.downloaded_bytes
        if window.pending == 0:
            window.end = node.now

    def on_pull_finished(self, node: NodeRuntime, request: PullRequest):
        self._closed(node, request)

    def on_pull_cancelled(self, node: NodeRuntime, request: PullRequest):
        self._closed(node, request)
