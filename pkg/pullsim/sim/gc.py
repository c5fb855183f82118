"""
Kubelet housekeeping on one node: the image garbage collector and the
disk-pressure eviction manager.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .domain import NodeConfig
from .engine import EventKind
from .runtime import NodeRuntime

logger = logging.getLogger('pullsim.gc')


@dataclass(frozen=True)
class GcPolicy:
    high_pct: float = 0.85
    low_pct: float = 0.80
    ttl: float = 120.0
    scan_interval: float = 60.0

    def __post_init__(self):
        if not self.low_pct < self.high_pct:
            raise ValueError("GC low threshold must be below the high threshold")
        if self.ttl < 0 or self.scan_interval <= 0:
            raise ValueError("ttl must be >= 0 and scan_interval > 0")

    @classmethod
    def from_node_config(cls, config: NodeConfig) -> 'GcPolicy':
        return cls(config.gc_high_pct, config.gc_low_pct, config.image_ttl, config.gc_scan_interval)


@dataclass(frozen=True)
class GcFiring:
    time: float
    usage_before: float
    usage_after: float
    deleted: Tuple[str, ...]


@dataclass(frozen=True)
class EvictionFiring:
    time: float
    usage_before: float
    usage_after: float
    evicted: Tuple[str, ...]


def gc_scan(node: NodeRuntime, now: float, policy: Optional[GcPolicy] = None) -> List[str]:
    """
    Delete every unused image older than the TTL once usage reaches the high
    threshold. Deletion runs through the whole eligible list, oldest first,
    without re-checking the low threshold in between.
    """
    policy = policy or GcPolicy.from_node_config(node.config)
    usage = node.disk_usage_pct()
    if usage < policy.high_pct:
        return []

    eligible = sorted(
        (entry for entry in node.cache.images.values()
         if entry.in_use_count == 0 and now - entry.last_pull_finish >= policy.ttl),
        key=lambda entry: (entry.last_pull_finish, entry.name),
    )
    protected = node.protected_digests()
    deleted = []
    for entry in eligible:
        freed = node.cache.remove_image(entry.name, protected)
        node.sim.record(EventKind.GC_DELETE, node=node.node_id, image=entry.name,
                        freed_bytes=freed, age=now - entry.last_pull_finish, reason='gc_unused_past_ttl')
        deleted.append(entry.name)

    node.sim.record(EventKind.GC_SCAN, node=node.node_id, usage_before=usage,
                    usage_after=node.disk_usage_pct(), deleted=len(deleted),
                    reason='gc_high_threshold' if deleted else 'gc_nothing_eligible')
    return deleted


def eviction_scan(node: NodeRuntime, now: float, api) -> List[str]:
    """
    Evict Running pods, biggest image first, until usage is back under the
    hard threshold. Taking the largest contributions first evicts the fewest
    pods.
    """
    hard = node.config.eviction_hard_pct
    usage = node.disk_usage_pct()
    if usage < hard:
        return []

    protected = node.protected_digests()
    candidates = []
    for pod in api.running_pods(node.node_id):
        image_name = pod.spec.image.name
        # a shared image is freed only when its last user goes
        if node.cache.in_use(image_name) != 1:
            continue
        candidates.append((node.cache.exclusive_bytes(image_name, protected), pod.object_id, image_name))
    candidates.sort(key=lambda c: (-c[0], c[1]))

    evicted = []
    for freed_estimate, pod_id, image_name in candidates:
        if node.disk_usage_pct() < hard or freed_estimate <= 0:
            break
        api.evict_pod(pod_id)
        entry = node.cache.images.get(image_name)
        if entry is not None and entry.in_use_count == 0:
            freed = node.cache.remove_image(image_name, node.protected_digests())
            node.sim.record(EventKind.GC_DELETE, node=node.node_id, image=image_name,
                            freed_bytes=freed, age=now - entry.last_pull_finish, reason='evicted_pod_image')
        evicted.append(pod_id)

    node.sim.record(EventKind.EVICTION_SCAN, node=node.node_id, usage_before=usage,
                    usage_after=node.disk_usage_pct(), evicted=len(evicted),
                    reason='disk_pressure' if evicted else 'no_evictable_pod')
    if evicted and node.disk_usage_pct() >= hard:
        logger.warning(f"{node.node_id}: evicted {len(evicted)} pods but disk usage is still "
                       f"{node.disk_usage_pct():.1%}")
    return evicted


@dataclass
class Housekeeper:
    """Periodic GcScan and EvictionScan for one node."""

    node: NodeRuntime
    api: object
    policy: Optional[GcPolicy] = None
    gc_firings: List[GcFiring] = field(default_factory=list)
    eviction_firings: List[EvictionFiring] = field(default_factory=list)

    def __post_init__(self):
        self.policy = self.policy or GcPolicy.from_node_config(self.node.config)

    def start(self):
        sim = self.node.sim
        payload = {'node': self.node.node_id}
        sim.every(self.policy.scan_interval, EventKind.GC_SCAN, self.run_gc,
                  start=sim.clock + self.policy.scan_interval, payload=payload)
        interval = self.node.config.eviction_scan_interval
        sim.every(interval, EventKind.EVICTION_SCAN, self.run_eviction,
                  start=sim.clock + interval, payload=payload)

    def run_gc(self) -> List[str]:
        before = self.node.disk_usage_pct()
        deleted = gc_scan(self.node, self.node.now, self.policy)
        if deleted:
            self.gc_firings.append(GcFiring(self.node.now, before, self.node.disk_usage_pct(), tuple(deleted)))
            self.node.settle()
        return deleted

    def run_eviction(self) -> List[str]:
        before = self.node.disk_usage_pct()
        evicted = eviction_scan(self.node, self.node.now, self.api)
        if evicted:
            self.eviction_firings.append(
                EvictionFiring(self.node.now, before, self.node.disk_usage_pct(), tuple(evicted)))
            self.node.settle()
        return evicted
