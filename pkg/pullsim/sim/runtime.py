"""
containerd on one worker node: the pull queue, parallel image slots, per-layer
sockets, CPU/disk/network sharing, ordered unpacking and the local image cache.

Rates are piecewise constant: they are recomputed in ``compute_rates`` whenever
the set of active flows changes, and the node schedules a wake-up event at the
earliest flow completion.
"""
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, Iterable, List, Optional, Protocol, Sequence, Set

from .domain import CostModel, ImageSpec, LayerSpec, NodeConfig, SlotRelease
from .engine import EventKind, Simulation, TIME_EPSILON

logger = logging.getLogger('pullsim.runtime')

ATTACKER = 'attacker'

# CPU weight of the container runtime's cgroup, in cores; the pods cgroup is
# weighted by the node's allocatable cores.
RUNTIME_CPU_WEIGHT = 1.0


class PullState(str, enum.Enum):
    QUEUED = 'Queued'
    DOWNLOADING = 'Downloading'
    UNPACKING = 'Unpacking'
    DONE = 'Done'
    CANCELLED = 'Cancelled'


ACTIVE_STATES = (PullState.DOWNLOADING, PullState.UNPACKING)
IN_FLIGHT_STATES = (PullState.QUEUED, PullState.DOWNLOADING, PullState.UNPACKING)


class JobState(str, enum.Enum):
    PENDING = 'pending'
    AWAITING_PEER = 'awaiting_peer'
    DOWNLOADING = 'downloading'
    DOWNLOADED = 'downloaded'
    UNPACKING = 'unpacking'
    COMMITTING = 'committing'
    UNPACKED = 'unpacked'
    SKIPPED = 'skipped'


NOT_DOWNLOADED = (JobState.PENDING, JobState.AWAITING_PEER, JobState.DOWNLOADING)
HOLDS_TRANSIENT = (JobState.DOWNLOADING, JobState.DOWNLOADED, JobState.UNPACKING, JobState.COMMITTING)


class CancelResult(str, enum.Enum):
    CANCELLED = 'Cancelled'
    ALREADY_DONE = 'AlreadyDone'
    NOT_FOUND = 'NotFound'


def _done(remaining: float, rate: float, size: float = 0.0) -> bool:
    return remaining <= 1e-6 + rate * TIME_EPSILON + size * 1e-12


def fair_share(capacity: float, demands: Sequence[float],
               weights: Optional[Sequence[float]] = None) -> List[float]:
    """Weighted max-min allocation of ``capacity`` across ``demands`` (inf allowed)."""
    weights = list(weights) if weights is not None else [1.0] * len(demands)
    allocation = [0.0] * len(demands)
    remaining = capacity
    order = sorted(range(len(demands)), key=lambda i: demands[i] / weights[i])
    weight_left = sum(weights)
    for i in order:
        share = remaining * weights[i] / weight_left
        allocation[i] = min(demands[i], share)
        remaining -= allocation[i]
        weight_left -= weights[i]
    return allocation


@dataclass
class LayerTransfer:
    layer: LayerSpec
    socket_id: int
    bytes_done: float = 0.0
    rate: float = 0.0

    @property
    def remaining(self) -> float:
        return self.layer.compressed_bytes - self.bytes_done


@dataclass
class LayerJob:
    layer: LayerSpec
    index: int
    state: JobState = JobState.PENDING
    transfer: Optional[LayerTransfer] = None
    # fractional while the transfer runs, snapped to the integer size when it lands
    downloaded_bytes: float = 0
    unpack_done: float = 0.0
    unpack_rate: float = 0.0
    commit_left: float = 0.0
    commit_rate: float = 0.0
    stored_here: bool = False

    @property
    def unpack_remaining(self) -> float:
        return self.layer.uncompressed_bytes - self.unpack_done


@dataclass
class PullRequest:
    request_id: int
    image: ImageSpec
    requesters: List[str]
    enqueue_time: float
    state: PullState = PullState.QUEUED
    jobs: List[LayerJob] = field(default_factory=list)
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    manifest_left: Optional[float] = None
    holds_slot: bool = False
    unpack_index: int = 0
    cancel_reason: Optional[str] = None

    @property
    def name(self) -> str:
        return self.image.name

    @property
    def planned_compressed(self) -> int:
        return sum(job.layer.compressed_bytes for job in self.jobs if job.state != JobState.SKIPPED)

    @property
    def downloaded_bytes(self) -> float:
        return sum(job.downloaded_bytes for job in self.jobs)

    @property
    def download_complete(self) -> bool:
        return self.manifest_left is None and self.started_at is not None and \
            all(job.state not in NOT_DOWNLOADED for job in self.jobs)

    @property
    def open_sockets(self) -> List[LayerTransfer]:
        return [job.transfer for job in self.jobs if job.state == JobState.DOWNLOADING]


@dataclass
class CachedImage:
    name: str
    digests: tuple
    bytes_on_disk: int
    last_pull_finish: float
    in_use_count: int = 0


class ImageCache:
    """Layer store plus the image records the kubelet GC works on."""

    def __init__(self):
        self.layers: Dict[int, LayerSpec] = {}
        self.images: Dict[str, CachedImage] = {}

    def has_layer(self, digest: int) -> bool:
        return digest in self.layers

    def has_image(self, name: str) -> bool:
        entry = self.images.get(name)
        return entry is not None and all(d in self.layers for d in entry.digests)

    def store_layer(self, layer: LayerSpec):
        self.layers[layer.digest] = layer

    def add_image(self, image: ImageSpec, now: float) -> CachedImage:
        entry = self.images.get(image.name)
        if entry is None:
            entry = CachedImage(image.name, image.digests, image.total_uncompressed, now)
            self.images[image.name] = entry
        entry.last_pull_finish = now
        return entry

    def acquire(self, name: str):
        self.images[name].in_use_count += 1

    def release(self, name: str):
        entry = self.images.get(name)
        if entry is not None and entry.in_use_count > 0:
            entry.in_use_count -= 1

    def in_use(self, name: str) -> int:
        entry = self.images.get(name)
        return entry.in_use_count if entry else 0

    @property
    def layer_bytes(self) -> int:
        return sum(layer.uncompressed_bytes for layer in self.layers.values())

    def referenced_digests(self, excluding: Optional[str] = None) -> Set[int]:
        digests = set()
        for name, entry in self.images.items():
            if name != excluding:
                digests.update(entry.digests)
        return digests

    def exclusive_bytes(self, name: str, protected: Set[int]) -> int:
        """Bytes that deleting ``name`` would give back."""
        entry = self.images[name]
        others = self.referenced_digests(excluding=name) | protected
        return sum(self.layers[d].uncompressed_bytes for d in set(entry.digests)
                   if d in self.layers and d not in others)

    def remove_image(self, name: str, protected: Set[int]) -> int:
        freed = self.exclusive_bytes(name, protected)
        entry = self.images.pop(name)
        others = self.referenced_digests() | protected
        for digest in set(entry.digests):
            if digest not in others:
                self.layers.pop(digest, None)
        return freed

    def drop_layer(self, digest: int, protected: Set[int]) -> int:
        if digest in protected or digest in self.referenced_digests() or digest not in self.layers:
            return 0
        return self.layers.pop(digest).uncompressed_bytes


@dataclass
class TenantRun:
    workload: object
    started_at: float
    work_done: float = 0.0
    rate: float = 0.0
    finished_at: Optional[float] = None
    on_done: Optional[Callable[['TenantRun'], None]] = None

    @property
    def remaining(self) -> float:
        return self.workload.total_work - self.work_done


@dataclass(frozen=True)
class GaugePoint:
    time: float
    cpu_util: float
    net_rate: float
    disk_rate: float
    queue_len: int
    active_pulls: int


class NodeListener(Protocol):
    def on_pull_queued(self, node: 'NodeRuntime', request: PullRequest) -> None: ...

    def on_pull_started(self, node: 'NodeRuntime', request: PullRequest) -> None: ...

    def on_pull_finished(self, node: 'NodeRuntime', request: PullRequest) -> None: ...

    def on_pull_cancelled(self, node: 'NodeRuntime', request: PullRequest) -> None: ...


class NodeRuntime:
    def __init__(self, node_id: str, config: NodeConfig, costs: CostModel,
                 sim: Optional[Simulation] = None):
        self.node_id = node_id
        self.config = config
        self.costs = costs
        self.sim = sim or Simulation(node_id)
        self.sim.add_participant(self)

        self.queue: Deque[PullRequest] = deque()
        self.inflight: List[PullRequest] = []
        self.requests: List[PullRequest] = []
        self.cache = ImageCache()
        self.workloads: List[TenantRun] = []
        self.listeners: List[NodeListener] = []
        # A hook returning True vetoes the start of a dequeued request.
        self.dequeue_hooks: List[Callable[[PullRequest], bool]] = []

        self._owners: Dict[int, PullRequest] = {}
        self._next_request = 0
        self._next_socket = 0
        self._wake_epoch = 0

        self.cpu_demand = 0.0
        self.cpu_used = 0.0
        self.cpu_util = 0.0
        self.net_rate = 0.0
        self.disk_rate = 0.0
        self.settled_bytes_received = 0
        self.cpu_seconds = 0.0
        self.gauge_points: List[GaugePoint] = []

    # inspection

    @property
    def now(self) -> float:
        return self.sim.clock

    @property
    def busy(self) -> bool:
        return bool(self.queue or self.inflight or self.workloads)

    @property
    def slots_used(self) -> int:
        return sum(1 for req in self.inflight if req.holds_slot)

    @property
    def net_bytes_received(self) -> float:
        """Whole bytes of finished or aborted transfers plus the running ones."""
        running = sum(job.transfer.bytes_done for req in self.inflight for job in req.jobs
                      if job.state == JobState.DOWNLOADING)
        return self.settled_bytes_received + running

    @property
    def transient_bytes(self) -> float:
        return sum(job.downloaded_bytes for req in self.inflight for job in req.jobs
                   if job.state in HOLDS_TRANSIENT)

    def disk_used(self) -> float:
        return self.config.baseline_disk_used_bytes + self.cache.layer_bytes + self.transient_bytes

    def disk_usage_pct(self) -> float:
        return self.disk_used() / self.config.disk_capacity_bytes

    def find_request(self, image_name: str) -> Optional[PullRequest]:
        for req in self.inflight:
            if req.name == image_name:
                return req
        for req in self.queue:
            if req.name == image_name:
                return req
        return None

    def protected_digests(self) -> Set[int]:
        """Layers that in-flight or queued pulls count on."""
        digests = set()
        for req in list(self.inflight) + list(self.queue):
            digests.update(req.image.digests)
        return digests

    def has_image(self, image: ImageSpec) -> bool:
        return self.cache.has_image(image.name)

    # operations

    def submit_pull(self, image: ImageSpec, requester: str) -> PullRequest:
        existing = self.find_request(image.name)
        if existing is not None:
            if requester not in existing.requesters:
                existing.requesters.append(requester)
            self.sim.record(EventKind.PULL_QUEUED, node=self.node_id, image=image.name,
                            request=existing.request_id, coalesced=True)
            return existing

        req = PullRequest(self._next_request, image, [requester], self.now)
        self._next_request += 1
        req.jobs = [
            LayerJob(layer, i, JobState.SKIPPED if self.cache.has_layer(layer.digest) else JobState.PENDING)
            for i, layer in enumerate(image.layers)
        ]
        self.requests.append(req)
        self.queue.append(req)
        self.sim.record(EventKind.PULL_QUEUED, node=self.node_id, image=image.name,
                        request=req.request_id, coalesced=False)
        for listener in list(self.listeners):
            listener.on_pull_queued(self, req)
        self._fill_slots()
        self.settle()
        return req

    def start_download(self, req: PullRequest):
        req.state = PullState.DOWNLOADING
        req.started_at = self.now
        req.holds_slot = True
        self.inflight.append(req)
        for job in req.jobs:
            if self.cache.has_layer(job.layer.digest):
                job.state = JobState.SKIPPED
            elif job.layer.digest in self._owners:
                job.state = JobState.AWAITING_PEER
            else:
                job.state = JobState.PENDING
                self._owners[job.layer.digest] = req
        req.manifest_left = self.config.manifest_fetch_delay
        self.sim.record(EventKind.PULL_STARTED, node=self.node_id, image=req.name,
                        request=req.request_id, planned_bytes=req.planned_compressed)
        for listener in list(self.listeners):
            listener.on_pull_started(self, req)

    def cancel_pull(self, image_name: str, reason: str = 'cancelled') -> CancelResult:
        req = self.find_request(image_name)
        if req is None:
            if self.cache.has_image(image_name):
                return CancelResult.ALREADY_DONE
            return CancelResult.NOT_FOUND
        if req.state == PullState.UNPACKING or req.download_complete:
            return CancelResult.ALREADY_DONE

        if req.state == PullState.QUEUED:
            self.queue.remove(req)
        else:
            self._abort_inflight(req)
        req.state = PullState.CANCELLED
        req.finished_at = self.now
        req.cancel_reason = reason
        self.sim.record(EventKind.PULL_CANCELLED, node=self.node_id, image=req.name,
                        request=req.request_id, reason=reason,
                        downloaded_bytes=int(round(req.downloaded_bytes)))
        for listener in list(self.listeners):
            listener.on_pull_cancelled(self, req)
        self._fill_slots()
        self.settle()
        return CancelResult.CANCELLED

    def _abort_inflight(self, req: PullRequest):
        self.inflight.remove(req)
        req.holds_slot = False
        protected = self.protected_digests()
        for job in req.jobs:
            if job.state == JobState.DOWNLOADING:
                job.transfer.rate = 0.0
                self.settled_bytes_received += round(job.transfer.bytes_done)
            if job.stored_here:
                self.cache.drop_layer(job.layer.digest, protected)
            if job.state in HOLDS_TRANSIENT:
                job.state = JobState.PENDING
            if self._owners.get(job.layer.digest) is req:
                del self._owners[job.layer.digest]
                self._hand_over(job.layer.digest)

    def _hand_over(self, digest: int):
        """Give an orphaned layer fetch to the first pull that was waiting for it."""
        for other in self.inflight:
            for job in other.jobs:
                if job.layer.digest == digest and job.state == JobState.AWAITING_PEER:
                    job.state = JobState.PENDING
                    self._owners[digest] = other
                    self._open_sockets(other)
                    return

    def add_workload(self, workload, on_done: Optional[Callable[[TenantRun], None]] = None) -> TenantRun:
        run = TenantRun(workload, self.now, on_done=on_done)
        self.workloads.append(run)
        self.settle()
        return run

    # progress

    def _fill_slots(self):
        while self.queue and self.slots_used < self.config.max_parallel_image_pulls:
            req = self.queue.popleft()
            if any(hook(req) for hook in list(self.dequeue_hooks)):
                req.state = PullState.CANCELLED
                req.finished_at = self.now
                req.cancel_reason = 'blacklisted'
                self.sim.record(EventKind.PULL_CANCELLED, node=self.node_id, image=req.name,
                                request=req.request_id, reason='blacklisted', downloaded_bytes=0)
                for listener in list(self.listeners):
                    listener.on_pull_cancelled(self, req)
                continue
            self.start_download(req)

    def _open_sockets(self, req: PullRequest):
        if req.manifest_left is not None:
            return
        open_count = len(req.open_sockets)
        for job in req.jobs:
            if open_count >= self.config.max_sockets_per_image:
                break
            if job.state == JobState.PENDING:
                job.transfer = LayerTransfer(job.layer, self._next_socket)
                self._next_socket += 1
                job.state = JobState.DOWNLOADING
                open_count += 1
                self.sim.record(EventKind.SOCKET_OPENED, node=self.node_id, image=req.name,
                                layer=f"{job.layer.digest:016x}", socket=job.transfer.socket_id)

    def _store(self, req: PullRequest, job: LayerJob):
        self.cache.store_layer(job.layer)
        job.state = JobState.UNPACKED
        job.stored_here = True
        if self._owners.get(job.layer.digest) is req:
            del self._owners[job.layer.digest]
        self.sim.record(EventKind.UNPACK_DONE, node=self.node_id, image=req.name,
                        layer=f"{job.layer.digest:016x}", bytes=job.layer.uncompressed_bytes)
        for other in self.inflight:
            for peer_job in other.jobs:
                if peer_job.layer.digest == job.layer.digest and peer_job.state == JobState.AWAITING_PEER:
                    peer_job.state = JobState.SKIPPED

    def advance_unpack(self, req: PullRequest) -> bool:
        """Move the ordered unpack pipeline of ``req`` forward; True if anything changed."""
        changed = False
        while req.unpack_index < len(req.jobs):
            job = req.jobs[req.unpack_index]
            if job.state in (JobState.SKIPPED, JobState.UNPACKED):
                req.unpack_index += 1
                changed = True
            elif job.state == JobState.DOWNLOADED:
                job.state = JobState.UNPACKING
                job.unpack_done = 0.0
                changed = True
            elif job.state == JobState.UNPACKING and _done(job.unpack_remaining, job.unpack_rate,
                                                          job.layer.uncompressed_bytes):
                job.unpack_done = float(job.layer.uncompressed_bytes)
                if self.costs.layer_commit_time > 0:
                    job.state = JobState.COMMITTING
                    job.commit_left = self.costs.layer_commit_time
                else:
                    self._store(req, job)
                changed = True
            elif job.state == JobState.COMMITTING and _done(job.commit_left, job.commit_rate):
                job.commit_left = 0.0
                self._store(req, job)
                changed = True
            else:
                break
        return changed

    def _finish(self, req: PullRequest):
        self.inflight.remove(req)
        req.holds_slot = False
        req.state = PullState.DONE
        req.finished_at = self.now
        self.cache.add_image(req.image, self.now)
        self.sim.record(EventKind.IMAGE_DONE, node=self.node_id, image=req.name,
                        request=req.request_id, downloaded_bytes=int(round(req.downloaded_bytes)))
        for listener in list(self.listeners):
            listener.on_pull_finished(self, req)

    def settle(self):
        """Apply every completion due at the current time, then re-rate and re-arm."""
        changed = True
        while changed:
            changed = False
            for req in list(self.inflight):
                if req.manifest_left is not None and _done(req.manifest_left, 1.0):
                    req.manifest_left = None
                    self.sim.record(EventKind.MANIFEST_FETCHED, node=self.node_id, image=req.name,
                                    layers=len(req.jobs))
                    changed = True
                for job in req.jobs:
                    if job.state == JobState.DOWNLOADING and _done(job.transfer.remaining, job.transfer.rate,
                                                                  job.layer.compressed_bytes):
                        job.transfer.bytes_done = job.layer.compressed_bytes
                        job.downloaded_bytes = job.layer.compressed_bytes
                        job.state = JobState.DOWNLOADED
                        self.settled_bytes_received += job.layer.compressed_bytes
                        self.sim.record(EventKind.LAYER_DONE, node=self.node_id, image=req.name,
                                        layer=f"{job.layer.digest:016x}", socket=job.transfer.socket_id)
                        changed = True
                if req.manifest_left is None:
                    before = len(req.open_sockets)
                    self._open_sockets(req)
                    changed = changed or len(req.open_sockets) != before
                changed = self.advance_unpack(req) or changed
                if req.state == PullState.DOWNLOADING and req.download_complete:
                    req.state = PullState.UNPACKING
                    if self.config.slot_release == SlotRelease.ON_DOWNLOAD_DONE:
                        req.holds_slot = False
                    changed = True
                if req.manifest_left is None and req.unpack_index >= len(req.jobs):
                    self._finish(req)
                    changed = True
            for run in list(self.workloads):
                if _done(run.remaining, run.rate) or run.workload.cpu_demand == 0:
                    run.work_done = run.workload.total_work
                    run.finished_at = self.now
                    self.workloads.remove(run)
                    self.sim.record(EventKind.WORKLOAD_DONE, node=self.node_id,
                                    workload=run.workload.name, duration=self.now - run.started_at)
                    if run.on_done:
                        run.on_done(run)
                    changed = True
            if self.queue and self.slots_used < self.config.max_parallel_image_pulls:
                self._fill_slots()
                changed = True
        self.compute_rates()
        self._arm_wake()

    def _unpack_ceiling(self) -> float:
        costs = self.costs
        cap = (costs.unpack_max_cores / costs.unpack_cpu_per_byte
               if costs.unpack_cpu_per_byte > 0 else math.inf)
        if costs.unpack_disk_per_byte > 0:
            cap = min(cap, self.config.disk_write_bw / costs.unpack_disk_per_byte)
        return cap

    def _io_per_work(self, run: TenantRun) -> float:
        """Disk bytes a tenant moves per core-second of progress."""
        workload = run.workload
        io = getattr(workload, 'io_demand', 0.0) or 0.0
        if io <= 0 or workload.cpu_demand <= 0:
            return 0.0
        return io / min(workload.cpu_demand, self.config.cpu_cores)

    def compute_rates(self):
        """
        Nominal rates first (network fair share, unpack ceiling, whole-disk
        commits, tenant demand). CPU is then split between the runtime and the
        pods cgroup by weight, each side scaling its flows proportionally, and
        finally every disk user scales by the same factor if the disk is
        oversubscribed.
        """
        config, costs = self.config, self.costs

        sockets = [t for req in self.inflight for t in req.open_sockets]
        net_share = config.net_bw / len(sockets) if sockets else 0.0
        for transfer in sockets:
            transfer.rate = min(costs.registry_per_socket_cap, net_share)

        unpacks = [job for req in self.inflight for job in req.jobs if job.state == JobState.UNPACKING]
        commits = [job for req in self.inflight for job in req.jobs if job.state == JobState.COMMITTING]
        runs = list(self.workloads)

        ceiling = self._unpack_ceiling()
        for job in unpacks:
            job.unpack_rate = ceiling
        for job in commits:
            job.commit_rate = 1.0
        for run in runs:
            run.rate = min(run.workload.cpu_demand, config.cpu_cores)

        def pull_cpu() -> float:
            used = sum(t.rate for t in sockets) * costs.download_cpu_per_byte
            if costs.unpack_cpu_per_byte > 0:
                used += sum(j.unpack_rate for j in unpacks) * costs.unpack_cpu_per_byte
            return used

        runtime_demand = pull_cpu()
        pod_demand = sum(run.rate for run in runs)
        runtime_alloc, pod_alloc = fair_share(config.cpu_cores, [runtime_demand, pod_demand],
                                              [RUNTIME_CPU_WEIGHT, config.allocatable_cpu])
        if runtime_demand > runtime_alloc:
            scale = runtime_alloc / runtime_demand
            if costs.download_cpu_per_byte > 0:
                for transfer in sockets:
                    transfer.rate *= scale
            if costs.unpack_cpu_per_byte > 0:
                for job in unpacks:
                    job.unpack_rate *= scale
        if pod_demand > pod_alloc:
            scale = pod_alloc / pod_demand
            for run in runs:
                run.rate *= scale

        def disk_load() -> float:
            load = sum(t.rate for t in sockets) * costs.download_disk_per_byte
            if costs.unpack_disk_per_byte > 0:
                load += sum(j.unpack_rate for j in unpacks) * costs.unpack_disk_per_byte
            load += sum(j.commit_rate for j in commits) * config.disk_write_bw
            load += sum(run.rate * self._io_per_work(run) for run in runs)
            return load

        load = disk_load()
        if load > config.disk_write_bw:
            scale = config.disk_write_bw / load
            if costs.download_disk_per_byte > 0:
                for transfer in sockets:
                    transfer.rate *= scale
            if costs.unpack_disk_per_byte > 0:
                for job in unpacks:
                    job.unpack_rate *= scale
            for job in commits:
                job.commit_rate *= scale
            for run in runs:
                if self._io_per_work(run) > 0:
                    run.rate *= scale

        self.cpu_demand = runtime_demand + pod_demand
        self.cpu_used = min(pull_cpu() + sum(run.rate for run in runs), config.cpu_cores)
        self.cpu_util = self.cpu_used / config.cpu_cores
        self.net_rate = sum(t.rate for t in sockets)
        self.disk_rate = disk_load()

        point = GaugePoint(self.now, self.cpu_util, self.net_rate, self.disk_rate,
                           len(self.queue), len(self.inflight))
        if self.gauge_points and self.gauge_points[-1].time == self.now:
            self.gauge_points[-1] = point
        else:
            self.gauge_points.append(point)

    def _next_completion(self):
        best, kind = math.inf, None
        for req in self.inflight:
            if req.manifest_left is not None and req.manifest_left / 1.0 < best:
                best, kind = max(req.manifest_left, 0.0), EventKind.SOCKET_OPENED
            for job in req.jobs:
                if job.state == JobState.DOWNLOADING and job.transfer.rate > 0:
                    t = max(job.transfer.remaining, 0.0) / job.transfer.rate
                    if t < best:
                        best, kind = t, EventKind.LAYER_DONE
                elif job.state == JobState.UNPACKING and job.unpack_rate > 0:
                    t = max(job.unpack_remaining, 0.0) / job.unpack_rate
                    if t < best:
                        best, kind = t, EventKind.UNPACK_DONE
                elif job.state == JobState.COMMITTING and job.commit_rate > 0:
                    t = max(job.commit_left, 0.0) / job.commit_rate
                    if t < best:
                        best, kind = t, EventKind.UNPACK_DONE
        for run in self.workloads:
            if run.rate > 0:
                t = max(run.remaining, 0.0) / run.rate
                if t < best:
                    best, kind = t, EventKind.WORKLOAD_DONE
        return best, kind

    def _arm_wake(self):
        self._wake_epoch += 1
        delay, kind = self._next_completion()
        if kind is None or not math.isfinite(delay):
            return
        epoch = self._wake_epoch

        def wake():
            if epoch == self._wake_epoch:
                self.settle()

        self.sim.schedule_in(delay, kind, wake, {'node': self.node_id})

    def advance(self, dt: float):
        if dt <= 0:
            return
        self.cpu_seconds += self.cpu_used * dt
        for req in self.inflight:
            if req.manifest_left is not None:
                req.manifest_left -= dt
            for job in req.jobs:
                if job.state == JobState.DOWNLOADING:
                    job.transfer.bytes_done += job.transfer.rate * dt
                    job.downloaded_bytes = job.transfer.bytes_done
                elif job.state == JobState.UNPACKING and math.isfinite(job.unpack_rate):
                    job.unpack_done += job.unpack_rate * dt
                elif job.state == JobState.COMMITTING:
                    job.commit_left -= job.commit_rate * dt
        for run in self.workloads:
            run.work_done += run.rate * dt

    def __repr__(self):
        return (f"<NodeRuntime {self.node_id} queue={len(self.queue)} "
                f"inflight={len(self.inflight)} cached={len(self.cache.images)}>")


def build_nodes(sim: Simulation, node_ids: Iterable[str], config: NodeConfig,
                costs: CostModel) -> Dict[str, NodeRuntime]:
    return {node_id: NodeRuntime(node_id, config, costs, sim) for node_id in node_ids}
