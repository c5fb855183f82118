"""
Quantities reported for a run: scheduling delay, time-weighted CPU averages,
sampled gauge series and tenant-workload slowdown.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import GB, MB, NodeConfig
from .engine import EventKind
from .exceptions import EmptyWindow, ZeroBytes
from .runtime import GaugePoint, NodeRuntime, TenantRun

logger = logging.getLogger('pullsim.metrics')

CSV_COLUMNS = ('time_s', 'cpu_util', 'net_mb_s', 'disk_write_mb_s', 'disk_used_pct', 'queue_len', 'active_pulls')


@dataclass(frozen=True)
class TenantWorkload:
    name: str
    cpu_demand: float
    total_work: float
    io_demand: float = 0.0

    def __post_init__(self):
        if self.total_work <= 0:
            raise ValueError(f"workload {self.name}: total_work must be > 0")
        if self.cpu_demand < 0 or self.io_demand < 0:
            raise ValueError(f"workload {self.name}: demands must be >= 0")


@dataclass(frozen=True)
class Sample:
    time: float
    cpu_util: float
    net_rate: float
    disk_rate: float
    disk_used_pct: float
    queue_len: int
    active_pulls: int

    def as_row(self) -> Tuple:
        return (f"{self.time:.3f}", f"{self.cpu_util:.6f}", f"{self.net_rate / MB:.6f}",
                f"{self.disk_rate / MB:.6f}", f"{self.disk_used_pct * 100:.4f}",
                self.queue_len, self.active_pulls)


@dataclass
class MetricsTrace:
    """Sampled gauges of one node plus the exact rate segments behind them."""

    node_id: str
    sample_interval: Optional[float] = None
    samples: List[Sample] = field(default_factory=list)
    segments: List[GaugePoint] = field(default_factory=list)

    def add(self, sample: Sample):
        if self.samples and sample.time <= self.samples[-1].time:
            return
        self.samples.append(sample)

    def cpu_average(self, window: Tuple[float, float]) -> float:
        return cpu_average(self.segments, window)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open('w', newline='') as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for sample in self.samples:
                writer.writerow(sample.as_row())
        return path


class MetricsSampler:
    """Takes a gauge sample of a node every ``interval`` seconds while the run is busy."""

    def __init__(self, node: NodeRuntime, interval: float = 1.0):
        self.node = node
        self.trace = MetricsTrace(node.node_id, interval)

    def start(self):
        self.node.sim.every(self.trace.sample_interval, EventKind.METRICS_SAMPLE, self.sample,
                            start=self.node.now, payload={'node': self.node.node_id})

    def sample(self):
        node = self.node
        self.trace.add(Sample(node.now, node.cpu_util, node.net_rate, node.disk_rate,
                              node.disk_usage_pct(), len(node.queue), len(node.inflight)))

    def finish(self) -> MetricsTrace:
        self.trace.segments = list(self.node.gauge_points)
        return self.trace


def scheduling_delay(duration_s: float, compressed_gb: float) -> float:
    """Seconds of blocked pulling per compressed GB injected."""
    if compressed_gb <= 0:
        raise ZeroBytes("scheduling delay needs a positive compressed size")
    return duration_s / compressed_gb


def cpu_average(points: Sequence[GaugePoint], window: Tuple[float, float]) -> float:
    """Time-weighted mean of the piecewise-constant cpu_util over ``window`` (a fraction)."""
    start, end = window
    if end <= start:
        raise EmptyWindow(f"window [{start}, {end}] is empty")
    if not points:
        return 0.0
    times = np.array([p.time for p in points], dtype=float)
    values = np.array([p.cpu_util for p in points], dtype=float)

    # value holding on [times[i], times[i+1]); the last one holds until ``end``
    edges = np.append(times, max(end, times[-1]))
    lo = np.clip(edges[:-1], start, end)
    hi = np.clip(edges[1:], start, end)
    # time before the first point counts as idle
    weights = np.maximum(hi - lo, 0.0)
    return float(np.dot(weights, values)) / (end - start)


def uncontended_duration(config: NodeConfig, workload: TenantWorkload) -> float:
    """Completion time of ``workload`` on an otherwise idle node."""
    if workload.cpu_demand == 0:
        return 0.0
    rate = min(workload.cpu_demand, config.cpu_cores)
    if workload.io_demand > config.disk_write_bw:
        rate *= config.disk_write_bw / workload.io_demand
    return workload.total_work / rate


def run_tenant_workload(node: NodeRuntime, workload: TenantWorkload) -> float:
    """
    Start ``workload`` on ``node`` now and drive the simulation until it
    completes. Returns its completion time.
    """
    if workload.cpu_demand == 0:
        node.sim.record(EventKind.WORKLOAD_DONE, node=node.node_id, workload=workload.name, duration=0.0)
        return node.now
    run = node.add_workload(workload)
    while run.finished_at is None and node.sim.queue:
        node.sim.step()
    if run.finished_at is None:
        raise RuntimeError(f"workload {workload.name} never completed")
    return run.finished_at


def tenant_slowdown(run: TenantRun, config: NodeConfig) -> float:
    baseline = uncontended_duration(config, run.workload)
    if run.finished_at is None or baseline == 0:
        return 1.0
    return (run.finished_at - run.started_at) / baseline


def aggregate(summaries: Iterable[Mapping[str, object]]) -> Dict[str, Dict[str, float]]:
    """Mean and standard deviation of every numeric summary key across trials."""
    summaries = list(summaries)
    keys = sorted({key for summary in summaries for key, value in summary.items()
                   if isinstance(value, (int, float)) and not isinstance(value, bool)})
    result = {}
    for key in keys:
        values = np.array([summary[key] for summary in summaries
                           if isinstance(summary.get(key), (int, float))], dtype=float)
        result[key] = {'mean': float(values.mean()), 'std': float(values.std()), 'n': int(values.size)}
    return result


def to_gb(num_bytes: float) -> float:
    return num_bytes / GB
