"""
Trial execution: builds a cluster per (trial, variant), runs it, summarizes
it and writes event logs, gauge CSVs and the aggregate summary.
"""
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .cluster import Cluster
from .control_plane import AuditVerb
from .domain import GB, MB, CostModel, PodSpec, generate_cutoff_images
from .engine import EventKind
from .magi import OVERHEAD_ANNOTATION, cutoff_sweep
from .metrics import MetricsTrace, aggregate, cpu_average, scheduling_delay, tenant_slowdown
from .scenario import ScenarioConfig, VARIANTS

logger = logging.getLogger('pullsim.runner')


def trial_seeds(seed: int, trials: int) -> List[int]:
    """Independent per-trial seeds derived from the scenario seed."""
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(trials)]


@dataclass
class TrialResult:
    index: int
    seed: int
    variant: str
    summary: Dict[str, object]
    log_text: str = ''
    traces: Dict[str, MetricsTrace] = field(default_factory=dict)

    @property
    def log_digest(self) -> str:
        return hashlib.sha256(self.log_text.encode()).hexdigest()


def summarize(cluster: Cluster, config: ScenarioConfig, variant: str) -> Dict[str, object]:
    sim = cluster.sim
    delays, durations, cpus, injected = [], [], [], []
    for node_id in cluster.tracker.attacked_nodes():
        window = cluster.tracker.window(node_id)
        if window.end is None or window.end <= window.start:
            continue
        durations.append(window.duration)
        injected.append(window.compressed_bytes)
        if window.compressed_bytes > 0:
            delays.append(scheduling_delay(window.duration, window.compressed_bytes / GB))
        cpus.append(cpu_average(cluster.nodes[node_id].gauge_points, (window.start, window.end)))
    if not cpus and sim.clock > 0:
        cpus = [cpu_average(node.gauge_points, (0.0, sim.clock)) for node in cluster.nodes.values()]

    gc_firings = [f for hk in cluster.housekeepers.values() for f in hk.gc_firings]
    evictions = [f for hk in cluster.housekeepers.values() for f in hk.eviction_firings]

    outcomes: Dict[str, int] = {}
    if cluster.magi is not None:
        for agent in cluster.magi.agents.values():
            for outcome, count in agent.outcome_counts().items():
                outcomes[outcome] = outcomes.get(outcome, 0) + count

    slowdowns = {}
    for run in cluster.tenant_runs:
        slowdowns[run.workload.name] = tenant_slowdown(run, cluster.config)

    legit = [obj for obj in cluster.api.pods() if obj.spec.labels.get('role') == 'legit']
    legit_completion = None
    if legit and all(obj.running_at is not None for obj in legit):
        legit_completion = max(obj.running_at for obj in legit)

    summary = {
        'sd': float(np.mean(delays)) if delays else None,
        'cpu_avg': float(np.mean(cpus)) * 100 if cpus else None,
        'attack_duration': float(np.mean(durations)) if durations else None,
        'attack_compressed_gb': float(np.mean(injected)) / GB if injected else None,
        'gc_firings': len(gc_firings),
        'gc_max_deleted': max((len(f.deleted) for f in gc_firings), default=0),
        'evictions': sum(len(f.evicted) for f in evictions),
        'usage_after_eviction': min((f.usage_after for f in evictions if f.evicted), default=None),
        'force_deletes': sum(1 for event in cluster.api.audit if event.verb is AuditVerb.FORCE_DELETE),
        'magi_outcomes': outcomes,
        'tenant_slowdown': slowdowns,
        'legit_completion': legit_completion,
        'sim_time': sim.clock,
        'events': len(sim.log),
    }
    if variant == 'mitigated':
        summary['magi_overhead'] = dict(OVERHEAD_ANNOTATION)
    return summary


def run_trial(config: ScenarioConfig, costs: CostModel, index: int, seed: int, variant: str,
              horizon: Optional[float] = None) -> TrialResult:
    name = f"{config.name}#{index}:{variant}"
    cluster = Cluster(config.node_ids, config.node_config, costs, name=name)
    if config.sample_interval:
        cluster.enable_sampling(config.sample_interval)
    if variant == 'mitigated':
        cluster.enable_magi(config.magi.react_latency, config.magi.blacklist_scope, config.magi.audit_delay)
    if variant in ('attack', 'mitigated'):
        cluster.launch_attack(config.attack_plan(seed))

    for deployment in config.legit:
        spec = PodSpec(f"legit-{deployment.name}", deployment.image, deployment.pull_policy,
                       deployment.node_id, {'role': 'legit'})
        cluster.sim.schedule(deployment.at, EventKind.API_REQUEST,
                             partial(cluster.api.submit, partial(cluster.api.create_pod, spec)),
                             {'object': spec.pod_id})
    for spec in config.workloads:
        cluster.start_workload(spec.node_id, spec.workload, spec.at)

    cluster.run(config.horizon or horizon)
    summary = summarize(cluster, config, variant)
    logger.info(f"{name} done at t={cluster.sim.clock:.1f}s sd={summary['sd']} cpu={summary['cpu_avg']}")
    return TrialResult(index, seed, variant, summary, cluster.sim.log_text(), cluster.traces())


def run_cutoff(config: ScenarioConfig) -> List[TrialResult]:
    sweep = config.sweep
    images = generate_cutoff_images(sweep.start, sweep.step, sweep.count, config.seed)
    results = []
    for index, throughput in enumerate(sweep.throughputs):
        result = cutoff_sweep(images, throughput, sweep.react_latency, config.node_config)
        summary = {
            'throughput_mb_s': throughput / MB,
            'react_latency': sweep.react_latency,
            'boundary_mb': result.boundary_bytes / MB if result.boundary_bytes else None,
            'largest_completed_mb': result.largest_completed / MB if result.largest_completed else None,
            'killed': sum(1 for p in result.points if p.outcome.value == 'killed'),
            'completed': sum(1 for p in result.points if p.outcome.value == 'too_late'),
        }
        log = ''.join(f"{p.compressed_bytes}\t{p.outcome.value}\t{p.downloaded_bytes}\n" for p in result.points)
        results.append(TrialResult(index, config.seed, 'sweep', summary, log))
    return results


def _flatten(summary: Dict[str, object]) -> Dict[str, object]:
    flat = {}
    for key, value in summary.items():
        if isinstance(value, dict):
            for sub, inner in value.items():
                flat[f"{key}.{sub}"] = inner
        else:
            flat[key] = value
    return flat


@dataclass
class RunReport:
    config: ScenarioConfig
    results: List[TrialResult]
    output_dir: Optional[Path] = None

    def by_variant(self) -> Dict[str, List[TrialResult]]:
        grouped: Dict[str, List[TrialResult]] = {}
        for result in self.results:
            grouped.setdefault(result.variant, []).append(result)
        return grouped

    def aggregate(self) -> Dict[str, object]:
        return {
            variant: {
                'aggregate': aggregate(_flatten(r.summary) for r in results),
                'trials': [dict(r.summary, trial=r.index, seed=r.seed) for r in results],
            }
            for variant, results in self.by_variant().items()
        }

    def summary_document(self) -> Dict[str, object]:
        return {
            'scenario': self.config.name,
            'kind': self.config.kind,
            'trials': self.config.trials,
            'seed': self.config.seed,
            'variants': self.aggregate(),
        }


class ScenarioRunner:
    """Runs every (trial, variant) of a scenario and writes its outputs."""

    def __init__(self, config: ScenarioConfig, output_dir=None, workers: int = 1,
                 summary_only: bool = False, horizon: Optional[float] = None):
        self.config = config
        self.output_dir = Path(output_dir) if output_dir else None
        self.workers = max(1, workers)
        self.summary_only = summary_only
        self.horizon = horizon

    def run(self) -> RunReport:
        config = self.config
        if config.kind == 'cutoff_sweep':
            report = RunReport(config, run_cutoff(config))
            self.write(report)
            return report

        # calibration happens once, here, before worker threads start
        costs = config.resolve_costs()
        seeds = trial_seeds(config.seed, config.trials)
        jobs = [(index, seed, variant) for index, seed in enumerate(seeds)
                for variant in sorted(config.variants, key=VARIANTS.index)]
        logger.info(f"{config.name}: {len(jobs)} trial runs on {self.workers} workers")

        if self.workers == 1:
            results = [run_trial(config, costs, i, s, v, self.horizon) for i, s, v in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(run_trial, config, costs, i, s, v, self.horizon) for i, s, v in jobs]
                results = [future.result() for future in futures]
        results.sort(key=lambda r: (r.index, VARIANTS.index(r.variant)))
        report = RunReport(config, results)
        self.write(report)
        return report

    def write(self, report: RunReport):
        if self.output_dir is None:
            return
        root = self.output_dir / self.config.name
        root.mkdir(parents=True, exist_ok=True)
        report.output_dir = root
        if not self.summary_only:
            for result in report.results:
                trial_dir = root / f"trial-{result.index:03d}" / result.variant
                trial_dir.mkdir(parents=True, exist_ok=True)
                (trial_dir / 'events.log').write_text(result.log_text)
                for node_id, trace in result.traces.items():
                    if trace.samples:
                        trace.write_csv(trial_dir / f"{node_id}.csv")
        (root / 'summary.json').write_text(json.dumps(report.summary_document(), indent=2, sort_keys=True))


def replay_check(log_a, log_b) -> bool:
    """True iff both event logs are byte-identical. OSError propagates."""
    return Path(log_a).read_bytes() == Path(log_b).read_bytes()
