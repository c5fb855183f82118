"""
Wires one simulated cluster together: nodes, API server, housekeeping,
attack bookkeeping, optional MAGI and samplers, all on one Simulation.
"""
import logging
from typing import Dict, List, Optional, Sequence

from .attacker import AttackExecutor, AttackPlan, AttackTracker
from .control_plane import ApiServer, DEFAULT_TEARDOWN_DELAY
from .domain import CostModel, NodeConfig
from .engine import EventKind, Simulation
from .gc import Housekeeper
from .magi import BlacklistScope, DEFAULT_REACT_LATENCY, MagiMaster, install_magi
from .metrics import MetricsSampler, MetricsTrace, TenantWorkload
from .runtime import NodeRuntime, TenantRun, build_nodes

logger = logging.getLogger('pullsim.runner')


def node_names(count: int) -> List[str]:
    return [f"node-{i}" for i in range(1, count + 1)]


class Cluster:
    def __init__(self, node_ids: Sequence[str], config: NodeConfig, costs: CostModel,
                 name: str = 'trial', housekeeping: bool = True, api_latency: float = 0.0,
                 teardown_delay: float = DEFAULT_TEARDOWN_DELAY):
        self.sim = Simulation(name)
        self.config = config
        self.costs = costs
        self.nodes: Dict[str, NodeRuntime] = build_nodes(self.sim, node_ids, config, costs)
        self.api = ApiServer(self.sim, self.nodes, api_latency, teardown_delay)
        self.tracker = AttackTracker(self.api, self.nodes)
        self.housekeepers: Dict[str, Housekeeper] = {}
        if housekeeping:
            for node_id, node in self.nodes.items():
                self.housekeepers[node_id] = Housekeeper(node, self.api)
                self.housekeepers[node_id].start()
        self.magi: Optional[MagiMaster] = None
        self.samplers: Dict[str, MetricsSampler] = {}
        self.tenant_runs: List[TenantRun] = []

    def enable_magi(self, react_latency: float = DEFAULT_REACT_LATENCY,
                    blacklist_scope: BlacklistScope = BlacklistScope.ANY_QUEUED,
                    audit_delay: float = 0.0) -> MagiMaster:
        self.magi = install_magi(self.sim, self.api, react_latency, blacklist_scope, audit_delay)
        return self.magi

    def enable_sampling(self, interval: float):
        for node_id, node in self.nodes.items():
            self.samplers[node_id] = MetricsSampler(node, interval)
            self.samplers[node_id].start()

    def launch_attack(self, plan: AttackPlan) -> AttackExecutor:
        for node_id in plan.target_nodes:
            self.api.node(node_id)
        executor = AttackExecutor(self.sim, self.api, plan, self.tracker)
        executor.schedule()
        return executor

    def start_workload(self, node_id: str, workload: TenantWorkload, at: float = 0.0):
        node = self.api.node(node_id)

        def begin():
            self.tenant_runs.append(node.add_workload(workload))

        self.sim.schedule(at, EventKind.API_REQUEST, begin, {'node': node_id, 'workload': workload.name})

    def run(self, horizon: Optional[float] = None) -> int:
        return self.sim.run(horizon)

    def traces(self) -> Dict[str, MetricsTrace]:
        if self.samplers:
            return {node_id: sampler.finish() for node_id, sampler in self.samplers.items()}
        return {node_id: MetricsTrace(node_id, None, [], list(node.gauge_points))
                for node_id, node in self.nodes.items()}
