import numpy as np
from django.test import SimpleTestCase

from pullsim.sim.domain import MB, CostModel, ImageSpec, LayerSpec, NodeConfig
from pullsim.sim.metrics import TenantWorkload
from pullsim.sim.runtime import NodeRuntime

from .oracle import run_fixed_step

SCENARIOS = 50


def micro_scenario(seed):
    """At most two images of at most two layers: five concurrent flows or fewer."""
    rng = np.random.default_rng(seed)
    config = NodeConfig.local_testbed(
        net_bw=25 * MB, disk_write_bw=100 * MB,
        max_parallel_image_pulls=int(rng.integers(1, 3)),
        manifest_fetch_delay=float(rng.choice([0.0, 0.2])),
    )
    costs = CostModel(
        download_cpu_per_byte=float(rng.choice([0.0, 3 / (25 * MB)])),
        unpack_cpu_per_byte=float(rng.choice([0.0, 1 / (150 * MB)])),
        registry_per_socket_cap=float(rng.choice([25 * MB, 10 * MB])),
        download_disk_per_byte=float(rng.choice([0.0, 1.0])),
        layer_commit_time=float(rng.choice([0.0, 0.3])),
    )
    images = []
    for i in range(int(rng.integers(1, 3))):
        layers = tuple(
            LayerSpec(100 * i + j, int(rng.integers(80, 150)) * MB, int(rng.integers(160, 300)) * MB)
            for j in range(int(rng.integers(1, 3)))
        )
        images.append(ImageSpec(f"img-{i}", layers))
    workload = None
    if rng.random() < 0.3:
        workload = TenantWorkload('tenant', 1.0, float(rng.integers(5, 15)))
    return config, costs, images, workload


def completion_times(seed, fixed_step):
    config, costs, images, workload = micro_scenario(seed)
    node = NodeRuntime('node-1', config, costs)
    requests = [node.submit_pull(img, f"pod-{img.name}") for img in images]
    run = node.add_workload(workload) if workload else None
    if fixed_step:
        run_fixed_step(node)
    else:
        node.sim.run()
    times = [req.finished_at for req in requests]
    if run is not None:
        times.append(run.finished_at)
    return times


class FluidOracleTests(SimpleTestCase):
    def test_event_driven_matches_fixed_step(self):
        for seed in range(SCENARIOS):
            with self.subTest(seed=seed):
                exact = completion_times(seed, fixed_step=False)
                stepped = completion_times(seed, fixed_step=True)
                self.assertEqual(len(exact), len(stepped))
                for t_exact, t_step in zip(exact, stepped):
                    self.assertIsNotNone(t_exact)
                    self.assertLessEqual(abs(t_step - t_exact), 1e-3 * t_exact)
