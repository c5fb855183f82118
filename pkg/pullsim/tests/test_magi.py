from django.test import SimpleTestCase

from pullsim.sim.control_plane import ApiServer
from pullsim.sim.domain import MB, CostModel, ImageSpec, LayerSpec, NodeConfig, PodSpec, PullPolicy, generate_cutoff_images
from pullsim.sim.engine import Simulation
from pullsim.sim.magi import BlacklistScope, MagiOutcome, cutoff_sweep, install_magi
from pullsim.sim.runtime import PullState, build_nodes

BIG = ImageSpec('big', (LayerSpec(1, 1_250 * MB, 1_500 * MB),))
SMALL = ImageSpec('small', (LayerSpec(2, 125 * MB, 150 * MB),))
OTHER = ImageSpec('other', (LayerSpec(3, 125 * MB, 150 * MB),))


def protected_node(scope=BlacklistScope.ANY_QUEUED, react_latency=2.0):
    sim = Simulation()
    nodes = build_nodes(sim, ['node-1'], NodeConfig.local_testbed(manifest_fetch_delay=0.0), CostModel())
    api = ApiServer(sim, nodes)
    master = install_magi(sim, api, react_latency, scope)
    return sim, api, master, master.agents['node-1']


def outcomes(agent):
    return [d.outcome for d in agent.decisions]


class MagiKillTests(SimpleTestCase):
    def test_orphaned_download_is_killed(self):
        sim, api, master, agent = protected_node()
        api.create_pod(PodSpec('victim', BIG, PullPolicy.ALWAYS))
        api.delete_pod('victim', force=True)
        sim.run()
        self.assertEqual(len(master.alerts), 1)
        self.assertEqual(outcomes(agent), [MagiOutcome.KILL_SCHEDULED, MagiOutcome.KILLED])
        req = api.node('node-1').requests[0]
        self.assertEqual(req.state, PullState.CANCELLED)
        self.assertEqual(req.cancel_reason, 'magi_killed')
        self.assertAlmostEqual(req.downloaded_bytes, 250 * MB, delta=1)
        self.assertFalse(api.node('node-1').cache.has_image('big'))

    def test_download_finished_before_reaction_is_too_late(self):
        sim, api, master, agent = protected_node()
        api.create_pod(PodSpec('victim', SMALL, PullPolicy.ALWAYS))
        api.delete_pod('victim', force=True)
        sim.run()
        self.assertEqual(outcomes(agent)[-1], MagiOutcome.TOO_LATE)
        self.assertTrue(api.node('node-1').cache.has_image('small'))

    def test_queued_image_is_blacklisted_and_killed_on_dequeue(self):
        sim, api, master, agent = protected_node()
        api.create_pod(PodSpec('first', BIG, PullPolicy.ALWAYS))
        api.create_pod(PodSpec('second', SMALL, PullPolicy.ALWAYS))
        api.delete_pod('second', force=True)
        sim.run_until(0.0)
        self.assertIn('small', agent.blacklist)
        sim.run()
        self.assertEqual(outcomes(agent), [MagiOutcome.BLACKLISTED, MagiOutcome.KILLED_ON_DEQUEUE])
        req = api.node('node-1').requests[1]
        self.assertEqual(req.state, PullState.CANCELLED)
        self.assertEqual(req.downloaded_bytes, 0)
        self.assertEqual(agent.outcome_counts(), {'blacklisted': 1, 'killed_on_dequeue': 1})

    def test_behind_queued_scope_misses_the_head_of_the_queue(self):
        sim, api, master, agent = protected_node(BlacklistScope.BEHIND_QUEUED)
        api.create_pod(PodSpec('first', BIG, PullPolicy.ALWAYS))
        api.create_pod(PodSpec('second', SMALL, PullPolicy.ALWAYS))
        api.create_pod(PodSpec('third', OTHER, PullPolicy.ALWAYS))
        api.delete_pod('second', force=True)
        api.delete_pod('third', force=True)
        sim.run_until(0.0)
        self.assertEqual(outcomes(agent), [MagiOutcome.MISSED, MagiOutcome.BLACKLISTED])
        sim.run()
        node = api.node('node-1')
        self.assertTrue(node.cache.has_image('small'))
        self.assertFalse(node.cache.has_image('other'))

    def test_live_requester_is_spared(self):
        sim, api, master, agent = protected_node()
        api.create_pod(PodSpec('a', BIG, PullPolicy.ALWAYS))
        api.create_pod(PodSpec('b', BIG, PullPolicy.ALWAYS))
        api.delete_pod('a', force=True)
        sim.run()
        self.assertEqual(outcomes(agent), [MagiOutcome.SPARED_LIVE_REQUESTER])
        self.assertTrue(api.node('node-1').cache.has_image('big'))

    def test_completed_pull_raises_no_alert(self):
        sim, api, master, agent = protected_node()
        api.create_pod(PodSpec('web', SMALL, PullPolicy.ALWAYS))
        sim.run()
        self.assertEqual(len(master.table), 0)
        api.delete_pod('web', force=True)
        self.assertEqual(master.alerts, [])

    def test_negative_latency_rejected(self):
        with self.assertRaises(ValueError):
            protected_node(react_latency=-1.0)


class CutoffSweepTests(SimpleTestCase):
    def test_boundary_at_full_link_speed(self):
        result = cutoff_sweep(generate_cutoff_images(count=40), throughput=125 * MB, react_latency=2.0)
        self.assertEqual(result.boundary_bytes, 253 * MB)
        self.assertEqual(result.largest_completed, 248 * MB)

    def test_boundary_at_half_link_speed(self):
        result = cutoff_sweep(generate_cutoff_images(count=20), throughput=62.5 * MB, react_latency=2.0)
        self.assertEqual(result.boundary_bytes, 128 * MB)
        self.assertEqual(result.largest_completed, 123 * MB)

    def test_every_larger_image_is_killed(self):
        result = cutoff_sweep(generate_cutoff_images(count=40), throughput=125 * MB)
        for point in result.points:
            expected = MagiOutcome.KILLED if point.compressed_bytes > 250 * MB else MagiOutcome.TOO_LATE
            self.assertEqual(point.outcome, expected)
