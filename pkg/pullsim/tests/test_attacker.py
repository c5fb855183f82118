from django.test import SimpleTestCase

from pullsim.sim.attacker import ROLE_LABEL, AttackPlan, AttackStrategy, run_attack
from pullsim.sim.cluster import Cluster
from pullsim.sim.domain import (
    MB, CostModel, ImageSet, ImageSetKind, ImageSpec, LayerSpec, NodeConfig, generate_image_set,
)
from pullsim.sim.exceptions import EmptyImageSet
from pullsim.sim.metrics import scheduling_delay


def small_set():
    base = LayerSpec(1, 25 * MB, 50 * MB)
    return ImageSet.from_specs([
        ImageSpec(f"img-{k}", (base, *[LayerSpec(10 * k + j, 50 * MB, 100 * MB) for j in range(k)]))
        for k in (3, 1, 2)
    ])


class AttackScriptTests(SimpleTestCase):
    def test_force_delete_cycle_shape(self):
        images = generate_image_set(ImageSetKind.VARIABLE_GB)
        steps = run_attack(AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, images))
        self.assertEqual(len(steps), 14)
        self.assertEqual([s.action for s in steps[:4]], ['create', 'delete', 'create', 'delete'])
        self.assertEqual([s.time for s in steps[:4]], [0.0, 2.0, 2.0, 4.0])
        self.assertTrue(all(s.force for s in steps if s.action == 'delete'))
        self.assertEqual(steps[0].target, steps[1].target)

    def test_no_delete_only_creates(self):
        steps = run_attack(AttackPlan(AttackStrategy.NO_DELETE, small_set()))
        self.assertEqual([s.action for s in steps], ['create'] * 3)

    def test_sequential_goes_smallest_first(self):
        steps = run_attack(AttackPlan(AttackStrategy.SEQUENTIAL_CYCLE, small_set()))
        creates = [s.image.name for s in steps if s.action == 'create']
        self.assertEqual(creates, ['img-1', 'img-2', 'img-3'])

    def test_shuffle_is_seeded(self):
        images = generate_image_set(ImageSetKind.VARIABLE_MB)
        first = AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, images, shuffle_seed=4).ordered_images()
        again = AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, images, shuffle_seed=4).ordered_images()
        other = AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, images, shuffle_seed=5).ordered_images()
        self.assertEqual(first, again)
        self.assertNotEqual(first, other)
        self.assertEqual(sorted(i.name for i in first), sorted(images.names))

    def test_deployment_patch_script(self):
        images = generate_image_set(ImageSetKind.VARIABLE_GB)
        steps = run_attack(AttackPlan(AttackStrategy.DEPLOYMENT_PATCH, images, patch_interval=30.0))
        self.assertEqual(steps[0].action, 'create_deployment')
        self.assertEqual([s.time for s in steps[1:]], [30.0 * i for i in range(1, 7)])

    def test_every_target_node_is_hit(self):
        plan = AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, small_set(), target_nodes=('node-1', 'node-2'))
        creates = [s for s in run_attack(plan) if s.action == 'create']
        self.assertEqual({s.node_id for s in creates}, {'node-1', 'node-2'})
        self.assertEqual(len(creates), 6)

    def test_empty_image_set(self):
        with self.assertRaises(EmptyImageSet):
            run_attack(AttackPlan(AttackStrategy.FORCE_DELETE_CYCLE, ImageSet(())))

    def test_plan_validation(self):
        with self.assertRaises(ValueError):
            AttackPlan(AttackStrategy.NO_DELETE, small_set(), target_nodes=())


class AttackRunTests(SimpleTestCase):
    def run_cluster(self, strategy=AttackStrategy.FORCE_DELETE_CYCLE):
        cluster = Cluster(['node-1'], NodeConfig.local_testbed(), CostModel(), housekeeping=False)
        cluster.launch_attack(AttackPlan(strategy, small_set()))
        cluster.run()
        return cluster

    def test_one_live_attack_pod_at_a_time(self):
        cluster = self.run_cluster()
        pods = sorted(cluster.api.pods(), key=lambda pod: pod.created_at)
        self.assertEqual(len(pods), 3)
        for current, following in zip(pods, pods[1:]):
            self.assertLessEqual(current.gone_at, following.created_at)
        self.assertEqual(cluster.api.live_pods(ROLE_LABEL), [])

    def test_window_covers_every_orphaned_pull(self):
        cluster = self.run_cluster()
        images = small_set()
        window = cluster.tracker.window('node-1')
        self.assertEqual(window.start, 0.0)
        self.assertEqual(window.pending, 0)
        self.assertAlmostEqual(window.compressed_bytes, images.dedup_compressed(), delta=1)
        last = max(req.finished_at for req in cluster.nodes['node-1'].requests)
        self.assertAlmostEqual(window.end, last)
        self.assertGreater(scheduling_delay(window.duration, window.compressed_bytes / 1e9), 0)
        self.assertEqual(cluster.tracker.attacked_nodes(), ['node-1'])

    def test_no_delete_keeps_pods(self):
        cluster = self.run_cluster(AttackStrategy.NO_DELETE)
        self.assertEqual(len(cluster.api.live_pods(ROLE_LABEL)), 3)
