from pathlib import Path

from django.test import SimpleTestCase

import pullsim
from pullsim.sim.attacker import AttackStrategy
from pullsim.sim.domain import GB, MB, SlotRelease
from pullsim.sim.exceptions import ConfigParseError, ScenarioValidationError
from pullsim.sim.magi import BlacklistScope
from pullsim.sim.scenario import (
    GKE_SOCKET_CAP, load_scenario, parse_layers, parse_quantity, parse_scenario,
)

SCENARIO_DIR = Path(pullsim.__file__).resolve().parent / 'scenarios'

MINIMAL = """
scenario:
  name: tiny
  trials: 2
  seed: 9

node:
  profile: local_testbed
  max_parallel_image_pulls: 2
  disk_capacity: 50 GB
  gc_high: 80 %
  gc_low: 75 %
  slot_release: on_download_done

images:
  set: VariableMB

attack:
  strategy: ForceDeleteCycle
  inter_step_wait: 1500 ms
  shuffle: yes
"""


def scenario(extra='', base=MINIMAL):
    return parse_scenario(base + extra)


class QuantityTests(SimpleTestCase):
    def test_units(self):
        self.assertEqual(parse_quantity('2.5 GB', 'bytes'), 2.5 * GB)
        self.assertEqual(parse_quantity('1 Gbit/s', 'rate'), 125 * MB)
        self.assertEqual(parse_quantity('500 ms', 'duration'), 0.5)
        self.assertEqual(parse_quantity('2 min', 'duration'), 120)
        self.assertAlmostEqual(parse_quantity('85 %', 'percent'), 0.85)

    def test_missing_or_foreign_unit(self):
        for text, kind in (('5', 'bytes'), ('5 MB', 'duration'), ('fast', 'rate')):
            with self.subTest(text=text):
                with self.assertRaises(ConfigParseError):
                    parse_quantity(text, kind)

    def test_layer_lists(self):
        self.assertEqual(parse_layers('2 x 1 GB, 500 MB'), [GB, GB, 500 * MB])
        with self.assertRaises(ConfigParseError):
            parse_layers(' , ')


class ParseScenarioTests(SimpleTestCase):
    def test_minimal_scenario(self):
        config = scenario()
        self.assertEqual((config.name, config.trials, config.seed), ('tiny', 2, 9))
        self.assertEqual(config.node_config.max_parallel_image_pulls, 2)
        self.assertEqual(config.node_config.disk_capacity_bytes, 50 * GB)
        self.assertAlmostEqual(config.node_config.gc_high_pct, 0.80)
        self.assertIs(config.node_config.slot_release, SlotRelease.ON_DOWNLOAD_DONE)
        self.assertEqual(len(config.image_set), 40)
        self.assertEqual(config.variants, ('attack',))
        self.assertEqual(config.sample_interval, 1.0)

    def test_attack_plan_uses_trial_seed_only_when_shuffled(self):
        config = scenario()
        plan = config.attack_plan(123)
        self.assertEqual(plan.strategy, AttackStrategy.FORCE_DELETE_CYCLE)
        self.assertEqual(plan.shuffle_seed, 123)
        self.assertEqual(plan.inter_step_wait, 1.5)
        self.assertEqual(plan.target_nodes, ('node-1',))
        unshuffled = scenario(base=MINIMAL.replace('shuffle: yes', 'shuffle: no'))
        self.assertIsNone(unshuffled.attack_plan(123).shuffle_seed)

    def test_magi_block_selects_mitigated_variant(self):
        config = scenario("\nmagi:\n  react_latency: 3 s\n  blacklist_scope: behind_queued\n")
        self.assertEqual(config.variants, ('mitigated',))
        self.assertEqual(config.magi.react_latency, 3.0)
        self.assertIs(config.magi.blacklist_scope, BlacklistScope.BEHIND_QUEUED)

    def test_custom_images_share_the_base(self):
        config = parse_scenario("""
scenario:
  name: custom
images:
  set: custom
  base: 1 GB
  custom:
    - name: a
      layers: 2 x 100 MB
    - name: registry.local/b:1
      layers: [300 MB]
attack:
  strategy: NoDelete
""")
        self.assertEqual(config.image_set.names, ['a', 'registry.local/b:1'])
        self.assertIsNotNone(config.image_set.shared_base)
        self.assertEqual(config.image_set.by_name('a').total_uncompressed, 1_200 * MB)

    def test_legit_copies_and_workloads(self):
        config = scenario("""
legit:
  web:
    layers: 3 x 60 MB
    copies: 3
    at: 10 s
workloads:
  build:
    cpu_demand: 2 cores
    total_work: 100 core-s
    io_demand: 20 MB/s
""")
        self.assertEqual([d.name for d in config.legit], ['web-0', 'web-1', 'web-2'])
        self.assertEqual(config.legit[0].at, 10.0)
        self.assertEqual(config.workloads[0].workload.total_work, 100.0)
        self.assertEqual(config.workloads[0].workload.io_demand, 20 * MB)

    def test_yaml_scalars_and_lists(self):
        config = parse_scenario("""
scenario:
  name: typed
  trials: 3
  variants: [baseline, attack]
images:
  set: VariableGB
attack:
  strategy: ForceDeleteCycle
  shuffle: true
  target_nodes: [node-1]
""")
        self.assertEqual(config.trials, 3)
        self.assertEqual(config.variants, ('baseline', 'attack'))
        self.assertEqual(config.attack.target_nodes, ('node-1',))
        self.assertTrue(config.attack.shuffle)

    def test_gke_profile_caps_sockets(self):
        config = parse_scenario("scenario:\n  name: g\nnode:\n  profile: gke\n")
        self.assertEqual(config.resolve_costs().registry_per_socket_cap, GKE_SOCKET_CAP)
        self.assertEqual(config.node_config.disk_write_bw, 120 * MB)
        self.assertEqual(config.variants, ('baseline',))

    def test_explicit_costs(self):
        config = scenario("""
costs:
  download_cpu_per_byte: 2 core-s/GB
  download_disk_per_byte: 1.0
  layer_commit_time: 100 ms
""")
        costs = config.resolve_costs()
        self.assertAlmostEqual(costs.download_cpu_per_byte, 2 / GB)
        self.assertEqual(costs.download_disk_per_byte, 1.0)
        self.assertEqual(costs.layer_commit_time, 0.1)

    def test_reserved_cpu(self):
        config = scenario(base=MINIMAL.replace('max_parallel_image_pulls: 2',
                                               'max_parallel_image_pulls: 2\n  reserved_cpu: 0.5 cores'))
        self.assertEqual(config.node_config.reserved_cpu, 0.5)


class ScenarioErrorTests(SimpleTestCase):
    def test_parse_errors(self):
        broken = {
            'no scenario block': "node:\n  cpu_cores: 2 cores\n",
            'no name': "scenario:\n  trials: 1\n",
            'unknown key': MINIMAL + "\nmagi:\n  speed: 3\n",
            'unknown block': MINIMAL + "\nextras:\n  a: 1\n",
            'missing unit': MINIMAL.replace('inter_step_wait: 1500 ms', 'inter_step_wait: 2'),
            'bad strategy': MINIMAL.replace('ForceDeleteCycle', 'Sneaky'),
            'not a mapping': "- scenario\n- node\n",
            'malformed yaml': "scenario:\n  name: [x\n",
            'block is a list': "scenario:\n  - name\n",
            'nested value': MINIMAL.replace('seed: 9', 'seed:\n    value: 9'),
            'bad count': MINIMAL.replace('trials: 2', 'trials: two'),
        }
        for label, text in broken.items():
            with self.subTest(label):
                with self.assertRaises(ConfigParseError):
                    parse_scenario(text)

    def test_validation_errors(self):
        invalid = {
            'thresholds': MINIMAL.replace('gc_low: 75 %', 'gc_low: 95 %'),
            'trials': MINIMAL.replace('trials: 2', 'trials: 0'),
            'profile': MINIMAL.replace('profile: local_testbed', 'profile: laptop'),
            'reserved': MINIMAL.replace('max_parallel_image_pulls: 2', 'reserved_cpu: 2 cores'),
            'variant': MINIMAL.replace('seed: 9', 'seed: 9\n  variants: chaos'),
            'target': MINIMAL + "  target_nodes: node-7\n",
            'attack without images': "scenario:\n  name: x\nattack:\n  strategy: NoDelete\n",
            'variant without attack': "scenario:\n  name: x\n  variants: attack\n",
            'kind': "scenario:\n  name: x\n  kind: benchmark\n",
            'sweep block': "scenario:\n  name: x\n  kind: cutoff_sweep\n",
        }
        for label, text in invalid.items():
            with self.subTest(label):
                with self.assertRaises(ScenarioValidationError):
                    parse_scenario(text)


class BundledScenarioTests(SimpleTestCase):
    def test_every_bundled_scenario_parses(self):
        paths = sorted(SCENARIO_DIR.glob('*.yaml'))
        self.assertGreaterEqual(len(paths), 13)
        for path in paths:
            with self.subTest(path.name):
                config = load_scenario(path)
                self.assertEqual(config.name, path.stem)

    def test_magi_eval_layout(self):
        config = load_scenario(SCENARIO_DIR / 'magi_eval.yaml')
        self.assertEqual(config.variants, ('baseline', 'attack', 'mitigated'))
        self.assertEqual(len(config.legit), 15)
        self.assertEqual(len(config.legit[0].image.layers), 10)
        self.assertEqual(config.attack.start, 20.0)
        self.assertIs(config.attack.strategy, AttackStrategy.SEQUENTIAL_CYCLE)

    def test_cutoff_sweep_layout(self):
        config = load_scenario(SCENARIO_DIR / 'magi_cutoff_sweep.yaml')
        self.assertEqual(config.kind, 'cutoff_sweep')
        self.assertEqual(config.sweep.throughputs, (125 * MB, 62.5 * MB))
        self.assertEqual(config.sweep.count, 60)

    def test_gke_patch_layout(self):
        config = load_scenario(SCENARIO_DIR / 'gke_deployment_patch.yaml')
        self.assertEqual(config.node_ids[-1], 'node-8')
        self.assertEqual(config.node_config.disk_capacity_bytes, 200 * GB)
        self.assertEqual(len(config.image_set), 8)
        self.assertEqual(config.image_set.names[0], 'registry.local/ml/tensorflow-notebook:1')

    def test_missing_file(self):
        with self.assertRaises(OSError):
            load_scenario(SCENARIO_DIR / 'does_not_exist.yaml')
