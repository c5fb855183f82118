import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from pullsim.models import ScenarioRun, TrialRecord

QUICK = """
scenario:
  name: quick
  trials: 2
  seed: 3
  sample_interval: 1 s

costs:
  profile: explicit
  download_cpu_per_byte: 1 core-s/GB

images:
  set: custom
  base: 100 MB
  custom:
    - name: a
      layers: 200 MB
    - name: b
      layers: 2 x 150 MB

attack:
  strategy: ForceDeleteCycle
  shuffle: true
"""


class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        path = self.root / name
        path.write_text(text)
        return path

    def run_command(self, *args, **options):
        out = StringIO()
        call_command(*args, stdout=out, **options)
        return out.getvalue()


class RunScenarioCommandTests(CommandTestCase):
    def test_dry_run_of_a_bundled_scenario(self):
        output = self.run_command('run_scenario', 'magi_eval', dry_run=True)
        self.assertIn('magi_eval', output)
        self.assertIn('valid', output)
        self.assertEqual(ScenarioRun.objects.count(), 0)

    def test_exit_codes(self):
        cases = {
            2: self.write('parse.yaml', "scenario:\n  name: x\nattack:\n  inter_step_wait: 2\n"),
            3: self.write('invalid.yaml', "scenario:\n  name: x\n  trials: 0\n"),
            4: self.root / 'missing.yaml',
        }
        for code, path in cases.items():
            with self.subTest(code=code):
                with self.assertRaises(CommandError) as ctx:
                    self.run_command('run_scenario', str(path), dry_run=True)
                self.assertEqual(ctx.exception.returncode, code)

    def test_trials_override_is_validated(self):
        path = self.write('quick.yaml', QUICK)
        with self.assertRaises(CommandError) as ctx:
            self.run_command('run_scenario', str(path), trials=0, dry_run=True)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_run_writes_outputs_and_records(self):
        path = self.write('quick.yaml', QUICK)
        out_dir = self.root / 'out'
        output = self.run_command('run_scenario', str(path), out=str(out_dir), workers=1)
        self.assertIn('complete', output)

        summary = json.loads((out_dir / 'quick' / 'summary.json').read_text())
        self.assertEqual(summary['scenario'], 'quick')
        self.assertEqual(summary['variants']['attack']['aggregate']['sd']['n'], 2)
        for index in range(2):
            trial_dir = out_dir / 'quick' / f"trial-{index:03d}" / 'attack'
            self.assertTrue((trial_dir / 'events.log').exists())
            self.assertTrue((trial_dir / 'node-1.csv').exists())

        run = ScenarioRun.objects.get()
        self.assertEqual(run.status, ScenarioRun.STATUS_COMPLETED)
        self.assertEqual(run.trial_records.count(), 2)
        record = TrialRecord.objects.first()
        log = (out_dir / 'quick' / f"trial-{record.index:03d}" / record.variant / 'events.log').read_text()
        self.assertGreater(len(log), 0)
        self.assertGreater(record.sd, 0)

    def test_summary_only(self):
        path = self.write('quick.yaml', QUICK)
        out_dir = self.root / 'out'
        self.run_command('run_scenario', str(path), out=str(out_dir), workers=1, summary_only=True, trials=1)
        self.assertTrue((out_dir / 'quick' / 'summary.json').exists())
        self.assertFalse((out_dir / 'quick' / 'trial-000').exists())


class ReplayCheckCommandTests(CommandTestCase):
    def test_same_seed_replays_identically(self):
        path = self.write('quick.yaml', QUICK)
        for name in ('first', 'second'):
            self.run_command('run_scenario', str(path), out=str(self.root / name), workers=2, trials=1)
        log_a = self.root / 'first' / 'quick' / 'trial-000' / 'attack' / 'events.log'
        log_b = self.root / 'second' / 'quick' / 'trial-000' / 'attack' / 'events.log'
        self.assertIn('identical', self.run_command('replay_check', str(log_a), str(log_b)))

    def test_different_logs(self):
        a = self.write('a.log', "0.000000\t0\tPullQueued\n")
        b = self.write('b.log', "0.000000\t0\tPullStarted\n")
        with self.assertRaises(CommandError) as ctx:
            self.run_command('replay_check', str(a), str(b))
        self.assertEqual(ctx.exception.returncode, 1)

    def test_missing_log(self):
        a = self.write('a.log', "")
        with self.assertRaises(CommandError) as ctx:
            self.run_command('replay_check', str(a), str(self.root / 'nope.log'))
        self.assertEqual(ctx.exception.returncode, 4)
