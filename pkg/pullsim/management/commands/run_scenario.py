import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.utils import timezone

from pullsim.models import ScenarioRun, TrialRecord
from pullsim.sim.exceptions import ScenarioValidationError
from pullsim.sim.trial import ScenarioRunner

from ._common import EXIT_IO_ERROR, EXIT_VALIDATION_ERROR, load_or_fail, pullsim_setting

logger = logging.getLogger('pullsim.runner')


class Command(BaseCommand):
    help = 'Run a scenario file (or a bundled scenario by name) and write logs, CSVs and a summary'

    def add_arguments(self, parser):
        """Add command line arguments."""
        parser.add_argument('config', help='Scenario file path or bundled scenario name')
        parser.add_argument('--trials', type=int, help='Override the number of trials')
        parser.add_argument('--seed', type=int, help='Override the scenario seed')
        parser.add_argument('--out', help='Output directory (default: PULLSIM OUTPUT_DIR)')
        parser.add_argument(
            '--summary-only',
            action='store_true',
            help='Write summary.json only, no event logs or CSVs'
        )
        parser.add_argument(
            '--dry-run',
            action='store_true',
            help='Parse and validate the scenario without running it'
        )
        parser.add_argument('--workers', type=int, help='Trial worker threads (default: PULLSIM TRIAL_WORKERS)')

    def handle(self, *args, **options):
        """Main command handler."""
        config = load_or_fail(options['config'])
        if options.get('trials') is not None:
            config.trials = options['trials']
        if options.get('seed') is not None:
            config.seed = options['seed']
        if config.trials < 1:
            raise CommandError("--trials must be >= 1", returncode=EXIT_VALIDATION_ERROR)

        self.stdout.write(f"📋 {config.name}: kind={config.kind} trials={config.trials} seed={config.seed} "
                          f"variants={','.join(config.variants)} nodes={config.node_count}")
        if options.get('dry_run'):
            self.stdout.write(self.style.SUCCESS("✅ Scenario is valid (dry run, nothing executed)"))
            return

        out_dir = Path(options.get('out') or pullsim_setting('OUTPUT_DIR'))
        workers = options.get('workers') or pullsim_setting('TRIAL_WORKERS')
        runner = ScenarioRunner(config, out_dir, workers, options.get('summary_only', False),
                                pullsim_setting('HORIZON_S'))

        record = None
        if pullsim_setting('RECORD_RUNS'):
            record = ScenarioRun.objects.create(name=config.name, config_path=str(config.source or ''),
                                                seed=config.seed, trials=config.trials)
        try:
            report = runner.run()
        except ScenarioValidationError as e:
            self._fail(record, e)
            raise CommandError(str(e), returncode=EXIT_VALIDATION_ERROR)
        except OSError as e:
            self._fail(record, e)
            raise CommandError(f"could not write outputs: {e}", returncode=EXIT_IO_ERROR)

        document = report.summary_document()
        if record is not None:
            record.status = ScenarioRun.STATUS_COMPLETED
            record.finished_at = timezone.now()
            record.summary = document
            record.output_dir = str(report.output_dir or '')
            record.save()
            if config.kind != 'cutoff_sweep':
                TrialRecord.objects.bulk_create(TrialRecord.from_result(record, r) for r in report.results)

        for variant, block in document['variants'].items():
            numbers = block['aggregate']
            shown = ', '.join(f"{key}={value['mean']:.2f}" for key, value in numbers.items()
                              if key in ('sd', 'cpu_avg', 'attack_duration', 'legit_completion', 'boundary_mb'))
            self.stdout.write(f"   {variant}: {shown or 'no numeric results'}")
        self.stdout.write(self.style.SUCCESS(f"🎉 {config.name} complete, outputs in {report.output_dir}"))

    def _fail(self, record, error):
        logger.error(f"scenario run failed: {error}")
        if record is not None:
            record.status = ScenarioRun.STATUS_FAILED
            record.finished_at = timezone.now()
            record.error = str(error)
            record.save()
