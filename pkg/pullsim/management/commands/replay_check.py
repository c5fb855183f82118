from django.core.management.base import BaseCommand, CommandError

from pullsim.sim.trial import replay_check

from ._common import EXIT_IO_ERROR


class Command(BaseCommand):
    help = 'Compare two event logs byte for byte (exit 1 if they differ)'

    def add_arguments(self, parser):
        parser.add_argument('log_a')
        parser.add_argument('log_b')

    def handle(self, *args, **options):
        try:
            identical = replay_check(options['log_a'], options['log_b'])
        except OSError as e:
            raise CommandError(str(e), returncode=EXIT_IO_ERROR)
        if not identical:
            raise CommandError("event logs differ", returncode=1)
        self.stdout.write(self.style.SUCCESS("✅ event logs are identical"))
