from django.core.management.base import BaseCommand, CommandError

from pullsim.sim.calibration import ANCHOR_CPU_GB, ANCHOR_SD_GB, REFERENCE_SD_MB, calibrated_result
from pullsim.sim.exceptions import CalibrationError


class Command(BaseCommand):
    help = 'Fit the per-byte cost model to the local-testbed anchors and print it'

    def handle(self, *args, **options):
        self.stdout.write("🔧 Calibrating cost model against the local testbed...")
        try:
            result = calibrated_result()
        except CalibrationError as e:
            raise CommandError(str(e))
        costs = result.costs
        self.stdout.write(f"   download_cpu_per_byte = {costs.download_cpu_per_byte * 1e9:.4f} core-s/GB")
        self.stdout.write(f"   unpack_cpu_per_byte   = {costs.unpack_cpu_per_byte * 1e9:.4f} core-s/GB")
        self.stdout.write(f"   fixed: unpack_max_cores {costs.unpack_max_cores}, "
                          f"layer_commit_time {costs.layer_commit_time} s")
        self.stdout.write(f"   SD(VariableGB)  {result.sd_gb:.2f} s/GB (anchor {ANCHOR_SD_GB})")
        self.stdout.write(f"   CPU(VariableGB) {result.cpu_gb:.2%} (anchor {ANCHOR_CPU_GB:.2%})")
        self.stdout.write(f"   SD(VariableMB)  {result.sd_mb:.2f} s/GB predicted (measured {REFERENCE_SD_MB})")
        self.stdout.write(f"   CPU(VariableMB) {result.cpu_mb:.2%} predicted")
        self.stdout.write(self.style.SUCCESS(f"✅ Converged after {result.evaluations} simulated runs"))
