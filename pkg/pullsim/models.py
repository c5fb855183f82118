from django.db import models


class ScenarioRun(models.Model):
    """
    One invocation of a scenario: every trial and variant it ran, plus the
    aggregate summary written to summary.json.
    """
    STATUS_RUNNING = 'running'
    STATUS_COMPLETED = 'completed'
    STATUS_FAILED = 'failed'
    STATUS_CHOICES = [
        (STATUS_RUNNING, 'Running'),
        (STATUS_COMPLETED, 'Completed'),
        (STATUS_FAILED, 'Failed'),
    ]

    name = models.CharField(max_length=200, help_text="Scenario name from the [scenario] block")
    config_path = models.CharField(max_length=500, help_text="Scenario file the run was started from")
    seed = models.IntegerField(default=0, help_text="Scenario seed; trial seeds are spawned from it")
    trials = models.PositiveIntegerField(default=1)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default=STATUS_RUNNING)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)
    summary = models.JSONField(default=dict, blank=True, help_text="Aggregate summary document")
    output_dir = models.CharField(max_length=500, blank=True)
    error = models.TextField(blank=True)

    class Meta:
        verbose_name = "Scenario run"
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.name} (seed {self.seed}, {self.status})"


class TrialRecord(models.Model):
    """Headline numbers of one (trial, variant) of a run."""

    run = models.ForeignKey(ScenarioRun, on_delete=models.CASCADE, related_name='trial_records')
    index = models.PositiveIntegerField()
    seed = models.BigIntegerField()
    variant = models.CharField(max_length=20)
    sd = models.FloatField(null=True, blank=True, help_text="Scheduling delay in s/GB")
    cpu_avg = models.FloatField(null=True, blank=True, help_text="Average CPU over the attack window, percent")
    attack_duration = models.FloatField(null=True, blank=True, help_text="Seconds")
    gc_firings = models.PositiveIntegerField(default=0)
    evictions = models.PositiveIntegerField(default=0)
    tenant_slowdown = models.FloatField(null=True, blank=True, help_text="Largest tenant slowdown ratio")
    legit_completion = models.FloatField(null=True, blank=True, help_text="Seconds until the last legit pod ran")
    log_sha256 = models.CharField(max_length=64, help_text="Hash of the trial's event log")

    class Meta:
        ordering = ['run', 'index', 'variant']
        unique_together = [('run', 'index', 'variant')]

    @classmethod
    def from_result(cls, run, result):
        summary = result.summary
        slowdowns = list((summary.get('tenant_slowdown') or {}).values())
        return cls(
            run=run,
            index=result.index,
            seed=result.seed,
            variant=result.variant,
            sd=summary.get('sd'),
            cpu_avg=summary.get('cpu_avg'),
            attack_duration=summary.get('attack_duration'),
            gc_firings=summary.get('gc_firings', 0),
            evictions=summary.get('evictions', 0),
            tenant_slowdown=max(slowdowns) if slowdowns else None,
            legit_completion=summary.get('legit_completion'),
            log_sha256=result.log_digest,
        )

    def __str__(self):
        return f"{self.run.name} #{self.index} {self.variant}"
