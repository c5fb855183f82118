from django.contrib import admin

from .models import ScenarioRun, TrialRecord


class TrialRecordInline(admin.TabularInline):
    model = TrialRecord
    extra = 0
    readonly_fields = ('index', 'seed', 'variant', 'sd', 'cpu_avg', 'attack_duration',
                       'gc_firings', 'evictions', 'tenant_slowdown', 'legit_completion', 'log_sha256')


@admin.register(ScenarioRun)
class ScenarioRunAdmin(admin.ModelAdmin):
    list_display = ('name', 'seed', 'trials', 'status', 'started_at', 'finished_at')
    list_filter = ('status', 'name')
    search_fields = ('name', 'config_path')
    inlines = [TrialRecordInline]


@admin.register(TrialRecord)
class TrialRecordAdmin(admin.ModelAdmin):
    list_display = ('run', 'index', 'variant', 'sd', 'cpu_avg', 'attack_duration', 'gc_firings', 'evictions')
    list_filter = ('variant', 'run__name')
