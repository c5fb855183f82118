# Generated by Django 4.2.7 on 2026-10-18 09:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ScenarioRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(help_text='Scenario name from the [scenario] block', max_length=200)),
                ('config_path', models.CharField(help_text='Scenario file the run was started from', max_length=500)),
                ('seed', models.IntegerField(default=0, help_text='Scenario seed; trial seeds are spawned from it')),
                ('trials', models.PositiveIntegerField(default=1)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('started_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
                ('summary', models.JSONField(blank=True, default=dict, help_text='Aggregate summary document')),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('error', models.TextField(blank=True)),
            ],
            options={
                'verbose_name': 'Scenario run',
                'ordering': ['-started_at'],
            },
        ),
        migrations.CreateModel(
            name='TrialRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('index', models.PositiveIntegerField()),
                ('seed', models.BigIntegerField()),
                ('variant', models.CharField(max_length=20)),
                ('sd', models.FloatField(blank=True, help_text='Scheduling delay in s/GB', null=True)),
                ('cpu_avg', models.FloatField(blank=True, help_text='Average CPU over the attack window, percent', null=True)),
                ('attack_duration', models.FloatField(blank=True, help_text='Seconds', null=True)),
                ('gc_firings', models.PositiveIntegerField(default=0)),
                ('evictions', models.PositiveIntegerField(default=0)),
                ('tenant_slowdown', models.FloatField(blank=True, help_text='Largest tenant slowdown ratio', null=True)),
                ('legit_completion', models.FloatField(blank=True, help_text='Seconds until the last legit pod ran', null=True)),
                ('log_sha256', models.CharField(help_text="Hash of the trial's event log", max_length=64)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='trial_records', to='pullsim.scenariorun')),
            ],
            options={
                'ordering': ['run', 'index', 'variant'],
                'unique_together': {('run', 'index', 'variant')},
            },
        ),
    ]
