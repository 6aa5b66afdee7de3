import django.utils.timezone
from django.db import migrations, models
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('command', models.CharField(choices=[('converge', 'Converge'), ('distill', 'Distill'), ('verify', 'Verify'), ('sample', 'Sample')], max_length=10)),
                ('status', models.CharField(choices=[('OK', 'OK'), ('ASSERTION_FAILED', 'Assertion failed'), ('CONFIG_ERROR', 'Config error'), ('VALIDATION_ERROR', 'Validation error')], default='OK', max_length=20)),
                ('seed', models.PositiveBigIntegerField(default=0)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('summary', models.JSONField(blank=True, default=dict)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(default=django.utils.timezone.now)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['command', 'status'], name='lab_run_command_status_idx')],
            },
        ),
    ]
