"""
Database Models for recorded experiment runs
"""

import uuid

from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """
    One management-command invocation
    Status: OK, ASSERTION_FAILED, CONFIG_ERROR, VALIDATION_ERROR
    """

    class Command(models.TextChoices):
        CONVERGE = 'converge', 'Converge'
        DISTILL = 'distill', 'Distill'
        VERIFY = 'verify', 'Verify'
        SAMPLE = 'sample', 'Sample'

    class Status(models.TextChoices):
        OK = 'OK', 'OK'
        ASSERTION_FAILED = 'ASSERTION_FAILED', 'Assertion failed'
        CONFIG_ERROR = 'CONFIG_ERROR', 'Config error'
        VALIDATION_ERROR = 'VALIDATION_ERROR', 'Validation error'

    EXIT_CODES = {
        Status.OK: 0,
        Status.ASSERTION_FAILED: 1,
        Status.CONFIG_ERROR: 2,
        Status.VALIDATION_ERROR: 3,
    }

    id = models.UUIDField(
        primary_key=True,
        default=uuid.uuid4,
        editable=False
    )
    command = models.CharField(max_length=10, choices=Command.choices)
    status = models.CharField(
        max_length=20,
        choices=Status.choices,
        default=Status.OK
    )
    seed = models.PositiveBigIntegerField(default=0)
    config = models.JSONField(default=dict, blank=True)
    summary = models.JSONField(default=dict, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)

    created_at = models.DateTimeField(default=timezone.now)
    finished_at = models.DateTimeField(null=True, blank=True)

    @classmethod
    def status_for(cls, exit_code):
        """Map a process exit code back to a status"""
        for status, code in cls.EXIT_CODES.items():
            if code == exit_code:
                return status
        return cls.Status.ASSERTION_FAILED

    @property
    def exit_code(self):
        return self.EXIT_CODES[self.status]

    @property
    def duration(self):
        """Seconds between start and finish, None while running"""
        if self.finished_at is None:
            return None
        return (self.finished_at - self.created_at).total_seconds()

    def __str__(self):
        return f"{self.command} seed={self.seed} ({self.status})"

    class Meta:
        ordering = ['-created_at']
        indexes = [
            models.Index(fields=['command', 'status'], name='lab_run_command_status_idx'),
        ]
