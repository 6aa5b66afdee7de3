"""
Shared plumbing for the experiment commands

USAGE: python manage.py <command> --config <path> [--out <dir>] [--seed <int>] [--json]

Exit codes: 0 ok, 1 failed check, 2 config error, 3 validation error.
"""

import json
import logging
import os
import time
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError
from django.utils import timezone
from rest_framework import serializers

from lab.exceptions import LabError
from lab.models import ExperimentRun
from lab.reporting import to_json, write_json
from lab.serializers import ExperimentConfigSerializer

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2


class ExperimentCommand(BaseCommand):
    """Load a config, run one experiment and report it

    Subclasses set ``command`` and implement ``run(experiment, out)``, which
    returns a summary dict whose ``checks`` entry maps check names to booleans.
    """

    command = None

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON experiment config')
        parser.add_argument('--out', default=None, help='Output directory')
        parser.add_argument('--seed', type=int, default=None, help='Override the config seed')
        parser.add_argument('--json', action='store_true', help='Print a machine-readable summary')

    def handle(self, *args, **options):
        self.started_at = timezone.now()
        self.clock = time.perf_counter()
        self.as_json = options['json']
        self.raw = {}
        self.seed = options['seed'] or 0
        self.out = None
        logger.info("%s started with %s", self.command, options['config'])

        try:
            self.raw = self.load_config(options['config'])
            experiment = self.build(self.raw).with_seed(options['seed'])
            self.seed = experiment.seed
            self.out = self.output_dir(options['out'], experiment)
            summary = self.run(experiment, self.out)
        except LabError as exc:
            self.fail(str(exc), exc.exit_code, getattr(exc, 'diagnostics', None))
        except CommandError as exc:
            self.fail(str(exc), exc.returncode)

        failed = sorted(name for name, ok in summary.get('checks', {}).items() if not ok)
        summary['passed'] = not failed
        if failed:
            self.fail(f"failed checks: {', '.join(failed)}", 1, summary)
        self.finish(ExperimentRun.Status.OK, summary)
        if self.as_json:
            self.stdout.write(to_json(self.report(ExperimentRun.Status.OK, summary)))
        else:
            self.stdout.write(self.style.SUCCESS(f"{self.command} finished, results in {self.out}"))

    def run(self, experiment, out):
        raise NotImplementedError

    def load_config(self, path):
        try:
            with open(path) as fh:
                return json.load(fh)
        except json.JSONDecodeError as exc:
            raise CommandError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                               returncode=CONFIG_ERROR)
        except OSError as exc:
            raise CommandError(f"cannot read config {path}: {exc}", returncode=CONFIG_ERROR)

    def build(self, raw):
        if not isinstance(raw, dict):
            raise CommandError("config must be a JSON object", returncode=CONFIG_ERROR)
        serializer = ExperimentConfigSerializer(data=raw)
        try:
            serializer.is_valid(raise_exception=True)
        except serializers.ValidationError as exc:
            raise CommandError(f"invalid config: {json.dumps(exc.detail)}", returncode=CONFIG_ERROR)
        return serializer.save()

    def output_dir(self, option, experiment):
        out = Path(option or experiment.output_dir or Path(settings.DI4C_OUTPUT_DIR) / self.command)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CommandError(f"cannot create output directory {out}: {exc}", returncode=CONFIG_ERROR)
        if not os.access(out, os.W_OK):
            raise CommandError(f"output directory {out} is not writable", returncode=CONFIG_ERROR)
        return out

    def fail(self, message, code, summary=None):
        status = ExperimentRun.status_for(code)
        summary = dict(summary or {}, error=message)
        self.finish(status, summary)
        if self.as_json:
            self.stdout.write(to_json(self.report(status, summary)))
        logger.error("%s failed (exit %d): %s", self.command, code, message)
        raise CommandError(message, returncode=code)

    def report(self, status, summary):
        return {
            'command': self.command,
            'status': status,
            'exit_code': ExperimentRun.EXIT_CODES[status],
            'seed': self.seed,
            'output_dir': str(self.out) if self.out else None,
            'summary': summary,
        }

    def finish(self, status, summary):
        """Write metadata.json and record the run; neither may mask the outcome"""
        finished_at = timezone.now()
        if self.out is not None:
            write_json(self.out / 'metadata.json', {
                **self.report(status, summary),
                'config': self.raw,
                'started_at': self.started_at.isoformat(),
                'finished_at': finished_at.isoformat(),
                'wall_time': time.perf_counter() - self.clock,
            })
        if not settings.DI4C_RECORD_RUNS:
            return
        try:
            ExperimentRun.objects.create(
                command=self.command,
                status=status,
                seed=self.seed,
                config=json.loads(to_json(self.raw)),
                summary=json.loads(to_json(summary)),
                output_dir=str(self.out or ''),
                created_at=self.started_at,
                finished_at=finished_at,
            )
        except DatabaseError as exc:
            logger.warning("could not record the %s run: %s", self.command, exc)
