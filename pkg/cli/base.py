"""
Shared plumbing for the cofie management commands.

Every command echoes its resolved configuration as `# key = value` lines,
maps library errors to exit code 1 and leaves argparse usage errors (exit
code 2) to Django's command parser.
"""
import logging

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers
from rest_framework.renderers import JSONRenderer

from cofie.exceptions import CofieError

logger = logging.getLogger(__name__)

USAGE_ERROR = 2
DOMAIN_ERROR = 1


class CofieCommand(BaseCommand):
    """Base command: subclasses implement run(**options) and may return a report."""

    requires_system_checks = []
    json_output = False

    def handle(self, *args, **options):
        self.json_output = options.get('json', False)
        try:
            return self.run(*args, **options)
        except serializers.ValidationError as exc:
            raise CommandError(f"invalid configuration: {_flatten(exc.detail)}", returncode=USAGE_ERROR)
        except CofieError as exc:
            logger.debug(f"{type(exc).__name__} context: {exc.context}")
            raise CommandError(str(exc), returncode=DOMAIN_ERROR)

    def run(self, *args, **options):
        raise NotImplementedError('subclasses of CofieCommand must provide a run() method')

    def usage_error(self, message):
        raise CommandError(message, returncode=USAGE_ERROR)

    def echo_config(self, config):
        """Write the resolved configuration; to stderr when stdout carries JSON."""
        stream = self.stderr if self.json_output else self.stdout
        for key, value in config.items():
            stream.write(f"# {key} = {_format(value)}")

    def write_report(self, data, lines=()):
        if self.json_output:
            self.stdout.write(JSONRenderer().render(data).decode())
            return
        for line in lines:
            self.stdout.write(line)

    def write_pairs(self, data):
        self.write_report(data, [f"{key}={_format(value)}" for key, value in data.items()])


def add_json_flag(parser):
    parser.add_argument('--json', action='store_true', help='Print the report as JSON')


def _format(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ','.join(_format(item) for item in value)
    return str(value)


def _flatten(detail):
    if isinstance(detail, dict):
        return '; '.join(f"{key}: {_flatten(value)}" for key, value in detail.items())
    if isinstance(detail, list):
        return ' '.join(_flatten(item) for item in detail)
    return str(detail)
