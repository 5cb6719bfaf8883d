from django.core.management.base import BaseCommand
from django.db import DatabaseError
import json

from lending.models import ExperimentRun
from lending.services.harness import get_metrics


class Command(BaseCommand):
    help = 'Show the experiment run registry and in-process counters (counters reset on process restart)'

    def add_arguments(self, parser):
        parser.add_argument('--limit', type=int, default=20, help='Most recent runs to show')

    def handle(self, *args, **options):
        try:
            runs = list(ExperimentRun.objects.values(
                'id', 'command', 'scenario', 'seed', 'profile', 'status', 'wall_time', 'output_dir', 'created_at',
            )[:options['limit']])
        except DatabaseError as e:
            runs = []
            self.stderr.write(f"Run registry unavailable: {e}")
        self.stdout.write(json.dumps({'metrics': get_metrics(), 'runs': runs}, indent=2, default=str))
