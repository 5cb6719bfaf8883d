import argparse
import logging
import time
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from lending.cli import exit_code_for
from lending.services import tracking
from lending.services.config import expand_sweep, load_config
from lending.services.core import ConfigurationError, LendingError
from lending.services.datagen import (
    augment_pool_from_model,
    export_pool_csv,
    fit_logistic_arrays,
    resample_pool_by_label,
)
from lending.services.harness import run_scenario
from lending.services.registry import resolve_pool
from lending.services.results import load_summaries, persist_results, report_tables, write_report

logger = logging.getLogger('lending.commands')


class Command(BaseCommand):
    help = 'Run lending-policy experiments: run | sweep | pool | report'

    def add_arguments(self, parser):
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument('--config', help='INI experiment config')
        common.add_argument('--out', help='Output directory (default MICROLEND_OUTPUT_DIR)')
        common.add_argument('--seed', type=int, help='Overrides [scenario] seed')
        common.add_argument('--profile', choices=['quick', 'paper'], help='Default sizes for unset keys')
        common.add_argument('--jobs', type=int, help='Parallel replications (default MICROLEND_JOBS)')

        sub = parser.add_subparsers(dest='command', required=True)
        sub.add_parser('run', parents=[common], help='Run the configured scenario')
        sub.add_parser('sweep', parents=[common], help='Run one scenario per [sweep] value')
        sub.add_parser('pool', parents=[common], help='Build or ingest a pool and write it as CSV')
        sub.add_parser('report', parents=[common], help='Aggregate summary.csv files into comparison tables')

    def handle(self, *args, **options):
        command = options['command']
        profile = options.get('profile') or settings.MICROLEND_DEFAULT_PROFILE
        jobs = options.get('jobs') or settings.MICROLEND_JOBS
        out_dir = Path(options.get('out') or settings.MICROLEND_OUTPUT_DIR)
        started = time.perf_counter()
        run = None
        try:
            cfg = load_config(options.get('config'), profile=profile, seed=options.get('seed'))
            run = tracking.start_run(command, cfg.scenario.name, cfg.seed, profile, cfg.as_dict(), str(out_dir))
            results = getattr(self, f'_{command}')(cfg, out_dir, jobs)
            tracking.finish_run(run, time.perf_counter() - started, results)
        except LendingError as e:
            logger.error(f"{command} failed: {e}")
            tracking.fail_run(run, time.perf_counter() - started, str(e))
            raise CommandError(str(e), returncode=exit_code_for(e))
        except CommandError:
            raise
        except Exception as e:
            logger.exception(f"{command} failed unexpectedly")
            tracking.fail_run(run, time.perf_counter() - started, repr(e))
            raise CommandError(f"unexpected error: {e}", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"{command} finished in {time.perf_counter() - started:.1f}s -> {out_dir}"))

    def _run(self, cfg, out_dir, jobs):
        results = [run_scenario(cfg.scenario, jobs=jobs)]
        persist_results(results, out_dir, cfg.as_dict(), cfg.seed)
        return results

    def _sweep(self, cfg, out_dir, jobs):
        if cfg.sweep is None:
            raise ConfigurationError("sweep needs a [sweep] section with param and values")
        expanded = expand_sweep(cfg.scenario, cfg.sweep)
        results = [run_scenario(scenario, jobs=jobs) for scenario, _ in expanded]
        persist_results(results, out_dir, cfg.as_dict(), cfg.seed, sweeps=[info for _, info in expanded])
        return results

    def _pool(self, cfg, out_dir, jobs):
        spec = cfg.pool
        sc = cfg.scenario
        rng = np.random.default_rng([cfg.seed, 0])
        base = resolve_pool(spec.source, spec.size, rng, seed=cfg.seed, n_features=sc.n_features,
                            interest_rate=sc.utility.interest_rate, mc_samples=sc.group_mc_samples)
        if spec.augment:
            model = fit_logistic_arrays(base.features, base.probs)
            pool = augment_pool_from_model(base.features, model, spec.size, rng)
        elif spec.default_fraction is not None:
            pool = resample_pool_by_label(base, spec.size, spec.default_fraction, rng)
        else:
            pool = base
        export_pool_csv(pool, out_dir / spec.output)
        return []

    def _report(self, cfg, out_dir, jobs):
        inputs = cfg.report_inputs or [str(out_dir)]
        tables = report_tables(load_summaries(inputs))
        write_report(tables, out_dir)
        return []
