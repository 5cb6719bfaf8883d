"""
Best-effort run registry writes.

Experiments never fail because the registry database is missing or
unmigrated; such failures are logged and the run continues.
"""
from __future__ import annotations

import logging
from typing import Any, Dict, Optional, Sequence

from django.db import DatabaseError
from django.utils import timezone

from .harness import ScenarioResult

logger = logging.getLogger(__name__)

# pytest-django blocks database access with RuntimeError outside django_db tests
_REGISTRY_ERRORS = (DatabaseError, RuntimeError)


def start_run(command: str, scenario: str, seed: int, profile: str, config: Dict[str, Any],
              output_dir: str) -> Optional[Any]:
    from ..models import ExperimentRun

    try:
        return ExperimentRun.objects.create(command=command, scenario=scenario, seed=seed, profile=profile,
                                            status='running', config=config, output_dir=output_dir)
    except _REGISTRY_ERRORS as e:
        logger.warning(f"Run registry unavailable, continuing without it: {e}")
        return None


def finish_run(run, wall_time: float, results: Sequence[ScenarioResult] = ()) -> None:
    if run is None:
        return
    from ..models import AlgorithmSummary

    try:
        summaries = [
            AlgorithmSummary(
                run=run, scenario=result.config.name, algorithm=s.algorithm, replication=s.replication,
                converged_utility=_finite(s.converged_utility), normalized_utility=_finite(s.normalized_utility),
                rise_time=s.rise_time, post_shift_rise_time=s.post_shift_rise_time,
                converged_approval_rate=_finite(s.converged_approval_rate),
                converged_default_rate=_finite(s.converged_default_rate),
            )
            for result in results for s in result.all_series()
        ]
        AlgorithmSummary.objects.bulk_create(summaries)
        run.status = 'completed'
        run.wall_time = round(wall_time, 3)
        run.completed_at = timezone.now()
        run.save(update_fields=['status', 'wall_time', 'completed_at'])
    except _REGISTRY_ERRORS as e:
        logger.warning(f"Could not record run {run.pk} in the registry: {e}")


def fail_run(run, wall_time: float, message: str) -> None:
    if run is None:
        return
    try:
        run.status = 'failed'
        run.error_message = message
        run.wall_time = round(wall_time, 3)
        run.completed_at = timezone.now()
        run.save(update_fields=['status', 'error_message', 'wall_time', 'completed_at'])
    except _REGISTRY_ERRORS as e:
        logger.warning(f"Could not mark run {run.pk} as failed: {e}")


def _finite(value) -> Optional[float]:
    if value is None or value != value:
        return None
    return float(value)
