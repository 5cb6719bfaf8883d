"""
Programmatic entry point: `execute(["run", "--config", "exp.ini"])` returns the exit status
that `python manage.py microlend run --config exp.ini` would.

Exit codes:
    0  success
    1  unexpected error
    2  config file syntax error
    3  invalid configuration (unknown key, bad value, empty pool)
    4  file-system failure while reading or writing results
    5  contract or domain violation inside the engine
    6  data problems (degenerate fits, malformed CSV, zero-probability records)
"""
from __future__ import annotations

import os
import sys
from typing import Sequence

from .services.core import (
    ConfigParseError,
    ConfigurationError,
    ContractViolation,
    DataIntegrityError,
    DegenerateFitError,
    DegenerateNormalizationError,
    DomainError,
    ParseError,
    ResultsIOError,
)

EXIT_CODES = (
    (ConfigParseError, 2),
    (ConfigurationError, 3),
    (ResultsIOError, 4),
    (ContractViolation, 5),
    (DomainError, 5),
    (DataIntegrityError, 6),
    (DegenerateFitError, 6),
    (DegenerateNormalizationError, 6),
    (ParseError, 6),
)


def exit_code_for(exc: BaseException) -> int:
    for error_class, code in EXIT_CODES:
        if isinstance(exc, error_class):
            return code
    return 1


def execute(argv: Sequence[str]) -> int:
    import django
    from django.core.management import call_command
    from django.core.management.base import CommandError

    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'MicroLend.settings')
    django.setup()
    try:
        call_command('microlend', *argv)
    except CommandError as e:
        sys.stderr.write(f"microlend: {e}\n")
        return e.returncode
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    return 0


def main() -> None:
    sys.exit(execute(sys.argv[1:]))


if __name__ == '__main__':
    main()
