from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from pullsim.sim.exceptions import ConfigParseError, ScenarioValidationError
from pullsim.sim.scenario import load_scenario

EXIT_PARSE_ERROR = 2
EXIT_VALIDATION_ERROR = 3
EXIT_IO_ERROR = 4


def pullsim_setting(key):
    return settings.PULLSIM[key]


def resolve_scenario_path(name_or_path) -> Path:
    """A file path, or the name of a bundled scenario."""
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = Path(pullsim_setting('SCENARIO_DIR')) / f"{name_or_path}.yaml"
    if bundled.exists():
        return bundled
    return path


def load_or_fail(name_or_path):
    """Load a scenario, turning simulator errors into CommandError exit codes."""
    path = resolve_scenario_path(name_or_path)
    try:
        return load_scenario(path)
    except ConfigParseError as e:
        raise CommandError(f"{path}: {e}", returncode=EXIT_PARSE_ERROR)
    except ScenarioValidationError as e:
        raise CommandError(f"{path}: {e}", returncode=EXIT_VALIDATION_ERROR)
    except OSError as e:
        raise CommandError(f"{path}: {e}", returncode=EXIT_IO_ERROR)
