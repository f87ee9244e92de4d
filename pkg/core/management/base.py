"""
Defines the base class for the simulator's management commands, which maps
the project's exceptions onto the documented exit codes.
"""

# Standard Library Imports
import sys

# Django Imports
from django.core.management.base import BaseCommand, CommandError, CommandParser

# Local Imports
from core.exceptions import ConfigurationError, DomainError, OracleMismatch

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_INTERNAL_ERROR = 2


def describe_configuration_error(exc: ConfigurationError) -> str:
    """Flattens a (possibly field-keyed) ConfigurationError into one line per problem."""
    if hasattr(exc, 'error_dict'):
        return "; ".join(
            f"{field}: {message}"
            for field, messages in exc.message_dict.items()
            for message in messages
        )
    return "; ".join(exc.messages)


class SimulationCommandParser(CommandParser):
    """
    argparse exits with status 2 on usage errors, which the simulator reserves
    for internal failures; usage errors exit with 1 instead.
    """
    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=EXIT_CONFIG_ERROR)


class SimulationCommand(BaseCommand):
    """
    Base class for simulator commands.

    Subclasses implement `handle` as usual. Configuration and domain errors
    leave the command with exit code 1, oracle mismatches with exit code 2.
    """
    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser.__class__ = SimulationCommandParser
        return parser

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except ConfigurationError as exc:
            raise CommandError(
                f"Invalid configuration: {describe_configuration_error(exc)}",
                returncode=EXIT_CONFIG_ERROR,
            ) from exc
        except DomainError as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG_ERROR) from exc
        except OracleMismatch as exc:
            raise CommandError(f"Check failed: {exc}", returncode=EXIT_INTERNAL_ERROR) from exc
