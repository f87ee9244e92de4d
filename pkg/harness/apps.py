"""
App configuration for the harness Django app.
"""

# Django Imports
from django.apps import AppConfig


class HarnessConfig(AppConfig):
    """
    Configuration class for the 'harness' app.

    The harness owns experiment configuration, execution, metric output, the
    management commands and the record of completed runs.
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'harness'
    verbose_name = "Experiment Harness"
