"""
App configuration for the objectives Django app.
"""

# Django Imports
from django.apps import AppConfig


class ObjectivesConfig(AppConfig):
    """
    Configuration class for the 'objectives' app (local objectives and
    gradient oracles).
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'objectives'
    verbose_name = "Objectives"
