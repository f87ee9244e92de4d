"""
App configuration for the analysis Django app.
"""

# Django Imports
from django.apps import AppConfig


class AnalysisConfig(AppConfig):
    """
    Configuration class for the 'analysis' app, which holds the exact oracles:
    FedAvg's limit, mixing matrices and their spectra, and consensus error.
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'analysis'
    verbose_name = "Analysis Oracles"
