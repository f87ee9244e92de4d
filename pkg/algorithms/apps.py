"""
App configuration for the algorithms Django app.
"""

# Django Imports
from django.apps import AppConfig


class AlgorithmsConfig(AppConfig):
    """
    Configuration class for the 'algorithms' app (one-round transitions of
    FedPBC and the FedAvg-family baselines).
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'algorithms'
    verbose_name = "Federated Algorithms"
