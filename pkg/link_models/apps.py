"""
App configuration for the link_models Django app.
"""

# Django Imports
from django.apps import AppConfig


class LinkModelsConfig(AppConfig):
    """
    Configuration class for the 'link_models' app, which generates the
    per-round active sets under the unreliable uplink schemes.
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'link_models'
    verbose_name = "Link Models"
