"""
Admin configuration for the harness app, so recorded runs can be browsed.
"""

# Django Imports
from django.contrib import admin

# Local Imports
from .models import ExperimentRun


@admin.register(ExperimentRun)
class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = (
        'config_digest',
        'algorithm',
        'link_scheme',
        'seed',
        'rounds',
        'final_distance',
        'mean_distance_last_100',
        'created_at',
    )
    search_fields = (
        'config_digest',
        'output_path',
    )
    list_filter = (
        'algorithm',
        'link_scheme',
    )
    readonly_fields = ('created_at',)
