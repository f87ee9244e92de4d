"""
URL configuration for the Laureon_FLS project.

The simulator has no pages of its own. The only routed surface is the Django
admin, used to browse experiment runs recorded with ``run --record`` or
``sweep --record``.
"""

# Django Imports
from django.contrib import admin
from django.urls import path
from django.views.generic.base import RedirectView

urlpatterns = [
    path('admin/', admin.site.urls),

    # Everything else lands on the run records.
    path('', RedirectView.as_view(url='/admin/harness/experimentrun/', permanent=False)),
]
