"""
WSGI entry point for serving the experiment-record admin of Laureon_FLS.

The simulator itself is driven from ``manage.py``; the WSGI application only
exists so that recorded runs (``harness.ExperimentRun``) can be browsed
through the Django admin behind gunicorn:

    gunicorn Laureon_FLS.wsgi:application
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Laureon_FLS.settings')

application = get_wsgi_application()
