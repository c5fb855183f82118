"""
WSGI config for the pullsim_site project.

Only the Django admin is served; it lists recorded scenario runs and trials.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'pullsim_site.settings')

application = get_wsgi_application()
