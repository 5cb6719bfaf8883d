"""WSGI entry point; serves the admin over the experiment run registry."""
import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'MicroLend.settings')

application = get_wsgi_application()
