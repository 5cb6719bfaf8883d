from django.contrib import admin
from django.urls import path

# Importing the app admin registers the run registry models and site titles.
import lending.admin  # noqa: F401

urlpatterns = [
    path('admin/', admin.site.urls),
]
