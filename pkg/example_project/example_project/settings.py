"""
Django settings for example_project.

This is a minimal Django project to demonstrate django_papsmear usage.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = 'django-insecure-example-key-change-in-production'

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = True

ALLOWED_HOSTS: list[str] = []

INSTALLED_APPS = [
    'django_papsmear',
]

# The app keeps no models; management commands still expect a database entry
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

USE_TZ = True

PAPSMEAR = {
    'N_JOBS': int(os.environ.get('PAPSMEAR_N_JOBS', os.cpu_count() or 1)),
    'OUTPUT_DIR': str(BASE_DIR / 'papsmear-output'),
    'REPRODUCIBLE': os.environ.get('PAPSMEAR_REPRODUCIBLE', '') == '1',
}

# Logging configuration to see django_papsmear activity
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
    },
    'loggers': {
        'django_papsmear': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
    },
}
